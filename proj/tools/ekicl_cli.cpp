// ekicl command-line driver. Exit codes: 0 ok, 1 usage, 2 data, 3 transport.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ekicl/ekicl.hpp"

namespace fs = std::filesystem;
using namespace ekicl;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string backend;
  std::string out;
};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "backend",   "base_url",   "api_key_env", "model",   "temperature", "max_tokens", "timeout_ms",
      "max_retries", "max_in_flight", "fixed_word", "seed", "lambda1",     "lambda2",    "threshold",
      "label_ad",  "label_hc",   "lexicons",    "epochs",  "lr",          "hidden",     "batch",
      "temp"};
  return keys;
}

KeyValueConfig load_config(const Globals& g) {
  KeyValueConfig cfg;
  if (!g.config_path.empty()) cfg = KeyValueConfig::load(g.config_path);
  for (const auto& [key, value] : cfg.values()) {
    if (!known_keys().count(key)) throw usage_error("unknown config key '" + key + "'");
  }
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  if (!g.backend.empty()) cfg.set("backend", g.backend);
  return cfg;
}

Lexicons lexicons_from(const KeyValueConfig& cfg) {
  if (auto dir = cfg.get("lexicons")) return Lexicons::load(*dir);
  return Lexicons::defaults();
}

EvalConfig eval_config_from(const KeyValueConfig& cfg) {
  EvalConfig ec;
  auto& gw = ec.gateway;
  const std::string backend = cfg.get_or("backend", "mock-echo");
  const auto parsed = parse_backend(backend);
  if (!parsed) throw usage_error("unknown backend '" + backend + "'");
  gw.backend = *parsed;
  gw.base_url = cfg.get_or("base_url", gw.base_url);
  gw.api_key_env = cfg.get_or("api_key_env", gw.api_key_env);
  gw.model_name = cfg.get_or("model", gw.model_name);
  gw.temperature = cfg.number_or("temperature", gw.temperature);
  gw.max_tokens = cfg.number_or("max_tokens", gw.max_tokens);
  gw.timeout = std::chrono::milliseconds(cfg.number_or<long>("timeout_ms", gw.timeout.count()));
  gw.max_retries = cfg.number_or("max_retries", gw.max_retries);
  gw.max_in_flight = cfg.number_or("max_in_flight", gw.max_in_flight);
  gw.fixed_word = cfg.get_or("fixed_word", gw.fixed_word);
  ec.seed = cfg.number_or<std::uint64_t>("seed", ec.seed);
  gw.seed = ec.seed;
  ec.lambda1 = cfg.number_or("lambda1", ec.lambda1);
  ec.lambda2 = cfg.number_or("lambda2", ec.lambda2);
  ec.threshold = cfg.number_or("threshold", ec.threshold);
  if (cfg.has("label_ad") || cfg.has("label_hc")) {
    ec.label_pair = LabelPair(cfg.get_or("label_ad", "Bad"), cfg.get_or("label_hc", "Good"));
  }
  gw.validate();
  return ec;
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path);
  write(out);
  if (!out) throw data_error("write failed: " + path);
}

std::vector<EmbeddedTranscript> load_split(const std::string& path) {
  if (path.empty()) return {};
  return read_ingest(path);
}

struct ModelInputs {
  std::string train, eval, params;
  bool no_assessor = false;
};

void add_model_inputs(CLI::App* cmd, ModelInputs& in) {
  cmd->add_option("--train", in.train, "training split (ingest JSONL); demo pool and standard profile")->required();
  cmd->add_option("--eval", in.eval, "evaluation split (ingest JSONL)");
  cmd->add_option("--params", in.params, "assessor checkpoint from train-slm");
}

PreparedCorpus prepare_inputs(const ModelInputs& in, const KeyValueConfig& cfg) {
  const auto train = load_split(in.train);
  const auto eval = in.eval.empty() ? train : load_split(in.eval);
  std::optional<AssessorParams> params;
  if (!in.params.empty()) params = load_params(in.params);
  return prepare(train, eval, params ? &*params : nullptr, lexicons_from(cfg));
}

// Exit code 3 when every learner request failed; individual failures are warnings.
int report_transport(std::span<const PredictionRecord> records) {
  std::size_t total = 0, failed = 0;
  for (const auto& r : records) {
    for (const auto& l : r.learners) {
      ++total;
      if (!l.error.empty()) {
        ++failed;
        fmt::print(stderr, "warning: {} ({}): {}\n", r.query_id, r.mode, l.error);
      }
    }
  }
  return total > 0 && failed == total ? 3 : 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Transport:
    case ErrorKind::Timeout: return 3;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ekicl: transcript screening with retrieved in-context demonstrations"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "seed for retrieval, jitter and training");
  app.add_option("--backend", g.backend, "http | mock-echo | mock-threshold | mock-fixed");
  app.add_option("--out", g.out, "output file (default stdout)");
  app.fallthrough();

  int rc = 0;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse .cha files and attach embeddings, or generate the fixture");
  std::string corpus_dir, labels, embeddings, corpus_json;
  std::size_t synth_dim = 0;
  bool fixture = false, with_inv = false;
  ingest->add_option("--corpus", corpus_dir, "directory of .cha files");
  ingest->add_option("--labels", labels, "id,label manifest");
  ingest->add_option("--embeddings", embeddings, "extractor output (ingest JSONL)");
  ingest->add_option("--synthetic-dim", synth_dim, "hash-based token embeddings of this dimension");
  ingest->add_option("--corpus-json", corpus_json, "also write the token corpus JSON for the extractor");
  ingest->add_flag("--include-investigator", with_inv, "keep INV utterances");
  ingest->add_flag("--fixture", fixture, "write the synthetic train/test fixture into the --out directory");
  ingest->callback([&] {
    const auto cfg = load_config(g);
    const auto seed = cfg.number_or<std::uint64_t>("seed", 7);
    if (fixture) {
      if (g.out.empty()) throw usage_error("ingest --fixture needs --out DIR");
      FixtureOptions opt;
      opt.seed = seed;
      if (synth_dim) opt.dim = synth_dim;
      const auto fx = make_fixture(opt);
      fs::create_directories(g.out);
      write_ingest(fs::path(g.out) / "train.jsonl", fx.train);
      write_ingest(fs::path(g.out) / "test.jsonl", fx.test);
      fmt::print(stderr, "fixture: {} train, {} test, dim {}\n", fx.train.size(), fx.test.size(), opt.dim);
      return;
    }
    if (corpus_dir.empty()) throw usage_error("ingest needs --corpus or --fixture");
    const auto load = load_corpus(corpus_dir, labels.empty() ? std::nullopt : std::optional<fs::path>(labels),
                                  ParseOptions{with_inv});
    for (const auto& w : load.warnings) fmt::print(stderr, "warning: {}\n", w);
    if (!corpus_json.empty()) {
      emit(corpus_json, [&](std::ostream& o) { o << corpus_to_json(load.transcripts).dump(1) << '\n'; });
    }
    if (embeddings.empty() && synth_dim == 0) {
      if (corpus_json.empty()) throw usage_error("ingest needs --embeddings, --synthetic-dim or --corpus-json");
      return;
    }
    std::vector<EmbeddedTranscript> records;
    if (!embeddings.empty()) {
      records = attach(load.transcripts, read_ingest(embeddings));
    } else {
      for (const auto& t : load.transcripts) records.push_back(embed_synthetic(t, synth_dim, seed));
    }
    emit(g.out, [&](std::ostream& o) { write_ingest(o, records); });
  });

  // train-slm
  auto* train_cmd = app.add_subcommand("train-slm", "train the token-contribution assessor");
  std::string train_path;
  train_cmd->add_option("--train", train_path, "training split (ingest JSONL)")->required();
  train_cmd->callback([&] {
    const auto cfg = load_config(g);
    if (g.out.empty()) throw usage_error("train-slm needs --out checkpoint.json");
    TrainConfig tc;
    tc.epochs = cfg.number_or("epochs", tc.epochs);
    tc.lr = cfg.number_or("lr", tc.lr);
    tc.hidden = cfg.number_or("hidden", tc.hidden);
    tc.batch = cfg.number_or("batch", tc.batch);
    tc.temp = cfg.number_or("temp", tc.temp);
    tc.seed = cfg.number_or<std::uint64_t>("seed", tc.seed);
    const auto corpus = read_ingest(train_path);
    const auto result = train(corpus, tc);
    save_params(g.out, result.params, tc);
    fmt::print(stderr, "final loss {:.6f}, train accuracy {:.4f}\n", result.loss_trace.back(),
               accuracy(corpus, result.params));
  });

  // stats
  auto* stats = app.add_subcommand("stats", "mean parsing-category frequencies per dataset");
  std::vector<std::string> stat_inputs;
  stats->add_option("inputs", stat_inputs, "directories of .cha files or ingest JSONL files")->required();
  stats->callback([&] {
    const auto cfg = load_config(g);
    const auto lex = lexicons_from(cfg);
    std::vector<DatasetCounts> datasets;
    for (const auto& in : stat_inputs) {
      DatasetCounts ds;
      const fs::path p(in);
      if (fs::is_directory(p)) {
        ds.dataset = p.filename().empty() ? p.parent_path().filename().string() : p.filename().string();
        for (const auto& t : load_corpus(p, std::nullopt).transcripts) {
          ds.per_transcript.push_back(category_frequencies(categorize(t, lex)));
        }
      } else {
        ds.dataset = p.stem().string();
        for (const auto& r : read_ingest(p)) {
          ds.per_transcript.push_back(category_frequencies(categorize(r.tokens, r.pos_tags, lex)));
        }
      }
      datasets.push_back(std::move(ds));
    }
    emit(g.out, [&](std::ostream& o) { write_stats_csv(o, datasets); });
  });

  // score
  auto* score = app.add_subcommand("score", "contribution profiles, ranks and feature scores");
  ModelInputs score_in;
  add_model_inputs(score, score_in);
  score->callback([&] {
    const auto cfg = load_config(g);
    const auto pc = prepare_inputs(score_in, cfg);
    std::vector<ProfileRow> rows;
    for (const auto& q : pc.queries) rows.push_back({q.id, q.profile, q.s_feat});
    emit(g.out, [&](std::ostream& o) { write_profile_csv(o, rows); });
  });

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "rank demonstrations for each evaluation transcript");
  ModelInputs ret_in;
  std::size_t k = 3;
  std::string strategy = "parsing";
  add_model_inputs(retrieve, ret_in);
  retrieve->add_option("-k,--k", k, "demos per query");
  retrieve->add_option("--strategy", strategy, "parsing | semantic | random");
  retrieve->callback([&] {
    const auto cfg = load_config(g);
    const auto ec = eval_config_from(cfg);
    RetrievalOptions opt;
    if (strategy == "parsing") opt.strategy = RetrievalStrategy::Parsing;
    else if (strategy == "semantic") opt.strategy = RetrievalStrategy::Semantic;
    else if (strategy == "random") opt.strategy = RetrievalStrategy::Random;
    else throw usage_error("unknown strategy '" + strategy + "'");
    opt.seed = ec.seed;
    opt.lambda1 = ec.lambda1;
    opt.lambda2 = ec.lambda2;
    const auto pc = prepare_inputs(ret_in, cfg);
    std::vector<Candidate> pool;
    for (const auto& t : pc.pool) pool.push_back(to_candidate(t));
    emit(g.out, [&](std::ostream& o) {
      write_retrieval_header(o);
      for (const auto& q : pc.queries) write_retrieval_rows(o, q.id, top_k(to_candidate(q), pool, k, opt));
    });
  });

  auto find_mode = [](const std::string& name) {
    for (const auto& m : ablation_modes()) {
      if (m.name == name) return m;
    }
    throw usage_error("unknown mode '" + name + "' (full, wo_confidence, wo_feature_scores, wo_parsing_search)");
  };

  // predict
  auto* predict = app.add_subcommand("predict", "predict evaluation transcripts, one JSON record per line");
  ModelInputs pred_in;
  std::string mode_name = "full";
  add_model_inputs(predict, pred_in);
  predict->add_option("--mode", mode_name, "full | wo_confidence | wo_feature_scores | wo_parsing_search");
  predict->callback([&] {
    const auto cfg = load_config(g);
    const auto ec = eval_config_from(cfg);
    const auto pc = prepare_inputs(pred_in, cfg);
    const auto records = predict_all(pc.queries, pc.pool, find_mode(mode_name), ec);
    emit(g.out, [&](std::ostream& o) { write_predictions_jsonl(o, records); });
    rc = report_transport(records);
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "predict and score against gold labels");
  ModelInputs eval_in;
  std::string eval_mode = "full", eval_predictions;
  add_model_inputs(evaluate, eval_in);
  evaluate->add_option("--mode", eval_mode, "pipeline mode");
  evaluate->add_option("--predictions", eval_predictions, "also write prediction records here");
  evaluate->callback([&] {
    const auto cfg = load_config(g);
    const auto ec = eval_config_from(cfg);
    const auto pc = prepare_inputs(eval_in, cfg);
    const auto run = run_mode(pc, find_mode(eval_mode), ec);
    if (!eval_predictions.empty()) {
      emit(eval_predictions, [&](std::ostream& o) { write_predictions_jsonl(o, run.records); });
    }
    emit(g.out, [&](std::ostream& o) {
      write_metrics_header(o);
      write_metrics_row(o, run.mode.name, run.metrics);
    });
    rc = report_transport(run.records);
  });

  // ablate
  auto* ablate = app.add_subcommand("ablate", "metrics for the full pipeline and its three ablations");
  ModelInputs abl_in;
  std::string abl_predictions;
  add_model_inputs(ablate, abl_in);
  ablate->add_option("--predictions", abl_predictions, "also write prediction records of every mode here");
  ablate->callback([&] {
    const auto cfg = load_config(g);
    const auto ec = eval_config_from(cfg);
    const auto pc = prepare_inputs(abl_in, cfg);
    const auto runs = run_ablation(pc, ec);
    std::vector<PredictionRecord> all;
    for (const auto& r : runs) all.insert(all.end(), r.records.begin(), r.records.end());
    if (!abl_predictions.empty()) emit(abl_predictions, [&](std::ostream& o) { write_predictions_jsonl(o, all); });
    emit(g.out, [&](std::ostream& o) {
      write_metrics_header(o);
      for (const auto& r : runs) write_metrics_row(o, r.mode.name, r.metrics);
    });
    rc = report_transport(all);
  });

  // sweep-labels
  auto* sweep = app.add_subcommand("sweep-labels", "repeat the full pipeline for every label-word pair");
  ModelInputs sweep_in;
  std::string pairs_path = "data/label_pairs.csv", plot_path;
  add_model_inputs(sweep, sweep_in);
  sweep->add_option("--pairs", pairs_path, "config_class,ad_word,hc_word CSV");
  sweep->add_option("--plot", plot_path, "per-pair plot data CSV");
  sweep->callback([&] {
    const auto cfg = load_config(g);
    const auto ec = eval_config_from(cfg);
    const auto pc = prepare_inputs(sweep_in, cfg);
    const auto pairs = label_sweep_pairs(pairs_path);
    const auto rows = run_label_sweep(pc, pairs, ec);
    if (!plot_path.empty()) emit(plot_path, [&](std::ostream& o) { write_sweep_plot_csv(o, rows); });
    emit(g.out, [&](std::ostream& o) {
      write_metrics_header(o);
      for (const auto& r : rows) write_metrics_row(o, r.name(), r.metrics);
    });
  });

  // baseline
  auto* baseline = app.add_subcommand("baseline", "plain in-context baselines");
  ModelInputs base_in;
  std::string kind = "vanilla";
  std::vector<std::size_t> shots{1};
  add_model_inputs(baseline, base_in);
  baseline->add_option("--kind", kind, "vanilla | semantic | logits | ensemble");
  baseline->add_option("--shots", shots, "demos per learner; repeat for a shot curve")->delimiter(',');
  baseline->callback([&] {
    const auto cfg = load_config(g);
    const auto ec = eval_config_from(cfg);
    const auto b = parse_baseline(kind);
    if (!b) throw usage_error("unknown baseline '" + kind + "'");
    const auto pc = prepare_inputs(base_in, cfg);
    std::vector<ModeRun> runs;
    for (auto s : shots) runs.push_back(run_baseline(pc, *b, s, ec));
    emit(g.out, [&](std::ostream& o) {
      write_metrics_header(o);
      for (const auto& r : runs) write_metrics_row(o, r.mode.name, r.metrics);
    });
    std::vector<PredictionRecord> all;
    for (const auto& r : runs) all.insert(all.end(), r.records.begin(), r.records.end());
    rc = report_transport(all);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return rc;
}
