#pragma once
// Per-query prediction (one learner per demo, majority vote), metrics, and the ablation,
// baseline and label-sweep drivers.
//
// Every learner of a query shares the same hints; only the demos differ.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "ekicl/annotator.hpp"
#include "ekicl/common.hpp"
#include "ekicl/embedding_store.hpp"
#include "ekicl/llm_gateway.hpp"
#include "ekicl/parsing_decomposer.hpp"
#include "ekicl/prompting.hpp"
#include "ekicl/retrieval.hpp"
#include "ekicl/slm_assessor.hpp"

namespace ekicl {

struct VoteOutcome {
  Label label = Label::HC;
  bool used_fallback = false;
};

// The larger of the non-abstaining camps wins. Ties, all-abstain included, go to AD iff
// s_conf >= threshold; without an s_conf they go to HC.
inline VoteOutcome majority_vote(std::span<const Vote> votes, std::optional<double> s_conf, double threshold = 0.5) {
  std::size_t ad = 0, hc = 0;
  for (Vote v : votes) {
    if (v == Vote::AD) ++ad;
    if (v == Vote::HC) ++hc;
  }
  if (ad > hc) return {Label::AD, false};
  if (hc > ad) return {Label::HC, false};
  return {s_conf && *s_conf >= threshold ? Label::AD : Label::HC, true};
}

// Percentages with AD as the positive class; a field with a zero denominator is absent.
// F1 = 2PR/(P+R), so it is absent when precision and recall are both zero.
struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> accuracy, precision, recall, f1;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
};

inline MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  MetricsReport m{tp, fp, fn, tn, std::nullopt, std::nullopt, std::nullopt, std::nullopt};
  auto pct = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = pct(tp + tn, m.total());
  m.precision = pct(tp, tp + fp);
  m.recall = pct(tp, tp + fn);
  if (tp > 0) m.f1 = pct(2 * tp, 2 * tp + fp + fn);
  return m;
}

inline MetricsReport compute_metrics(std::span<const Label> predicted, std::span<const std::optional<Label>> gold) {
  if (predicted.size() != gold.size()) throw usage_error("compute_metrics: prediction/gold length mismatch");
  if (predicted.empty()) throw data_error("compute_metrics: no records");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (!gold[i]) throw data_error("compute_metrics: record " + std::to_string(i) + " has no gold label");
    const bool pred_ad = predicted[i] == Label::AD;
    const bool gold_ad = *gold[i] == Label::AD;
    if (pred_ad && gold_ad) ++tp;
    else if (pred_ad) ++fp;
    else if (gold_ad) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

// A transcript with everything retrieval and prompting need, computed once.
struct PreparedTranscript {
  std::string id;
  std::optional<Label> gold_label;
  std::string text;
  std::vector<Category> categories;
  std::vector<double> p;
  ContributionProfile profile;
  std::optional<double> s_conf;
  double s_feat = 0.0;
  std::vector<double> mean_embedding;
};

struct PreparedCorpus {
  std::vector<PreparedTranscript> pool;     // training split, demo source
  std::vector<PreparedTranscript> queries;  // evaluation split, sorted by id
  StandardProfile standard;
};

// Without an assessor every token contributes p_i = 1, so omega is the category count.
inline PreparedTranscript prepare_transcript(const EmbeddedTranscript& t, const AssessorParams* params,
                                             const Lexicons& lex = Lexicons::defaults()) {
  validate(t);
  PreparedTranscript out;
  out.id = t.transcript_id;
  out.gold_label = t.gold_label;
  out.text = text::join(t.tokens, " ");
  out.categories = categorize(t.tokens, t.pos_tags, lex);
  if (params) {
    auto fwd = forward(t, *params, ForwardMode::EvalClean);
    out.p = std::move(fwd.p);
    out.s_conf = fwd.s_conf;
  } else {
    out.p.assign(t.tokens.size(), 1.0);
  }
  out.profile = rank_profile(contribution_weights(out.categories, out.p));
  out.mean_embedding.assign(t.dim(), 0.0);
  for (std::size_t i = 0; i < t.vectors.rows(); ++i) {
    const auto row = t.vectors.row(i);
    for (std::size_t d = 0; d < row.size(); ++d) out.mean_embedding[d] += row[d];
  }
  for (auto& v : out.mean_embedding) v /= static_cast<double>(std::max<std::size_t>(t.vectors.rows(), 1));
  return out;
}

// The standard profile comes from the training split only.
inline PreparedCorpus prepare(std::span<const EmbeddedTranscript> train, std::span<const EmbeddedTranscript> eval,
                              const AssessorParams* params, const Lexicons& lex = Lexicons::defaults()) {
  if (train.empty()) throw data_error("prepare: empty training split");
  PreparedCorpus pc;
  for (const auto& t : train) pc.pool.push_back(prepare_transcript(t, params, lex));
  for (const auto& t : eval) pc.queries.push_back(prepare_transcript(t, params, lex));
  std::vector<ContributionProfile> profiles;
  for (const auto& t : pc.pool) profiles.push_back(t.profile);
  pc.standard = standard_profile(profiles);
  for (auto* split : {&pc.pool, &pc.queries}) {
    for (auto& t : *split) t.s_feat = feature_score(t.profile, pc.standard);
  }
  std::sort(pc.queries.begin(), pc.queries.end(),
            [](const PreparedTranscript& a, const PreparedTranscript& b) { return a.id < b.id; });
  return pc;
}

inline Candidate to_candidate(const PreparedTranscript& t) {
  return Candidate{t.id, t.profile, t.mean_embedding, t.gold_label};
}

inline std::string_view to_string(RetrievalStrategy s) {
  switch (s) {
    case RetrievalStrategy::Parsing: return "parsing";
    case RetrievalStrategy::Semantic: return "semantic";
    case RetrievalStrategy::Random: return "random";
  }
  return "parsing";
}

struct PipelineMode {
  std::string name = "full";
  std::size_t learners = 3;
  std::size_t shots = 1;  // demos per learner
  RetrievalStrategy strategy = RetrievalStrategy::Parsing;
  bool confidence = true;  // conf_hint in the prompt and s_conf as tie-breaker
  bool feature_hint = true;
};

inline PipelineMode full_mode() { return {}; }

// full, wo_confidence, wo_feature_scores, wo_parsing_search
inline std::vector<PipelineMode> ablation_modes() {
  std::vector<PipelineMode> modes(4);
  modes[1].name = "wo_confidence";
  modes[1].confidence = false;
  modes[2].name = "wo_feature_scores";
  modes[2].feature_hint = false;
  modes[3].name = "wo_parsing_search";
  modes[3].strategy = RetrievalStrategy::Random;
  return modes;
}

enum class Baseline : std::uint8_t { Vanilla, Semantic, Logits, Ensemble };

inline std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::Vanilla: return "vanilla";
    case Baseline::Semantic: return "semantic";
    case Baseline::Logits: return "logits";
    case Baseline::Ensemble: return "ensemble";
  }
  return "vanilla";
}

inline std::optional<Baseline> parse_baseline(std::string_view s) {
  for (auto b : {Baseline::Vanilla, Baseline::Semantic, Baseline::Logits, Baseline::Ensemble}) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

inline PipelineMode baseline_mode(Baseline b, std::size_t shots) {
  PipelineMode m;
  m.name = fmt::format("{}_shot{}", to_string(b), shots);
  m.learners = b == Baseline::Ensemble ? 3 : 1;
  m.shots = shots;
  m.strategy = b == Baseline::Semantic ? RetrievalStrategy::Semantic : RetrievalStrategy::Random;
  m.confidence = b == Baseline::Logits;
  m.feature_hint = false;
  return m;
}

struct EvalConfig {
  GatewayConfig gateway;
  LabelPair label_pair = LabelPair::standard();
  std::uint64_t seed = 7;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  double threshold = 0.5;
};

struct LearnerEntry {
  std::vector<std::string> demo_ids;
  std::string prompt_hash;
  std::string completion;
  Vote vote = Vote::Abstain;
  std::string error;
};

struct PredictionRecord {
  std::string query_id;
  std::string mode;
  std::vector<LearnerEntry> learners;
  Label final_label = Label::HC;
  bool used_fallback = false;
  std::optional<double> s_conf;
  double s_feat = 0.0;
  std::optional<Label> gold_label;
  std::string config_fingerprint;
};

inline std::string config_fingerprint(const PipelineMode& mode, const EvalConfig& cfg) {
  const std::string canon = fmt::format(
      "template=ekicl-v1;mode={};learners={};shots={};strategy={};confidence={};feature_hint={};pair={}:{};"
      "backend={};model={};temperature={};max_tokens={};fixed_word={};seed={};lambda1={};lambda2={};threshold={}",
      mode.name, mode.learners, mode.shots, to_string(mode.strategy), mode.confidence, mode.feature_hint,
      to_string(cfg.label_pair.config()), cfg.label_pair.name(), to_string(cfg.gateway.backend),
      cfg.gateway.model_name, cfg.gateway.temperature, cfg.gateway.max_tokens, cfg.gateway.fixed_word, cfg.seed,
      cfg.lambda1, cfg.lambda2, cfg.threshold);
  return hex64(fnv1a64(canon));
}

struct LearnerPlan {
  std::vector<std::string> demo_ids;
  PromptSpec spec;
  std::string prompt;
};

// Retrieves learners * shots demos and hands learner i the i-th block of `shots`.
inline std::vector<LearnerPlan> plan_query(const PreparedTranscript& query, std::span<const PreparedTranscript> pool,
                                           std::span<const Candidate> candidates, const PipelineMode& mode,
                                           const EvalConfig& cfg) {
  if (mode.learners == 0) throw usage_error("mode '" + mode.name + "': learners must be >= 1");
  if (mode.confidence && !query.s_conf) {
    throw usage_error("mode '" + mode.name + "' needs a trained assessor for confidence scores");
  }
  std::vector<RankedDemo> demos;
  const std::size_t needed = mode.learners * mode.shots;
  if (needed > 0) {
    RetrievalOptions opt;
    opt.strategy = mode.strategy;
    opt.seed = cfg.seed;
    opt.lambda1 = cfg.lambda1;
    opt.lambda2 = cfg.lambda2;
    demos = top_k(to_candidate(query), candidates, needed, opt);
  }
  std::vector<LearnerPlan> plans(mode.learners);
  for (std::size_t l = 0; l < mode.learners; ++l) {
    auto& plan = plans[l];
    plan.spec.query_text = query.text;
    plan.spec.label_pair = cfg.label_pair;
    if (mode.confidence) plan.spec.conf_hint = query.s_conf;
    if (mode.feature_hint) plan.spec.feat_hint = query.s_feat;
    for (std::size_t s = 0; s < mode.shots; ++s) {
      const auto& demo = pool[demos[l * mode.shots + s].pool_index];
      if (!demo.gold_label) throw data_error("demo '" + demo.id + "' has no gold label");
      plan.demo_ids.push_back(demo.id);
      plan.spec.demos.push_back({demo.text, cfg.label_pair.word_for(*demo.gold_label)});
    }
    plan.prompt = build_prompt(plan.spec);
  }
  return plans;
}

// Predicts every query; gateway requests for all queries go out as one bounded batch.
// A learner whose request fails abstains and keeps the error text.
inline std::vector<PredictionRecord> predict_all(std::span<const PreparedTranscript> queries,
                                                 std::span<const PreparedTranscript> pool, const PipelineMode& mode,
                                                 const EvalConfig& cfg) {
  std::vector<Candidate> candidates;
  candidates.reserve(pool.size());
  for (const auto& t : pool) candidates.push_back(to_candidate(t));

  std::vector<std::vector<LearnerPlan>> plans;
  std::vector<CompletionRequest> requests;
  for (const auto& q : queries) {
    plans.push_back(plan_query(q, pool, candidates, mode, cfg));
    for (const auto& p : plans.back()) requests.push_back({p.prompt, p.spec});
  }
  const auto results = complete_batch(requests, cfg.gateway);
  const std::string fingerprint = config_fingerprint(mode, cfg);

  std::vector<PredictionRecord> records;
  std::size_t r = 0;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    PredictionRecord rec;
    rec.query_id = q.id;
    rec.mode = mode.name;
    rec.s_conf = q.s_conf;
    rec.s_feat = q.s_feat;
    rec.gold_label = q.gold_label;
    rec.config_fingerprint = fingerprint;
    std::vector<Vote> votes;
    for (const auto& plan : plans[qi]) {
      const auto& res = results[r++];
      LearnerEntry e;
      e.demo_ids = plan.demo_ids;
      e.prompt_hash = hex64(fnv1a64(plan.prompt));
      if (res.ok()) {
        e.completion = res.completion->text;
        e.vote = parse_completion(e.completion, cfg.label_pair);
      } else {
        e.error = res.error;
      }
      votes.push_back(e.vote);
      rec.learners.push_back(std::move(e));
    }
    const auto outcome = majority_vote(votes, mode.confidence ? q.s_conf : std::nullopt, cfg.threshold);
    rec.final_label = outcome.label;
    rec.used_fallback = outcome.used_fallback;
    records.push_back(std::move(rec));
  }
  return records;
}

inline PredictionRecord predict_one(const PreparedTranscript& query, std::span<const PreparedTranscript> pool,
                                    const PipelineMode& mode, const EvalConfig& cfg) {
  return predict_all(std::span(&query, 1), pool, mode, cfg).front();
}

inline MetricsReport compute_metrics(std::span<const PredictionRecord> records) {
  std::vector<Label> predicted;
  std::vector<std::optional<Label>> gold;
  for (const auto& r : records) {
    predicted.push_back(r.final_label);
    gold.push_back(r.gold_label);
  }
  return compute_metrics(predicted, gold);
}

struct ModeRun {
  PipelineMode mode;
  std::vector<PredictionRecord> records;
  MetricsReport metrics;
};

inline ModeRun run_mode(const PreparedCorpus& pc, const PipelineMode& mode, const EvalConfig& cfg) {
  ModeRun run{mode, predict_all(pc.queries, pc.pool, mode, cfg), {}};
  run.metrics = compute_metrics(run.records);
  return run;
}

inline std::vector<ModeRun> run_ablation(const PreparedCorpus& pc, const EvalConfig& cfg) {
  std::vector<ModeRun> runs;
  for (const auto& mode : ablation_modes()) runs.push_back(run_mode(pc, mode, cfg));
  return runs;
}

inline ModeRun run_baseline(const PreparedCorpus& pc, Baseline baseline, std::size_t shots, const EvalConfig& cfg) {
  return run_mode(pc, baseline_mode(baseline, shots), cfg);
}

struct SweepRow {
  LabelPair pair;
  MetricsReport metrics;

  std::string name() const { return fmt::format("{}:{}", to_string(pair.config()), pair.name()); }
};

inline std::vector<SweepRow> run_label_sweep(const PreparedCorpus& pc, std::span<const LabelPair> pairs,
                                             const EvalConfig& cfg, const PipelineMode& mode = full_mode()) {
  if (pairs.empty()) throw usage_error("label sweep: empty pair list");
  std::vector<SweepRow> rows;
  for (const auto& pair : pairs) {
    EvalConfig c = cfg;
    c.label_pair = pair;
    rows.push_back({pair, run_mode(pc, mode, c).metrics});
  }
  return rows;
}

// ---- reports ----

inline std::string format_metric(const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : "NA"; }

inline void write_metrics_header(std::ostream& out) { out << "mode_or_pair,acc,pre,rec,f1,tp,fp,fn,tn\n"; }

inline void write_metrics_row(std::ostream& out, std::string_view name, const MetricsReport& m) {
  out << fmt::format("{},{},{},{},{},{},{},{},{}\n", name, format_metric(m.accuracy), format_metric(m.precision),
                     format_metric(m.recall), format_metric(m.f1), m.tp, m.fp, m.fn, m.tn);
}

// Plot data for the label-word sweep: one row per pair, grouped by configuration class.
inline void write_sweep_plot_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "config_class,ad_word,hc_word,acc,pre,rec,f1\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", to_string(r.pair.config()), r.pair.ad_word(), r.pair.hc_word(),
                       format_metric(r.metrics.accuracy), format_metric(r.metrics.precision),
                       format_metric(r.metrics.recall), format_metric(r.metrics.f1));
  }
}

inline nlohmann::ordered_json record_to_json(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  j["mode"] = r.mode;
  auto learners = nlohmann::ordered_json::array();
  for (const auto& e : r.learners) {
    nlohmann::ordered_json le;
    le["demo_ids"] = e.demo_ids;
    le["prompt_hash"] = e.prompt_hash;
    le["completion"] = e.completion;
    le["vote"] = to_string(e.vote);
    if (!e.error.empty()) le["error"] = e.error;
    learners.push_back(std::move(le));
  }
  j["learners"] = std::move(learners);
  j["final_label"] = to_string(r.final_label);
  j["used_fallback"] = r.used_fallback;
  j["s_conf"] = r.s_conf ? nlohmann::ordered_json(*r.s_conf) : nlohmann::ordered_json(nullptr);
  j["s_feat"] = r.s_feat;
  j["gold_label"] = r.gold_label ? nlohmann::ordered_json(to_string(*r.gold_label)) : nlohmann::ordered_json(nullptr);
  j["config_fingerprint"] = r.config_fingerprint;
  return j;
}

inline void write_predictions_jsonl(std::ostream& out, std::span<const PredictionRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

}  // namespace ekicl
