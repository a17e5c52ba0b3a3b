#pragma once
// Token-contribution assessor.
//
// For a transcript E (n x D):
//   p_i     = sigmoid(w . e_i + b)                        judge
//   e'_i    = sum_{m != i} y_m e_m,                       inject_noise
//             y = softmax((e_i . e_m + g_m) / temp),  g_m ~ Gumbel(0, 1)
//   ~e_i    = p_i e_i + (1 - p_i) e'_i                    perturb
//   z       = max_i ~e_i   (per dimension)                confidence
//   s_conf  = sigmoid(W2 . relu(W1 z + b1) + b2)
//
// Training minimizes binary cross-entropy of s_conf against the gold label (AD = 1) with
// Adam. The Gumbel draws are fixed for a step, so e'_i is a constant of the parameters and
// gradients flow only through p_i and the clean rows. Eval-clean mode skips the noise and
// pools E directly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ekicl/common.hpp"
#include "ekicl/embedding_store.hpp"
#include "ekicl/rng.hpp"

namespace ekicl {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct AssessorParams {
  std::vector<double> w;   // D
  double b = 0.0;
  Matrix W1;               // H x D
  std::vector<double> b1;  // H
  std::vector<double> W2;  // H
  double b2 = 0.0;
  double temp = 1.0;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return w.size(); }
  std::size_t hidden() const noexcept { return b1.size(); }

  // Zero-initialized parameters of the given shape.
  static AssessorParams zeros(std::size_t dim, std::size_t hidden, double temp = 1.0, std::uint64_t seed = 0) {
    AssessorParams p;
    p.w.assign(dim, 0.0);
    p.W1 = Matrix(hidden, dim);
    p.b1.assign(hidden, 0.0);
    p.W2.assign(hidden, 0.0);
    p.temp = temp;
    p.seed = seed;
    return p;
  }

  // Uniform(-0.05, 0.05) for every trainable value, drawn in a fixed order.
  static AssessorParams init(std::size_t dim, std::size_t hidden, double temp, std::uint64_t seed) {
    AssessorParams p = zeros(dim, hidden, temp, seed);
    Rng rng(mix_seed(seed, 0x1417));
    p.for_each([&](double& v) { v = rng.uniform(-0.05, 0.05); });
    return p;
  }

  // Visits every trainable scalar in a fixed order: w, b, W1, b1, W2, b2.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t size() const noexcept { return w.size() + 1 + W1.rows() * W1.cols() + b1.size() + W2.size() + 1; }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for_each([&](double v) { out.push_back(v); });
    return out;
  }

  void assign(std::span<const double> flat) {
    std::size_t k = 0;
    for_each([&](double& v) { v = flat[k++]; });
  }

  void validate() const {
    if (w.empty()) throw data_error("assessor: dimension must be >= 1");
    if (b1.empty()) throw data_error("assessor: hidden size must be >= 1");
    if (W1.rows() != b1.size() || W1.cols() != w.size() || W2.size() != b1.size()) {
      throw data_error("assessor: inconsistent parameter shapes");
    }
    if (!(temp > 0.0) || !std::isfinite(temp)) throw data_error("assessor: temperature must be > 0");
    for (double v : flatten()) {
      if (!std::isfinite(v)) throw data_error("assessor: non-finite parameter");
    }
  }

  friend bool operator==(const AssessorParams&, const AssessorParams&) = default;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    for (auto& v : self.w) f(v);
    f(self.b);
    for (auto& v : self.W1.flat()) f(v);
    for (auto& v : self.b1) f(v);
    for (auto& v : self.W2) f(v);
    f(self.b2);
  }
};

struct AssessorOutput {
  std::vector<double> p;
  double s_conf = 0.5;
  std::vector<double> pooled;
};

enum class ForwardMode : std::uint8_t { TrainWithNoise, EvalClean };

inline double judge(std::span<const double> e, const AssessorParams& params) {
  if (e.size() != params.w.size()) {
    throw data_error("judge: vector has dimension " + std::to_string(e.size()) + ", weights " +
                     std::to_string(params.w.size()));
  }
  return sigmoid(dot(params.w, e) + params.b);
}

inline std::vector<double> judge_all(const Matrix& E, const AssessorParams& params) {
  std::vector<double> p(E.rows());
  for (std::size_t i = 0; i < E.rows(); ++i) p[i] = judge(E.row(i), params);
  return p;
}

// Gumbel-softmax mixture over the transcript's other tokens. Consumes exactly n-1 Gumbel
// draws from `rng`; a null `rng` sets every Gumbel draw to zero (the deterministic
// softmax mixture used by eval-clean).
inline std::vector<double> inject_noise(const Matrix& E, std::size_t i, double temp, Rng* rng,
                                        std::vector<double>* weights_out = nullptr) {
  const std::size_t n = E.rows();
  if (n < 2) throw data_error("no noise candidates");
  if (i >= n) throw data_error("inject_noise: token index out of range");
  if (!(temp > 0.0)) throw data_error("inject_noise: temperature must be > 0");

  std::vector<double> scores;
  scores.reserve(n - 1);
  for (std::size_t m = 0; m < n; ++m) {
    if (m == i) continue;
    scores.push_back((dot(E.row(i), E.row(m)) + (rng ? rng->gumbel() : 0.0)) / temp);
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (auto& s : scores) {
    s = std::exp(s - top);
    total += s;
  }
  for (auto& s : scores) s /= total;

  std::vector<double> noise(E.cols(), 0.0);
  std::size_t k = 0;
  for (std::size_t m = 0; m < n; ++m) {
    if (m == i) continue;
    const auto row = E.row(m);
    for (std::size_t d = 0; d < noise.size(); ++d) noise[d] += scores[k] * row[d];
    ++k;
  }
  if (weights_out) *weights_out = std::move(scores);
  return noise;
}

// Noise rows for every token, drawn in token order.
inline Matrix inject_noise_all(const Matrix& E, double temp, Rng* rng) {
  Matrix noise(0, E.cols());
  for (std::size_t i = 0; i < E.rows(); ++i) noise.append_row(inject_noise(E, i, temp, rng));
  return noise;
}

inline std::vector<double> perturb(std::span<const double> e, std::span<const double> noise, double p) {
  std::vector<double> out(e.size());
  for (std::size_t d = 0; d < e.size(); ++d) out[d] = p * e[d] + (1.0 - p) * noise[d];
  return out;
}

struct Confidence {
  std::vector<double> pooled;
  double s_conf = 0.5;
};

namespace assessor_detail {

struct HeadTrace {
  std::vector<double> pooled;
  std::vector<std::size_t> argmax;  // row index per dimension
  std::vector<double> pre;          // W1 z + b1
  std::vector<double> hidden;       // relu(pre)
  double logit = 0.0;
};

inline HeadTrace run_head(const Matrix& mixed, const AssessorParams& params) {
  if (mixed.rows() == 0) throw data_error("confidence: empty input");
  if (mixed.cols() != params.dim()) throw data_error("confidence: dimension mismatch");
  HeadTrace t;
  const std::size_t D = mixed.cols();
  t.pooled.assign(mixed.row(0).begin(), mixed.row(0).end());
  t.argmax.assign(D, 0);
  for (std::size_t i = 1; i < mixed.rows(); ++i) {
    const auto row = mixed.row(i);
    for (std::size_t d = 0; d < D; ++d) {
      if (row[d] > t.pooled[d]) {
        t.pooled[d] = row[d];
        t.argmax[d] = i;
      }
    }
  }
  const std::size_t H = params.hidden();
  t.pre.resize(H);
  t.hidden.resize(H);
  t.logit = params.b2;
  for (std::size_t h = 0; h < H; ++h) {
    t.pre[h] = dot(params.W1.row(h), t.pooled) + params.b1[h];
    t.hidden[h] = std::max(0.0, t.pre[h]);
    t.logit += params.W2[h] * t.hidden[h];
  }
  return t;
}

// -[y log s + (1 - y) log(1 - s)] with s = sigmoid(logit), computed without overflow.
inline double bce_with_logit(double logit, double target) {
  return std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit))) - target * logit;
}

inline double target_of(const EmbeddedTranscript& t) {
  if (!t.gold_label) throw data_error("transcript '" + t.transcript_id + "' has no gold label");
  return *t.gold_label == Label::AD ? 1.0 : 0.0;
}

}  // namespace assessor_detail

inline Confidence confidence(const Matrix& mixed, const AssessorParams& params) {
  auto trace = assessor_detail::run_head(mixed, params);
  return {std::move(trace.pooled), sigmoid(trace.logit)};
}

inline Matrix mix_rows(const Matrix& E, const Matrix& noise, std::span<const double> p) {
  Matrix mixed(E.rows(), E.cols());
  for (std::size_t i = 0; i < E.rows(); ++i) {
    const auto row = perturb(E.row(i), noise.row(i), p[i]);
    std::copy(row.begin(), row.end(), mixed.row(i).begin());
  }
  return mixed;
}

inline AssessorOutput forward(const EmbeddedTranscript& t, const AssessorParams& params, ForwardMode mode,
                              Rng* rng = nullptr) {
  if (t.tokens.empty() || t.vectors.rows() == 0) throw data_error("forward: empty transcript");
  AssessorOutput out;
  out.p = judge_all(t.vectors, params);
  Confidence c;
  if (mode == ForwardMode::EvalClean) {
    if (t.vectors.rows() < 2) {
      c = confidence(t.vectors, params);
    } else {
      const Matrix noise = inject_noise_all(t.vectors, params.temp, nullptr);
      c = confidence(mix_rows(t.vectors, noise, out.p), params);
    }
  } else {
    if (!rng) throw usage_error("forward: train mode needs an rng");
    const Matrix noise = inject_noise_all(t.vectors, params.temp, rng);
    c = confidence(mix_rows(t.vectors, noise, out.p), params);
  }
  out.s_conf = c.s_conf;
  out.pooled = std::move(c.pooled);
  return out;
}

// Loss for one transcript with frozen noise rows; accumulates the gradient into `grad`
// (laid out as AssessorParams::flatten) when it is non-null.
inline double loss_and_gradient(const Matrix& E, const Matrix& noise, double target, const AssessorParams& params,
                                std::vector<double>* grad) {
  using namespace assessor_detail;
  const std::vector<double> p = judge_all(E, params);
  const Matrix mixed = mix_rows(E, noise, p);
  const HeadTrace t = run_head(mixed, params);
  const double loss = bce_with_logit(t.logit, target);
  if (!grad) return loss;

  const std::size_t D = params.dim();
  const std::size_t H = params.hidden();
  const std::size_t off_b = D;
  const std::size_t off_W1 = D + 1;
  const std::size_t off_b1 = off_W1 + H * D;
  const std::size_t off_W2 = off_b1 + H;
  const std::size_t off_b2 = off_W2 + H;
  auto& g = *grad;

  const double d_logit = sigmoid(t.logit) - target;
  g[off_b2] += d_logit;
  std::vector<double> d_pooled(D, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    g[off_W2 + h] += d_logit * t.hidden[h];
    if (t.pre[h] <= 0.0) continue;
    const double d_pre = d_logit * params.W2[h];
    g[off_b1 + h] += d_pre;
    const auto w1row = params.W1.row(h);
    for (std::size_t d = 0; d < D; ++d) {
      g[off_W1 + h * D + d] += d_pre * t.pooled[d];
      d_pooled[d] += d_pre * w1row[d];
    }
  }

  // Max-pool routes each dimension's gradient to its argmax row; d~e/dp = e - e'.
  std::vector<double> d_p(E.rows(), 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    const std::size_t i = t.argmax[d];
    d_p[i] += d_pooled[d] * (E(i, d) - noise(i, d));
  }
  for (std::size_t i = 0; i < E.rows(); ++i) {
    if (d_p[i] == 0.0) continue;
    const double d_act = d_p[i] * p[i] * (1.0 - p[i]);
    g[off_b] += d_act;
    const auto row = E.row(i);
    for (std::size_t d = 0; d < D; ++d) g[d] += d_act * row[d];
  }
  return loss;
}

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch = 16;
  double temp = 1.0;
  std::uint64_t seed = 7;
  std::size_t hidden = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainResult {
  AssessorParams params;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

inline TrainResult train(std::span<const EmbeddedTranscript> corpus, const TrainConfig& cfg) {
  if (corpus.size() < 2) throw data_error("degenerate training set: need at least 2 transcripts");
  bool has_ad = false, has_hc = false;
  for (const auto& t : corpus) {
    const double y = assessor_detail::target_of(t);
    (y > 0.5 ? has_ad : has_hc) = true;
    if (t.vectors.rows() < 2) throw data_error("transcript '" + t.transcript_id + "': need >= 2 tokens to train");
  }
  if (!has_ad || !has_hc) throw data_error("degenerate training set: only one class present");
  if (cfg.batch == 0) throw usage_error("train: batch size must be >= 1");
  const std::size_t D = corpus.front().dim();
  for (const auto& t : corpus) {
    if (t.dim() != D) throw data_error("inconsistent dimension in training corpus");
  }

  TrainResult result{AssessorParams::init(D, cfg.hidden, cfg.temp, cfg.seed), {}};
  AssessorParams& params = result.params;
  const std::size_t P = params.size();
  std::vector<double> m(P, 0.0), v(P, 0.0), grad(P);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, 0x7a1));
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& t = corpus[order[k]];
        const Matrix noise = inject_noise_all(t.vectors, params.temp, &rng);
        epoch_loss += loss_and_gradient(t.vectors, noise, assessor_detail::target_of(t), params, &grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      std::size_t k = 0;
      params.for_each([&](double& value) {
        const double g = grad[k] * scale;
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        value -= cfg.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
        ++k;
      });
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
  return result;
}

// Fraction of labeled transcripts whose eval-clean s_conf lands on the gold side of 0.5.
inline double accuracy(std::span<const EmbeddedTranscript> corpus, const AssessorParams& params) {
  std::size_t correct = 0;
  for (const auto& t : corpus) {
    const bool ad = forward(t, params, ForwardMode::EvalClean).s_conf >= 0.5;
    correct += (ad == (assessor_detail::target_of(t) > 0.5));
  }
  return corpus.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(corpus.size());
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

// Analytic vs central-difference gradient of the single-transcript loss, with the noise
// rows drawn once from params.seed and held fixed. Relative error is
// |a - n| / max(|a|, |n|, 1e-6).
inline GradCheckResult grad_check(const AssessorParams& params, const EmbeddedTranscript& t, double step) {
  if (!(step > 0.0)) throw usage_error("invalid step");
  Rng rng(params.seed);
  const Matrix noise = inject_noise_all(t.vectors, params.temp, &rng);
  const double target = assessor_detail::target_of(t);

  std::vector<double> analytic(params.size(), 0.0);
  loss_and_gradient(t.vectors, noise, target, params, &analytic);

  GradCheckResult result;
  AssessorParams probe = params;
  std::vector<double> flat = params.flatten();
  for (std::size_t k = 0; k < flat.size(); ++k) {
    const double saved = flat[k];
    flat[k] = saved + step;
    probe.assign(flat);
    const double up = loss_and_gradient(t.vectors, noise, target, probe, nullptr);
    flat[k] = saved - step;
    probe.assign(flat);
    const double down = loss_and_gradient(t.vectors, noise, target, probe, nullptr);
    flat[k] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic[k] - numeric) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_index = k;
    }
  }
  return result;
}

// Checkpoint: one JSON document with every parameter array, the hyperparameters and the seed.
inline nlohmann::json params_to_json(const AssessorParams& p, const std::optional<TrainConfig>& cfg = std::nullopt) {
  nlohmann::json j;
  j["format"] = "ekicl-assessor-v1";
  j["dim"] = p.dim();
  j["hidden"] = p.hidden();
  j["w"] = p.w;
  j["b"] = p.b;
  j["W1"] = std::vector<double>(p.W1.flat().begin(), p.W1.flat().end());
  j["b1"] = p.b1;
  j["W2"] = p.W2;
  j["b2"] = p.b2;
  j["temp"] = p.temp;
  j["seed"] = p.seed;
  if (cfg) {
    j["hyper"] = {{"lr", cfg->lr},       {"epochs", cfg->epochs}, {"batch", cfg->batch},
                  {"temp", cfg->temp},   {"seed", cfg->seed},     {"hidden", cfg->hidden},
                  {"beta1", cfg->beta1}, {"beta2", cfg->beta2},   {"eps", cfg->eps}};
  }
  return j;
}

inline AssessorParams params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "ekicl-assessor-v1") throw data_error("checkpoint: unknown format");
    const auto D = j.at("dim").get<std::size_t>();
    const auto H = j.at("hidden").get<std::size_t>();
    AssessorParams p = AssessorParams::zeros(D, H, j.at("temp").get<double>(), j.at("seed").get<std::uint64_t>());
    p.w = j.at("w").get<std::vector<double>>();
    p.b = j.at("b").get<double>();
    const auto w1 = j.at("W1").get<std::vector<double>>();
    if (w1.size() != H * D) throw data_error("checkpoint: W1 has wrong size");
    std::copy(w1.begin(), w1.end(), p.W1.flat().begin());
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.W2 = j.at("W2").get<std::vector<double>>();
    p.b2 = j.at("b2").get<double>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("checkpoint: ") + e.what());
  }
}

inline void save_params(const std::filesystem::path& path, const AssessorParams& p,
                        const std::optional<TrainConfig>& cfg = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << params_to_json(p, cfg).dump(2) << '\n';
}

inline AssessorParams load_params(const std::filesystem::path& path) {
  try {
    return params_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

}  // namespace ekicl
