#pragma once
// Synthetic picture-description corpus for tests and demos.
//
// Each transcript draws a latent impairment propensity q from one of two bands
// ([0, 0.1] or [0.8, 1]). Sentences come from a small Cookie-Theft grammar; higher q
// means more fillers, more pronoun subjects and vaguer nouns. Tokens are embedded with
// synth_embed, and the gold label is a planted linear rule on the mean token embedding:
//
//   AD  iff  u . mean(e) > threshold
//
// where u is the normalized difference between the mean embedding of the "impaired"
// vocabulary and that of the "healthy" vocabulary, and threshold is the median score of a
// pilot sample. Transcripts whose score lands within `margin` of the threshold are
// redrawn, so the two classes are separable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ekicl/embedding_store.hpp"
#include "ekicl/rng.hpp"

namespace ekicl {

struct FixtureOptions {
  std::size_t n_train = 200;
  std::size_t n_test = 60;
  std::size_t dim = 16;
  std::uint64_t seed = 7;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 6;
  double margin = 0.05;
};

struct Fixture {
  std::vector<EmbeddedTranscript> train;
  std::vector<EmbeddedTranscript> test;
  std::vector<double> direction;
  double threshold = 0.0;
};

namespace fixture_detail {

struct Tagged {
  std::string word;
  std::string tag;
};

inline const std::vector<std::string>& specific_nouns() {
  static const std::vector<std::string> v = {"boy", "girl", "mother", "cookie", "jar", "stool",
                                             "sink", "water", "window", "plate", "curtain", "faucet"};
  return v;
}
inline const std::vector<std::string>& vague_nouns() {
  static const std::vector<std::string> v = {"thing", "stuff", "kid", "lady"};
  return v;
}
inline const std::vector<std::string>& pronouns() {
  static const std::vector<std::string> v = {"he", "she", "they", "it"};
  return v;
}
inline const std::vector<std::string>& fillers() {
  static const std::vector<std::string> v = {"um", "uh", "er"};
  return v;
}
inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v = {"taking", "falling", "washing", "reaching",
                                             "drying", "overflowing", "holding", "standing"};
  return v;
}
inline const std::vector<std::string>& preps() {
  static const std::vector<std::string> v = {"on", "in", "near", "by", "from"};
  return v;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

inline std::vector<Tagged> sentence(double q, Rng& rng) {
  std::vector<Tagged> s;
  auto noun = [&]() -> Tagged {
    return {rng.uniform01() < q ? pick(vague_nouns(), rng) : pick(specific_nouns(), rng), "NOUN"};
  };
  if (rng.uniform01() < q) s.push_back({pick(fillers(), rng), "INTJ"});
  if (rng.uniform01() < q) {
    s.push_back({pick(pronouns(), rng), "PRON"});
  } else {
    s.push_back({"the", "DET"});
    s.push_back(noun());
  }
  s.push_back({"is", "AUX"});
  if (rng.uniform01() < q * 0.5) s.push_back({pick(fillers(), rng), "INTJ"});
  s.push_back({pick(verbs(), rng), "VERB"});
  if (rng.uniform01() < 0.5) {
    s.push_back({"the", "DET"});
    s.push_back(noun());
  }
  if (rng.uniform01() < 0.6) {
    s.push_back({pick(preps(), rng), "ADP"});
    s.push_back({"the", "DET"});
    s.push_back(noun());
  }
  return s;
}

inline EmbeddedTranscript draw(std::size_t index, const std::string& prefix, const FixtureOptions& opt, Rng& rng) {
  const double q = rng.uniform01() < 0.5 ? rng.uniform(0.0, 0.1) : rng.uniform(0.8, 1.0);
  const std::size_t sentences = opt.min_sentences + rng.below(opt.max_sentences - opt.min_sentences + 1);
  EmbeddedTranscript t;
  char id[32];
  std::snprintf(id, sizeof id, "%s%04zu", prefix.c_str(), index);
  t.transcript_id = id;
  t.pos_tags.emplace();
  t.vectors = Matrix(0, opt.dim);
  for (std::size_t k = 0; k < sentences; ++k) {
    for (auto& tw : sentence(q, rng)) {
      t.vectors.append_row(synth_embed(tw.word, opt.dim, opt.seed));
      t.tokens.push_back(std::move(tw.word));
      t.pos_tags->push_back(std::move(tw.tag));
    }
  }
  return t;
}

inline std::vector<double> mean_vector(const std::vector<std::string>& words, std::size_t dim, std::uint64_t seed) {
  std::vector<double> m(dim, 0.0);
  for (const auto& w : words) {
    const auto v = synth_embed(w, dim, seed);
    for (std::size_t d = 0; d < dim; ++d) m[d] += v[d] / static_cast<double>(words.size());
  }
  return m;
}

inline double score(const EmbeddedTranscript& t, const std::vector<double>& u) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.vectors.rows(); ++i) {
    const auto row = t.vectors.row(i);
    for (std::size_t d = 0; d < u.size(); ++d) s += u[d] * row[d];
  }
  return s / static_cast<double>(t.vectors.rows());
}

}  // namespace fixture_detail

inline Fixture make_fixture(const FixtureOptions& opt = {}) {
  using namespace fixture_detail;
  Fixture fx;

  std::vector<std::string> impaired = fillers();
  impaired.insert(impaired.end(), pronouns().begin(), pronouns().end());
  impaired.insert(impaired.end(), vague_nouns().begin(), vague_nouns().end());
  const auto hi = mean_vector(impaired, opt.dim, opt.seed);
  const auto lo = mean_vector(specific_nouns(), opt.dim, opt.seed);
  fx.direction.resize(opt.dim);
  double norm = 0.0;
  for (std::size_t d = 0; d < opt.dim; ++d) {
    fx.direction[d] = hi[d] - lo[d];
    norm += fx.direction[d] * fx.direction[d];
  }
  norm = std::sqrt(norm);
  for (auto& x : fx.direction) x /= norm;

  Rng pilot_rng(mix_seed(opt.seed, 0x9170));
  std::vector<double> pilot;
  for (std::size_t k = 0; k < 501; ++k) pilot.push_back(score(draw(k, "p", opt, pilot_rng), fx.direction));
  std::nth_element(pilot.begin(), pilot.begin() + 250, pilot.end());
  fx.threshold = pilot[250];

  Rng rng(mix_seed(opt.seed, 0xf1c));
  auto fill = [&](std::vector<EmbeddedTranscript>& out, std::size_t count, const std::string& prefix) {
    while (out.size() < count) {
      EmbeddedTranscript t = draw(out.size(), prefix, opt, rng);
      const double s = score(t, fx.direction);
      if (std::abs(s - fx.threshold) < opt.margin) continue;
      t.gold_label = s > fx.threshold ? Label::AD : Label::HC;
      out.push_back(std::move(t));
    }
  };
  fill(fx.train, opt.n_train, "train-");
  fill(fx.test, opt.n_test, "test-");
  return fx;
}

}  // namespace ekicl
