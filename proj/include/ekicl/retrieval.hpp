#pragma once
// Demonstration retrieval: parsing similarity (rank position distance + aligned cosine),
// with semantic-cosine and seeded-random baselines.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ekicl/parsing_decomposer.hpp"
#include "ekicl/rng.hpp"

namespace ekicl {

namespace retrieval_detail {

// Every divisor 1..6 divides 60, so distances are exact integers in units of 1/60.
inline constexpr int kUnitsPerOne = 60;

constexpr int distance_units(const std::array<int, kNumCategories>& query_position_of_candidate) {
  int units = 0;
  for (int i = 0; i < static_cast<int>(kNumCategories); ++i) {
    const int diff = query_position_of_candidate[static_cast<std::size_t>(i)] - i;
    units += (diff < 0 ? -diff : diff) * (kUnitsPerOne / (i + 1));
  }
  return units;
}

constexpr int enumerate_max_units() {
  std::array<int, kNumCategories> perm{0, 1, 2, 3, 4, 5};
  int best = 0;
  do {
    best = std::max(best, distance_units(perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace retrieval_detail

// Maximum raw position distance over all 720 permutations, in 1/60 units (521/60 = 8.68333...).
inline constexpr int kNdMaxUnits = 521;
static_assert(retrieval_detail::enumerate_max_units() == kNdMaxUnits,
              "ND_MAX drifted from exhaustive enumeration");
inline constexpr double kNdMax = static_cast<double>(kNdMaxUnits) / retrieval_detail::kUnitsPerOne;

struct PositionDistance {
  double nd_raw = 0.0;
  double nd_normalized = 0.0;
};

inline void require_permutation(const CategoryRank& rank) {
  std::array<int, kNumCategories> seen{};
  for (Category c : rank) {
    if (c == Category::None) throw data_error("rank contains None");
    if (++seen[index_of(c)] > 1) throw data_error("rank is not a permutation of the six categories");
  }
}

// For candidate position i (1-based), t_i is the query position of the candidate's i-th
// category; ND = sum_i |t_i - i| / i. Asymmetric: the divisor indexes the candidate rank.
inline PositionDistance position_distance(const CategoryRank& query, const CategoryRank& candidate) {
  require_permutation(query);
  require_permutation(candidate);
  std::array<int, kNumCategories> query_pos{};
  for (std::size_t k = 0; k < kNumCategories; ++k) query_pos[index_of(query[k])] = static_cast<int>(k);
  std::array<int, kNumCategories> t{};
  for (std::size_t i = 0; i < kNumCategories; ++i) t[i] = query_pos[index_of(candidate[i])];
  const int units = retrieval_detail::distance_units(t);
  return {static_cast<double>(units) / retrieval_detail::kUnitsPerOne, static_cast<double>(units) / kNdMaxUnits};
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

struct SimilarityBreakdown {
  double nd_raw = 0.0;
  double nd_normalized = 0.0;
  double cosine_term = 0.0;
  double sim = 0.0;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
};

inline SimilarityBreakdown parsing_similarity(const ContributionProfile& query, const ContributionProfile& candidate,
                                              double lambda1 = 0.5, double lambda2 = 0.5) {
  SimilarityBreakdown s;
  const auto nd = position_distance(query.rank_C, candidate.rank_C);
  s.nd_raw = nd.nd_raw;
  s.nd_normalized = nd.nd_normalized;
  s.cosine_term = cosine(query.array_R, reorder(candidate.omega, query.rank_C));
  s.lambda1 = lambda1;
  s.lambda2 = lambda2;
  s.sim = lambda1 * (1.0 - s.nd_normalized) + lambda2 * s.cosine_term;
  return s;
}

enum class RetrievalStrategy : std::uint8_t { Parsing, Semantic, Random };

struct Candidate {
  std::string id;
  ContributionProfile profile;
  std::vector<double> mean_embedding;
  std::optional<Label> label;
};

struct RetrievalOptions {
  RetrievalStrategy strategy = RetrievalStrategy::Parsing;
  std::uint64_t seed = 0;
  double lambda1 = 0.5;
  double lambda2 = 0.5;
  bool balanced = false;
};

struct RankedDemo {
  std::string id;
  std::size_t pool_index = 0;
  double score = 0.0;
  std::optional<SimilarityBreakdown> breakdown;
};

namespace retrieval_detail {

// Alternates classes while both remain, starting with the class of the best candidate.
inline std::vector<RankedDemo> interleave_classes(std::vector<RankedDemo> ranked, std::span<const Candidate> pool) {
  if (ranked.empty()) return ranked;
  std::vector<RankedDemo> ad, other;
  for (auto& r : ranked) (pool[r.pool_index].label == Label::AD ? ad : other).push_back(std::move(r));
  const bool ad_first = pool[ranked.front().pool_index].label == Label::AD;
  std::vector<RankedDemo> out;
  std::size_t a = 0, o = 0;
  bool take_ad = ad_first;
  while (a < ad.size() || o < other.size()) {
    if ((take_ad && a < ad.size()) || o >= other.size()) {
      out.push_back(std::move(ad[a++]));
    } else {
      out.push_back(std::move(other[o++]));
    }
    take_ad = !take_ad;
  }
  return out;
}

}  // namespace retrieval_detail

// Ranks the pool for `query` and returns the first k. Candidates sharing the query's id
// are skipped. Score ties resolve by ascending id.
inline std::vector<RankedDemo> top_k(const Candidate& query, std::span<const Candidate> pool, std::size_t k,
                                     const RetrievalOptions& opt = {}) {
  std::vector<RankedDemo> ranked;
  for (std::size_t idx = 0; idx < pool.size(); ++idx) {
    if (pool[idx].id == query.id) continue;
    RankedDemo r{pool[idx].id, idx, 0.0, std::nullopt};
    if (opt.strategy == RetrievalStrategy::Parsing) {
      r.breakdown = parsing_similarity(query.profile, pool[idx].profile, opt.lambda1, opt.lambda2);
      r.score = r.breakdown->sim;
    } else if (opt.strategy == RetrievalStrategy::Semantic) {
      r.score = cosine(query.mean_embedding, pool[idx].mean_embedding);
    }
    ranked.push_back(std::move(r));
  }
  if (ranked.empty()) throw data_error("top_k: empty demonstration pool");
  if (k > ranked.size()) {
    throw usage_error("top_k: k=" + std::to_string(k) + " exceeds pool size " + std::to_string(ranked.size()));
  }

  if (opt.strategy == RetrievalStrategy::Random) {
    std::sort(ranked.begin(), ranked.end(), [](const RankedDemo& a, const RankedDemo& b) { return a.id < b.id; });
    Rng rng(mix_seed(opt.seed, fnv1a64(query.id)));
    rng.shuffle(std::span<RankedDemo>(ranked));
  } else {
    std::sort(ranked.begin(), ranked.end(), [](const RankedDemo& a, const RankedDemo& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
  }
  if (opt.balanced) ranked = retrieval_detail::interleave_classes(std::move(ranked), pool);
  ranked.resize(k);
  return ranked;
}

// CSV "query_id,rank,demo_id,sim,nd_raw,nd_normalized,cosine_term"; the distance columns
// are NA for non-parsing strategies, where sim carries the strategy's score.
inline void write_retrieval_header(std::ostream& out) {
  out << "query_id,rank,demo_id,sim,nd_raw,nd_normalized,cosine_term\n";
}

inline void write_retrieval_rows(std::ostream& out, const std::string& query_id, std::span<const RankedDemo> demos) {
  for (std::size_t r = 0; r < demos.size(); ++r) {
    const auto& d = demos[r];
    if (d.breakdown) {
      out << fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", query_id, r + 1, d.id, d.breakdown->sim,
                         d.breakdown->nd_raw, d.breakdown->nd_normalized, d.breakdown->cosine_term);
    } else {
      out << fmt::format("{},{},{},{:.6f},NA,NA,NA\n", query_id, r + 1, d.id, d.score);
    }
  }
}

}  // namespace ekicl
