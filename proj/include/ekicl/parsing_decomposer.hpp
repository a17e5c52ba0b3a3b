#pragma once
// Category contribution weights, contribution arrays and ranks, the training-set standard
// profile, and the feature score.
//
//   omega_k  = sum_i p_i [cat_i == k]
//   R        = omega sorted descending, C the matching category order
//   omega_k  averaged over the training set gives R_std / C_std
//   S_feat   = (omega reordered by C_std) . softmax(R_std)
//
// Ties in every sort are broken by the canonical category order.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ekicl/annotator.hpp"
#include "ekicl/common.hpp"

namespace ekicl {

using CategoryWeights = std::array<double, kNumCategories>;  // canonical order
using CategoryRank = std::array<Category, kNumCategories>;

struct ContributionProfile {
  CategoryWeights omega{};
  CategoryWeights array_R{};
  CategoryRank rank_C = kCategories;

  double weight(Category c) const { return omega[index_of(c)]; }
  // 1-based position of `c` in rank_C.
  std::size_t position(Category c) const {
    return static_cast<std::size_t>(std::find(rank_C.begin(), rank_C.end(), c) - rank_C.begin()) + 1;
  }
};

struct StandardProfile {
  CategoryWeights mean_omega{};
  CategoryWeights array_Rstd{};
  CategoryRank rank_Cstd = kCategories;
  CategoryWeights softmax_Rstd{};
};

inline CategoryWeights contribution_weights(std::span<const Category> categories, std::span<const double> p) {
  if (categories.size() != p.size()) {
    throw data_error("contribution_weights: " + std::to_string(categories.size()) + " categories but " +
                     std::to_string(p.size()) + " contributions");
  }
  CategoryWeights omega{};
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i] != Category::None) omega[index_of(categories[i])] += p[i];
  }
  return omega;
}

inline CategoryRank rank_categories(const CategoryWeights& weights) {
  CategoryRank rank = kCategories;
  std::stable_sort(rank.begin(), rank.end(),
                   [&](Category a, Category b) { return weights[index_of(a)] > weights[index_of(b)]; });
  return rank;
}

inline CategoryWeights reorder(const CategoryWeights& weights, const CategoryRank& order) {
  CategoryWeights out{};
  for (std::size_t k = 0; k < kNumCategories; ++k) out[k] = weights[index_of(order[k])];
  return out;
}

inline ContributionProfile rank_profile(const CategoryWeights& omega) {
  ContributionProfile prof;
  prof.omega = omega;
  prof.rank_C = rank_categories(omega);
  prof.array_R = reorder(omega, prof.rank_C);
  return prof;
}

inline CategoryWeights softmax(const CategoryWeights& x) {
  const double top = *std::max_element(x.begin(), x.end());
  CategoryWeights out{};
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    out[k] = std::exp(x[k] - top);
    total += out[k];
  }
  for (auto& v : out) v /= total;
  return out;
}

inline StandardProfile standard_profile(std::span<const ContributionProfile> training) {
  if (training.empty()) throw data_error("standard_profile: empty training corpus");
  StandardProfile std_prof;
  for (const auto& prof : training) {
    for (std::size_t k = 0; k < kNumCategories; ++k) std_prof.mean_omega[k] += prof.omega[k];
  }
  for (auto& v : std_prof.mean_omega) v /= static_cast<double>(training.size());
  std_prof.rank_Cstd = rank_categories(std_prof.mean_omega);
  std_prof.array_Rstd = reorder(std_prof.mean_omega, std_prof.rank_Cstd);
  std_prof.softmax_Rstd = softmax(std_prof.array_Rstd);
  return std_prof;
}

inline double feature_score(const ContributionProfile& prof, const StandardProfile& standard) {
  const CategoryWeights ordered = reorder(prof.omega, standard.rank_Cstd);
  double s = 0.0;
  for (std::size_t k = 0; k < kNumCategories; ++k) s += ordered[k] * standard.softmax_Rstd[k];
  return s;
}

struct ProfileRow {
  std::string transcript_id;
  ContributionProfile profile;
  double s_feat = 0.0;
};

// CSV "transcript_id,category,omega,rank_position,s_feat", six rows per transcript in
// canonical category order.
inline void write_profile_csv(std::ostream& out, std::span<const ProfileRow> rows) {
  out << "transcript_id,category,omega,rank_position,s_feat\n";
  for (const auto& row : rows) {
    for (Category c : kCategories) {
      out << fmt::format("{},{},{:.6f},{},{:.6f}\n", row.transcript_id, category_name(c), row.profile.weight(c),
                         row.profile.position(c), row.s_feat);
    }
  }
}

}  // namespace ekicl
