#pragma once
// Prompt rendering for one in-context learner, completion parsing, and label-word pairs.
//
// Template "ekicl-v1" (lines joined by '\n', no trailing newline):
//
//   You will read a picture description. Rate it with exactly one word: {ad_word} or {hc_word}.
//   <blank>
//   Description: {demo_text}        } repeated per demo
//   Answer: {demo_label}            }
//   <blank>                         }
//   Reference screening probability of impairment: {conf:.2f}   (optional)
//   Structural typicality score: {feat:.4f}                     (optional)
//   Description: {query_text}
//   Answer:

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "ekicl/common.hpp"

namespace ekicl {

enum class LabelConfig : std::uint8_t { Aligned, FixedGood, FixedBad, Custom };

inline std::string_view to_string(LabelConfig c) {
  switch (c) {
    case LabelConfig::Aligned: return "Aligned";
    case LabelConfig::FixedGood: return "FixedGood";
    case LabelConfig::FixedBad: return "FixedBad";
    case LabelConfig::Custom: return "Custom";
  }
  return "Custom";
}

inline std::optional<LabelConfig> parse_label_config(std::string_view s) {
  for (auto c : {LabelConfig::Aligned, LabelConfig::FixedGood, LabelConfig::FixedBad, LabelConfig::Custom}) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

class LabelPair {
 public:
  LabelPair(std::string ad_word, std::string hc_word, LabelConfig config = LabelConfig::Custom)
      : ad_word_(std::move(ad_word)), hc_word_(std::move(hc_word)), config_(config) {
    if (ad_word_.empty() || hc_word_.empty()) throw data_error("label pair: label words must be non-empty");
    if (text::iequals(ad_word_, hc_word_)) throw data_error("label pair: '" + ad_word_ + "' used for both classes");
    for (const auto& w : {ad_word_, hc_word_}) {
      for (unsigned char c : w) {
        if (std::isspace(c)) throw data_error("label pair: label word '" + w + "' contains whitespace");
      }
    }
  }

  // AD -> "Bad", HC -> "Good".
  static LabelPair standard() { return {"Bad", "Good", LabelConfig::Aligned}; }

  const std::string& ad_word() const noexcept { return ad_word_; }
  const std::string& hc_word() const noexcept { return hc_word_; }
  LabelConfig config() const noexcept { return config_; }
  const std::string& word_for(Label l) const noexcept { return l == Label::AD ? ad_word_ : hc_word_; }
  std::string name() const { return ad_word_ + "/" + hc_word_; }

  friend bool operator==(const LabelPair&, const LabelPair&) = default;

 private:
  std::string ad_word_;
  std::string hc_word_;
  LabelConfig config_;
};

struct Demo {
  std::string text;
  std::string label;
};

struct PromptSpec {
  std::vector<Demo> demos;
  std::string query_text;
  LabelPair label_pair = LabelPair::standard();
  std::optional<double> conf_hint;
  std::optional<double> feat_hint;  // the query's S_feat
  std::string template_id = "ekicl-v1";
};

inline constexpr std::string_view kConfidenceLinePrefix = "Reference screening probability of impairment: ";
inline constexpr std::string_view kFeatureLinePrefix = "Structural typicality score: ";

inline std::string build_prompt(const PromptSpec& spec) {
  if (spec.template_id != "ekicl-v1") throw usage_error("unknown prompt template '" + spec.template_id + "'");
  std::string out = fmt::format("You will read a picture description. Rate it with exactly one word: {} or {}.\n\n",
                                spec.label_pair.ad_word(), spec.label_pair.hc_word());
  for (const auto& d : spec.demos) out += fmt::format("Description: {}\nAnswer: {}\n\n", d.text, d.label);
  if (spec.conf_hint) out += fmt::format("{}{:.2f}\n", kConfidenceLinePrefix, *spec.conf_hint);
  if (spec.feat_hint) out += fmt::format("{}{:.4f}\n", kFeatureLinePrefix, *spec.feat_hint);
  out += fmt::format("Description: {}\nAnswer:", spec.query_text);
  return out;
}

enum class Vote : std::uint8_t { AD, HC, Abstain };

inline std::string_view to_string(Vote v) {
  switch (v) {
    case Vote::AD: return "AD";
    case Vote::HC: return "HC";
    case Vote::Abstain: return "Abstain";
  }
  return "Abstain";
}

namespace prompting_detail {

inline bool word_char(unsigned char c) { return std::isalnum(c) || c == '-' || c == '\'' || c == '_'; }

// Earliest case-insensitive whole-word occurrence of `word` in `text`.
inline std::optional<std::size_t> find_word(std::string_view text, std::string_view word) {
  const std::string hay = text::to_lower(text);
  const std::string needle = text::to_lower(word);
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) {
    const bool left = pos == 0 || !word_char(static_cast<unsigned char>(hay[pos - 1]));
    const std::size_t end = pos + needle.size();
    const bool right = end == hay.size() || !word_char(static_cast<unsigned char>(hay[end]));
    if (left && right) return pos;
  }
  return std::nullopt;
}

}  // namespace prompting_detail

// Whole-word label scan; when both words occur the earlier one wins.
inline Vote parse_completion(std::string_view completion, const LabelPair& pair) {
  const auto ad = prompting_detail::find_word(completion, pair.ad_word());
  const auto hc = prompting_detail::find_word(completion, pair.hc_word());
  if (ad && hc) return *ad <= *hc ? Vote::AD : Vote::HC;
  if (ad) return Vote::AD;
  if (hc) return Vote::HC;
  return Vote::Abstain;
}

// CSV "config_class,ad_word,hc_word"; an optional header row and '#' comments are skipped.
inline std::vector<LabelPair> parse_label_pairs(std::string_view body) {
  std::vector<LabelPair> pairs;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(body, '\n')) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = text::split(line, ',');
    if (cols.size() != 3) throw data_error("label pairs line " + std::to_string(line_no) + ": expected 3 columns");
    const std::string cls(text::trim(cols[0]));
    if (cls == "config_class") continue;
    const auto config = parse_label_config(cls);
    if (!config) throw data_error("label pairs line " + std::to_string(line_no) + ": unknown config class '" + cls + "'");
    LabelPair pair(std::string(text::trim(cols[1])), std::string(text::trim(cols[2])), *config);
    if (!seen.emplace(text::to_lower(pair.ad_word()), text::to_lower(pair.hc_word())).second) {
      throw data_error("label pairs line " + std::to_string(line_no) + ": duplicate pair " + pair.name());
    }
    pairs.push_back(std::move(pair));
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const LabelPair& a, const LabelPair& b) { return a.config() < b.config(); });
  return pairs;
}

inline std::vector<LabelPair> label_sweep_pairs(const std::filesystem::path& path) {
  return parse_label_pairs(read_file(path));
}

}  // namespace ekicl
