#pragma once
// Parsing-category annotation: a first-match-wins cascade over closed-class lexicons and
// optional UPOS tags.
//
//   1. filler lexicon or INTJ                         -> Filler
//   2. pronoun lexicon or PRON                        -> Pronoun
//   3. VERB/AUX (untagged: verb lexicon or suffix)    -> Action
//   4. noun with a preposition 1-2 tokens earlier     -> Location
//   5. noun before the utterance's first Action       -> Subject
//   6. any other noun                                 -> Object
//   7. otherwise                                      -> None
//
// Nouns are NOUN/PROPN when tagged, scene-lexicon hits (singular or simple plural) otherwise.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "ekicl/chat_corpus.hpp"
#include "ekicl/common.hpp"

namespace ekicl {

enum class Category : std::uint8_t { Subject, Object, Action, Location, Filler, Pronoun, None };

inline constexpr std::size_t kNumCategories = 6;

inline constexpr std::array<Category, kNumCategories> kCategories = {
    Category::Subject, Category::Object, Category::Action,
    Category::Location, Category::Filler, Category::Pronoun};

inline constexpr std::size_t index_of(Category c) { return static_cast<std::size_t>(c); }

inline std::string_view category_name(Category c) {
  static constexpr std::array<std::string_view, 7> names = {"Subject", "Object", "Action", "Location",
                                                            "Filler", "Pronoun", "None"};
  return names[index_of(c)];
}

using CategoryCounts = std::array<std::size_t, kNumCategories>;

struct Lexicons {
  std::set<std::string, std::less<>> fillers;
  std::set<std::string, std::less<>> pronouns;
  std::set<std::string, std::less<>> prepositions;
  std::set<std::string, std::less<>> verbs;
  std::set<std::string, std::less<>> nouns;

  // Same word lists as data/lexicons/*.txt.
  static const Lexicons& defaults();

  // Reads fillers.txt, pronouns.txt, prepositions.txt, verbs.txt and nouns.txt from `dir`.
  static Lexicons load(const std::filesystem::path& dir);
};

namespace annotator_detail {

inline std::set<std::string, std::less<>> parse_lexicon(std::string_view body) {
  std::set<std::string, std::less<>> out;
  for (const auto& line : text::split(body, '\n')) {
    auto entry = line;
    if (const auto hash = entry.find('#'); hash != std::string::npos) entry.resize(hash);
    const auto word = text::trim(entry);
    if (!word.empty()) out.insert(text::to_lower(word));
  }
  return out;
}

inline std::set<std::string, std::less<>> words(std::initializer_list<std::string_view> list) {
  std::set<std::string, std::less<>> out;
  for (auto w : list) out.emplace(w);
  return out;
}

}  // namespace annotator_detail

inline const Lexicons& Lexicons::defaults() {
  using annotator_detail::words;
  static const Lexicons lex{
      words({"ah", "eh", "er", "erm", "hm", "hmm", "mhm", "mm", "oh", "uh", "uhm", "um"}),
      words({"anybody", "anyone", "anything", "everybody", "everyone", "everything", "he", "he's",
             "her", "hers", "herself", "him", "himself", "his", "i", "i'm", "it", "it's", "its",
             "itself", "me", "mine", "my", "myself", "nobody", "nothing", "our", "ours", "she",
             "she's", "somebody", "someone", "something", "their", "theirs", "them", "themselves",
             "they", "they're", "us", "we", "we're", "you", "you're", "your", "yours"}),
      words({"at", "by", "from", "in", "into", "near", "on", "over", "under"}),
      words({"am", "are", "be", "been", "being", "climb", "climbs", "could", "did", "do", "does",
             "dries", "dry", "fall", "falls", "fell", "get", "gets", "give", "gives", "go", "goes",
             "gone", "got", "grab", "grabs", "had", "has", "have", "hold", "holds", "is", "know",
             "laugh", "laughs", "look", "looks", "overflow", "overflows", "put", "puts", "reach",
             "reaches", "run", "runs", "said", "saw", "say", "says", "see", "sees", "seem", "seems",
             "sit", "sits", "spill", "spills", "stand", "stands", "steal", "steals", "take",
             "takes", "think", "tip", "tips", "took", "want", "wants", "was", "wash", "washes",
             "were", "will", "would"}),
      words({"apron", "boy", "brother", "bush", "cabinet", "ceiling", "chair", "child", "children",
             "cookie", "counter", "cup", "cupboard", "curtain", "daughter", "dish", "dishcloth", "door",
             "drape", "faucet", "floor", "food", "garden", "girl", "grass", "house", "jar", "kid",
             "kitchen", "lady", "lawn", "lid", "mom", "mommy", "mother", "path", "picture", "plate",
             "shelf", "sink", "sister", "son", "stool", "tap", "thing", "towel", "tree", "walk",
             "water", "window", "woman", "yard"})};
  return lex;
}

inline Lexicons Lexicons::load(const std::filesystem::path& dir) {
  using annotator_detail::parse_lexicon;
  return Lexicons{parse_lexicon(read_file(dir / "fillers.txt")), parse_lexicon(read_file(dir / "pronouns.txt")),
                  parse_lexicon(read_file(dir / "prepositions.txt")), parse_lexicon(read_file(dir / "verbs.txt")),
                  parse_lexicon(read_file(dir / "nouns.txt"))};
}

namespace annotator_detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool lexicon_noun(const Lexicons& lex, std::string_view w) {
  if (lex.nouns.count(w)) return true;
  if (ends_with(w, "ies") && w.size() > 4) {
    std::string stem(w.substr(0, w.size() - 3));
    if (lex.nouns.count(stem + "y")) return true;
  }
  if (ends_with(w, "es") && lex.nouns.count(w.substr(0, w.size() - 2))) return true;
  if (ends_with(w, "s") && lex.nouns.count(w.substr(0, w.size() - 1))) return true;
  return false;
}

inline bool heuristic_verb(const Lexicons& lex, std::string_view w) {
  if (lex.verbs.count(w)) return true;
  if (w.size() >= 5 && (ends_with(w, "ing") || ends_with(w, "ed"))) return !lexicon_noun(lex, w);
  return false;
}

}  // namespace annotator_detail

// Treats the whole token list as a single utterance.
inline std::vector<Category> categorize(std::span<const std::string> tokens,
                                        const std::optional<std::vector<std::string>>& pos_tags = std::nullopt,
                                        const Lexicons& lex = Lexicons::defaults()) {
  using namespace annotator_detail;
  if (pos_tags && pos_tags->size() != tokens.size()) {
    throw data_error("categorize: " + std::to_string(tokens.size()) + " tokens but " +
                     std::to_string(pos_tags->size()) + " POS tags");
  }
  const std::size_t n = tokens.size();
  std::vector<Category> out(n, Category::None);
  std::vector<bool> noun(n, false);

  for (std::size_t i = 0; i < n; ++i) {
    const std::string word = text::to_lower(tokens[i]);
    const std::string_view tag = pos_tags ? std::string_view((*pos_tags)[i]) : std::string_view{};
    if (lex.fillers.count(word) || tag == "INTJ") {
      out[i] = Category::Filler;
    } else if (lex.pronouns.count(word) || tag == "PRON") {
      out[i] = Category::Pronoun;
    } else if (pos_tags ? (tag == "VERB" || tag == "AUX") : heuristic_verb(lex, word)) {
      out[i] = Category::Action;
    } else {
      noun[i] = pos_tags ? (tag == "NOUN" || tag == "PROPN") : lexicon_noun(lex, word);
    }
  }

  std::size_t first_action = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (out[i] == Category::Action) {
      first_action = i;
      break;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!noun[i]) continue;
    bool after_preposition = false;
    for (std::size_t back = 1; back <= 2 && back <= i; ++back) {
      if (lex.prepositions.count(text::to_lower(tokens[i - back]))) after_preposition = true;
    }
    if (after_preposition) {
      out[i] = Category::Location;
    } else if (i < first_action) {
      out[i] = Category::Subject;
    } else {
      out[i] = Category::Object;
    }
  }
  return out;
}

// Utterance-aware categorization of a parsed transcript (no POS tags).
inline std::vector<Category> categorize(const Transcript& t, const Lexicons& lex = Lexicons::defaults()) {
  std::vector<Category> out;
  out.reserve(t.tokens.size());
  for (const auto& u : t.utterances) {
    const auto cats = categorize(u.tokens, std::nullopt, lex);
    out.insert(out.end(), cats.begin(), cats.end());
  }
  return out;
}

inline CategoryCounts category_frequencies(std::span<const Category> categories) {
  CategoryCounts counts{};
  for (Category c : categories) {
    if (c != Category::None) ++counts[index_of(c)];
  }
  return counts;
}

struct DatasetCounts {
  std::string dataset;
  std::vector<CategoryCounts> per_transcript;
};

// CSV "dataset,category,mean_frequency": mean per-transcript count of each category.
inline void write_stats_csv(std::ostream& out, std::span<const DatasetCounts> datasets) {
  out << "dataset,category,mean_frequency\n";
  for (const auto& ds : datasets) {
    if (ds.per_transcript.empty()) throw data_error("stats: dataset '" + ds.dataset + "' has no transcripts");
    for (Category c : kCategories) {
      double total = 0.0;
      for (const auto& counts : ds.per_transcript) total += static_cast<double>(counts[index_of(c)]);
      out << fmt::format("{},{},{:.4f}\n", ds.dataset, category_name(c),
                         total / static_cast<double>(ds.per_transcript.size()));
    }
  }
}

}  // namespace ekicl
