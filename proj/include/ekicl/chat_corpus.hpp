#pragma once
// CHAT (.cha) transcript parsing.
//
// Only a subset of the CHAT grammar is understood:
//   @Header lines and %dependent tiers are skipped; "*SPK:\t..." main tiers are kept for
//   the participant (and optionally the investigator); tab-indented lines continue the
//   previous tier.
//   Content markup:
//     &-um          filler, kept as "um"
//     &=laughs      action, dropped (as is any other &-code such as &+fr)
//     [/] [//]      retracing: marker dropped along with the preceding token or <...> group
//     [: word]      replacement of the preceding token or group
//     [anything]    other bracket codes are dropped
//     goin(g)       omitted letters restored -> "going"
//     (.) (..)      pauses dropped
//     xxx yyy www   unintelligible / untranscribed, dropped
//     0word         omitted word, dropped
//     word@s        special-form suffix stripped
//     ice+cream     compounds split into separate tokens (also on '_')
//   Punctuation and terminators are dropped, tokens are lowercased, and only
//   [a-z0-9'-] survive inside a token.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ekicl/common.hpp"

namespace ekicl {

struct Utterance {
  std::string speaker;
  std::string raw;
  std::vector<std::string> tokens;
};

struct Transcript {
  std::string id;
  std::vector<Utterance> utterances;
  std::vector<std::string> tokens;
  std::optional<Label> gold_label;
};

struct ParseOptions {
  bool include_investigator = false;
};

namespace chat_detail {

inline bool is_token_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'' || c == '-';
}

inline bool has_alnum(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

// Normalizes one whitespace-delimited CHAT word into zero or more tokens.
inline std::vector<std::string> normalize_word(std::string_view word) {
  std::vector<std::string> out;
  if (word.empty()) return out;
  if (word.front() == '&') {
    if (word.size() > 2 && word[1] == '-') {
      word.remove_prefix(2);
    } else {
      return out;
    }
  }
  if (word.front() == '0' && word.size() > 1 && std::isalpha(static_cast<unsigned char>(word[1]))) {
    return out;
  }
  if (const auto at = word.find('@'); at != std::string_view::npos) word = word.substr(0, at);

  const std::string lowered = text::to_lower(word);
  if (lowered == "xxx" || lowered == "yyy" || lowered == "www") return out;

  std::string piece;
  auto flush = [&] {
    std::string_view p = piece;
    while (!p.empty() && (p.front() == '\'' || p.front() == '-')) p.remove_prefix(1);
    while (!p.empty() && (p.back() == '\'' || p.back() == '-')) p.remove_suffix(1);
    if (has_alnum(p)) out.emplace_back(p);
    piece.clear();
  };
  for (unsigned char c : lowered) {
    if (c == '+' || c == '_') {
      flush();
    } else if (is_token_char(c)) {
      piece.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

}  // namespace chat_detail

// Tokenizes the content of one main tier (the text after "*SPK:\t").
inline std::vector<std::string> normalize_content(std::string_view content) {
  using Unit = std::vector<std::string>;
  std::vector<Unit> units;
  std::vector<std::size_t> group_starts;

  auto close_group = [&] {
    const std::size_t start = group_starts.back();
    group_starts.pop_back();
    Unit merged;
    for (std::size_t u = start; u < units.size(); ++u) {
      merged.insert(merged.end(), units[u].begin(), units[u].end());
    }
    units.resize(start);
    if (!merged.empty()) units.push_back(std::move(merged));
  };

  std::size_t i = 0;
  const std::size_t n = content.size();
  while (i < n) {
    const char c = content[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '\x15') {  // media bullet
      const auto end = content.find('\x15', i + 1);
      i = end == std::string_view::npos ? n : end + 1;
    } else if (c == '[') {
      const auto end = content.find(']', i);
      const std::string_view code =
          text::trim(content.substr(i + 1, (end == std::string_view::npos ? n : end) - i - 1));
      i = end == std::string_view::npos ? n : end + 1;
      if (code == "/" || code == "//") {
        if (!units.empty()) units.pop_back();
      } else if (code.size() > 1 && code[0] == ':' && std::isspace(static_cast<unsigned char>(code[1]))) {
        Unit replacement;
        for (const auto& w : text::split_ws(code.substr(1))) {
          auto toks = chat_detail::normalize_word(w);
          replacement.insert(replacement.end(), toks.begin(), toks.end());
        }
        if (!units.empty()) units.back() = std::move(replacement);
      }
    } else if (c == '<') {
      group_starts.push_back(units.size());
      ++i;
    } else if (c == '>') {
      if (!group_starts.empty()) close_group();
      ++i;
    } else {
      std::size_t j = i;
      while (j < n && !std::isspace(static_cast<unsigned char>(content[j])) && content[j] != '[' &&
             content[j] != '<' && content[j] != '>' && content[j] != '\x15') {
        ++j;
      }
      const std::string_view word = content.substr(i, j - i);
      i = j;
      const bool pause = std::all_of(word.begin(), word.end(),
                                     [](char ch) { return ch == '(' || ch == ')' || ch == '.'; });
      if (pause) continue;
      auto toks = chat_detail::normalize_word(word);
      if (!toks.empty()) units.push_back(std::move(toks));
    }
  }
  while (!group_starts.empty()) close_group();

  std::vector<std::string> tokens;
  for (auto& u : units) tokens.insert(tokens.end(), u.begin(), u.end());
  return tokens;
}

inline Transcript parse_chat(std::string_view text_in, std::string id = {}, ParseOptions options = {}) {
  std::string_view body = text_in;
  if (body.substr(0, 3) == "\xEF\xBB\xBF") body.remove_prefix(3);

  Transcript t;
  t.id = std::move(id);

  struct Tier {
    std::string speaker;
    std::string content;
    std::size_t line_no;
  };
  std::vector<Tier> tiers;
  bool continuing_main = false;

  std::size_t line_no = 0;
  for (std::string line : text::split(body, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char first = line.front();
    if (first == '@' || first == '%') {
      continuing_main = false;
      continue;
    }
    if (first == '\t' || first == ' ') {
      if (continuing_main) tiers.back().content += " " + line.substr(1);
      continue;
    }
    if (first != '*') {
      throw data_error("line " + std::to_string(line_no) + ": unrecognized line type");
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw data_error("line " + std::to_string(line_no) + ": malformed speaker line (no colon)");
    }
    std::string speaker = line.substr(1, colon - 1);
    const bool valid_code = speaker.size() == 3 && std::all_of(speaker.begin(), speaker.end(), [](char ch) {
                              return ch >= 'A' && ch <= 'Z';
                            });
    if (!valid_code) {
      throw data_error("line " + std::to_string(line_no) + ": invalid speaker code '" + speaker + "'");
    }
    tiers.push_back({std::move(speaker), line.substr(colon + 1), line_no});
    continuing_main = true;
  }

  for (auto& tier : tiers) {
    const bool keep = tier.speaker == "PAR" || (options.include_investigator && tier.speaker == "INV");
    if (!keep) continue;
    Utterance u;
    u.speaker = tier.speaker;
    u.raw = std::string(text::trim(tier.content));
    u.tokens = normalize_content(tier.content);
    if (u.tokens.empty()) continue;
    t.tokens.insert(t.tokens.end(), u.tokens.begin(), u.tokens.end());
    t.utterances.push_back(std::move(u));
  }
  if (t.tokens.empty()) throw data_error("no participant utterances");
  return t;
}

// Two-column CSV "id,label", label in {AD, HC}. A leading "id,label" header is skipped.
inline std::map<std::string, Label> read_label_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot read label manifest " + path.string());
  std::map<std::string, Label> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto cols = text::split(trimmed, ',');
    if (cols.size() != 2) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
    }
    const std::string id(text::trim(cols[0]));
    const std::string label(text::trim(cols[1]));
    if (line_no == 1 && id == "id" && label == "label") continue;
    const auto parsed = parse_label(label);
    if (!parsed) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": label must be AD or HC");
    }
    if (!out.emplace(id, *parsed).second) {
      throw data_error(path.string() + ": duplicate id '" + id + "'");
    }
  }
  return out;
}

struct CorpusLoad {
  std::vector<Transcript> transcripts;
  std::vector<std::string> warnings;
};


// Parses every .cha file in `directory` (non-recursive). Manifest entries without a file
// produce warnings rather than errors.
inline CorpusLoad load_corpus(const std::filesystem::path& directory,
                              const std::optional<std::filesystem::path>& manifest,
                              ParseOptions options = {}) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw data_error("not a directory: " + directory.string());
  const auto labels = manifest ? read_label_manifest(*manifest) : std::map<std::string, Label>{};

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && text::to_lower(entry.path().extension().string()) == ".cha") {
      files.push_back(entry.path());
    }
  }

  CorpusLoad load;
  std::map<std::string, fs::path> seen;
  for (const auto& file : files) {
    const std::string id = file.stem().string();
    if (auto [it, inserted] = seen.emplace(id, file); !inserted) {
      throw data_error("duplicate transcript id '" + id + "' (" + it->second.string() + ", " +
                       file.string() + ")");
    }
    Transcript t;
    try {
      t = parse_chat(read_file(file), id, options);
    } catch (const Error& e) {
      throw data_error(file.string() + ": " + e.what());
    }
    if (auto it = labels.find(id); it != labels.end()) t.gold_label = it->second;
    load.transcripts.push_back(std::move(t));
  }
  for (const auto& [id, label] : labels) {
    if (!seen.count(id)) load.warnings.push_back("manifest entry '" + id + "' has no .cha file");
  }
  std::sort(load.transcripts.begin(), load.transcripts.end(),
            [](const Transcript& a, const Transcript& b) { return a.id < b.id; });
  return load;
}

}  // namespace ekicl
