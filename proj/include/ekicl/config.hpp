#pragma once
// "key = value" configuration files. '#' starts a comment line; later keys override
// earlier ones. Unknown keys are rejected by the consumer, not here.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "ekicl/common.hpp"

namespace ekicl {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view body, const std::string& source = "config") {
    KeyValueConfig cfg;
    std::size_t line_no = 0;
    for (const auto& raw : text::split(body, '\n')) {
      ++line_no;
      const auto line = text::trim(raw);
      if (line.empty() || line.front() == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw usage_error(source + ":" + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key(text::trim(line.substr(0, eq)));
      if (key.empty()) throw usage_error(source + ":" + std::to_string(line_no) + ": empty key");
      cfg.values_[key] = std::string(text::trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::string body;
    try {
      body = read_file(path);
    } catch (const Error&) {
      throw usage_error("cannot read config file " + path.string());
    }
    return parse(body, path.string());
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    return std::nullopt;
  }

  std::string get_or(const std::string& key, std::string fallback) const {
    return get(key).value_or(std::move(fallback));
  }

  template <typename T>
  T number_or(const std::string& key, T fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    T out{};
    const auto* end = v->data() + v->size();
    const auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end) throw usage_error("config key '" + key + "': not a number: " + *v);
    return out;
  }

  bool bool_or(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw usage_error("config key '" + key + "': not a boolean: " + *v);
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ekicl
