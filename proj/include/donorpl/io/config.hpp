#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace donorpl::io {

/// Error in a text input, carrying the 1-based line number (0 if none).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Closest candidate within an edit distance of max(2, |word| / 3).
inline std::optional<std::string> suggest(std::string_view word, const std::vector<std::string>& candidates) {
  std::optional<std::string> best;
  std::size_t best_d = std::max<std::size_t>(2, word.size() / 3) + 1;
  for (const auto& c : candidates) {
    const auto d = edit_distance(word, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

inline std::optional<double> parse_double(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Allowed keys per section.
using Schema = std::map<std::string, std::vector<std::string>>;

inline const Schema& default_schema() {
  static const Schema schema{
      {"system", {"preset", "label", "nuclear_spin", "hyperfine_ueV", "hyperfine_MHz", "electron_g", "nuclear_g"}},
      {"exciton", {"g1", "g2", "c_dia", "e_offset"}},
      {"spectrum",
       {"field", "temperature", "polarization", "fwhm", "eta", "instrument_fwhm", "cutoff", "mode", "points",
        "margin", "amplitude", "noise", "strength1", "strength2", "strength3", "strength4", "strength5",
        "strength6"}},
      {"fit",
       {"field", "t_fit", "p_fit", "amplitude", "e_offset", "fwhm", "eta", "g1", "g2", "c_dia", "strength1",
        "strength2", "strength3", "strength4", "strength5", "strength6", "free", "shared", "auto_init",
        "instrument_fwhm", "cutoff", "mode", "weights", "max_iterations", "cost_rtol", "step_tol",
        "initial_damping"}},
      {"kinetics",
       {"model", "capture_rate", "capture_time_us", "eta_so", "fe_polarization", "w_rate", "r_rate",
        "r_temperature", "field", "temperature", "initial", "t_stop", "points", "walkers", "threshold"}},
  };
  return schema;
}

/// Line-oriented "[section]" / "key = value" text with '#' comments.
class Config {
 public:
  using Section = std::map<std::string, std::string>;

  static Config parse(std::string_view text, const std::string& source = "config",
                      const Schema& schema = default_schema()) {
    Config cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::vector<std::string> section_names;
    for (const auto& [name, keys] : schema) section_names.push_back(name);
    while (std::getline(in, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ParseError(source, line_no, "unterminated section header '" + line + "'");
        section = trim(line.substr(1, line.size() - 2));
        if (!schema.count(section)) {
          std::string msg = "unknown section [" + section + "]";
          if (auto s = suggest(section, section_names)) msg += "; did you mean [" + *s + "]?";
          throw ParseError(source, line_no, msg);
        }
        cfg.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value', got '" + line + "'");
      if (section.empty()) throw ParseError(source, line_no, "key outside of any [section]");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError(source, line_no, "empty key");
      const auto& allowed = schema.at(section);
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        std::string msg = "unknown key '" + key + "' in [" + section + "]";
        if (auto s = suggest(key, allowed)) msg += "; did you mean '" + *s + "'?";
        throw ParseError(source, line_no, msg);
      }
      if (cfg.sections_[section].count(key)) throw ParseError(source, line_no, "duplicate key '" + key + "'");
      cfg.sections_[section][key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path, const Schema& schema = default_schema()) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path, schema);
  }

  std::string serialize() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [name, keys] : sections_) {
      if (!first) os << '\n';
      first = false;
      os << '[' << name << "]\n";
      for (const auto& [k, v] : keys) os << k << " = " << v << '\n';
    }
    return os.str();
  }

  bool has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key);
  }

  std::optional<std::string> get(const std::string& section, const std::string& key) const {
    if (!has(section, key)) return std::nullopt;
    return sections_.at(section).at(key);
  }

  std::optional<double> number(const std::string& section, const std::string& key) const {
    auto s = get(section, key);
    if (!s) return std::nullopt;
    auto v = parse_double(*s);
    if (!v) throw std::invalid_argument("[" + section + "] " + key + ": '" + *s + "' is not a number");
    return v;
  }

  std::optional<bool> boolean(const std::string& section, const std::string& key) const {
    auto s = get(section, key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "yes" || *s == "1") return true;
    if (*s == "false" || *s == "no" || *s == "0") return false;
    throw std::invalid_argument("[" + section + "] " + key + ": '" + *s + "' is not a boolean");
  }

  /// Comma- or whitespace-separated list.
  std::vector<std::string> list(const std::string& section, const std::string& key) const {
    std::vector<std::string> out;
    auto s = get(section, key);
    if (!s) return out;
    std::string item;
    for (char c : *s + ",") {
      if (c == ',' || c == ' ' || c == '\t') {
        if (!item.empty()) out.push_back(item);
        item.clear();
      } else {
        item += c;
      }
    }
    return out;
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
  }

  const std::map<std::string, Section>& sections() const { return sections_; }
  bool operator==(const Config&) const = default;

 private:
  std::map<std::string, Section> sections_;
};

}  // namespace donorpl::io
