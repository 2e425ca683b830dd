#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace donorpl::io {

/// Ordered key = value report with a JSON mirror.
class Report {
 public:
  using Value = std::variant<double, long long, bool, std::string>;

  void add(std::string key, double v) { entries_.emplace_back(std::move(key), v); }
  void add(std::string key, int v) { entries_.emplace_back(std::move(key), static_cast<long long>(v)); }
  void add(std::string key, long long v) { entries_.emplace_back(std::move(key), v); }
  void add(std::string key, std::size_t v) { entries_.emplace_back(std::move(key), static_cast<long long>(v)); }
  void add(std::string key, bool v) { entries_.emplace_back(std::move(key), v); }
  void add(std::string key, std::string v) { entries_.emplace_back(std::move(key), std::move(v)); }
  void add(std::string key, const char* v) { add(std::move(key), std::string(v)); }

  const std::vector<std::pair<std::string, Value>>& entries() const { return entries_; }

  std::string text() const {
    std::ostringstream os;
    os << std::setprecision(10);
    for (const auto& [k, v] : entries_) {
      os << k << " = ";
      std::visit([&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) os << (x ? "true" : "false");
        else if constexpr (std::is_same_v<T, double>) {
          if (std::isnan(x)) os << "nan";
          else os << x;
        } else os << x;
      }, v);
      os << '\n';
    }
    return os.str();
  }

  nlohmann::ordered_json json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : entries_) {
      std::visit([&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) {
          if (std::isfinite(x)) j[k] = x;
          else j[k] = nullptr;
        } else {
          j[k] = x;
        }
      }, v);
    }
    return j;
  }

 private:
  std::vector<std::pair<std::string, Value>> entries_;
};

/// Column-oriented CSV; headers carry units, e.g. "energy_ueV".
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw std::logic_error("CsvTable: row width mismatch");
    rows_.push_back(cells);
  }

  static std::string num(double v, int precision = 10) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
  }

  std::string text() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t k = 0; k < cells.size(); ++k) os << (k ? "," : "") << cells[k];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << content;
  if (!f) throw std::runtime_error("error writing '" + path + "'");
}

}  // namespace donorpl::io
