#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "donorpl/io/config.hpp"
#include "donorpl/io/units.hpp"
#include "donorpl/spectrum.hpp"

namespace donorpl::io {

/// Two-column spectrum text: '#' comment lines, an optional '# unit: <u>'
/// header (meV when absent), then "energy intensity" rows. Energies must
/// be strictly monotone; descending files are reversed. Returns µeV.
inline SpectrumGrid parse_spectrum_text(std::string_view text, const std::string& source = "spectrum",
                                        EnergyUnit default_unit = EnergyUnit::meV, std::size_t min_rows = 2) {
  EnergyUnit unit = default_unit;
  SpectrumGrid g;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  std::vector<std::size_t> rows;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string body = trim(line.substr(1));
      if (body.rfind("unit:", 0) == 0) {
        try {
          unit = parse_unit(trim(body.substr(5)));
        } catch (const std::invalid_argument& e) {
          throw ParseError(source, line_no, e.what());
        }
      }
      continue;
    }
    std::istringstream row(line);
    std::string a, b, extra;
    row >> a >> b;
    if (b.empty()) throw ParseError(source, line_no, "expected two numbers, got '" + line + "'");
    if (row >> extra) throw ParseError(source, line_no, "unexpected third column '" + extra + "'");
    const auto e = parse_double(a);
    const auto y = parse_double(b);
    if (!e) throw ParseError(source, line_no, "malformed energy '" + a + "'");
    if (!y) throw ParseError(source, line_no, "malformed intensity '" + b + "'");
    g.energies.push_back(*e);
    g.intensities.push_back(*y);
    rows.push_back(line_no);
  }
  if (g.size() < min_rows)
    throw ParseError(source, 0, "need at least " + std::to_string(min_rows) + " data rows, found " +
                                    std::to_string(g.size()));
  const bool descending = g.size() > 1 && g.energies[1] < g.energies[0];
  for (std::size_t i = 1; i < g.size(); ++i) {
    const bool ok = descending ? g.energies[i] < g.energies[i - 1] : g.energies[i] > g.energies[i - 1];
    if (!ok) throw ParseError(source, rows[i], "energies are not strictly monotone");
  }
  if (descending) {
    std::reverse(g.energies.begin(), g.energies.end());
    std::reverse(g.intensities.begin(), g.intensities.end());
  }
  for (double& e : g.energies) e = to_uev(e, unit);
  return g;
}

inline SpectrumGrid parse_spectrum(const std::string& path, EnergyUnit default_unit = EnergyUnit::meV,
                                   std::size_t min_rows = 2) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open spectrum file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_spectrum_text(ss.str(), path, default_unit, min_rows);
}

inline std::string format_spectrum(const SpectrumGrid& g, EnergyUnit unit, const std::vector<std::string>& comments = {}) {
  std::ostringstream os;
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "# unit: " << unit_name(unit) << '\n';
  os << std::setprecision(12);
  for (std::size_t i = 0; i < g.size(); ++i) os << from_uev(g.energies[i], unit) << ' ' << g.intensities[i] << '\n';
  return os.str();
}

}  // namespace donorpl::io
