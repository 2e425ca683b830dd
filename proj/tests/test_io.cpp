#include <gtest/gtest.h>

#include "donorpl/io/config.hpp"
#include "donorpl/io/report.hpp"
#include "donorpl/io/scenario.hpp"
#include "donorpl/io/spectrum_file.hpp"
#include "donorpl/io/svg_plot.hpp"
#include "donorpl/io/units.hpp"

using namespace donorpl;
using namespace donorpl::io;

namespace {

const char* sample_config = R"(# comment
[system]
preset = Bi

[exciton]
g1 = 0.9   # trailing comment
c_dia = 0.01

[fit]
free = e_offset, amplitude t_fit
auto_init = yes
)";

}  // namespace

TEST(Config, ParsesSectionsAndTypes) {
  const auto cfg = Config::parse(sample_config);
  EXPECT_EQ(cfg.get("system", "preset").value(), "Bi");
  EXPECT_DOUBLE_EQ(cfg.number("exciton", "g1").value(), 0.9);
  EXPECT_EQ(cfg.list("fit", "free"), (std::vector<std::string>{"e_offset", "amplitude", "t_fit"}));
  EXPECT_TRUE(cfg.boolean("fit", "auto_init").value());
  EXPECT_FALSE(cfg.has("exciton", "g2"));
}

TEST(Config, RoundTripIsIdentity) {
  const auto a = Config::parse(sample_config);
  const auto b = Config::parse(a.serialize());
  EXPECT_EQ(a, b);
  EXPECT_EQ(b.serialize(), a.serialize());
}

TEST(Config, UnknownKeySuggestsNearest) {
  try {
    Config::parse("[exciton]\ng_1 = 0.8\n", "x.cfg");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("did you mean 'g1'"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownSectionSuggestsNearest) {
  try {
    Config::parse("[kinetic]\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("[kinetics]"), std::string::npos) << e.what();
  }
}

TEST(Config, RejectsDuplicatesAndBareLines) {
  EXPECT_THROW(Config::parse("[exciton]\ng1 = 1\ng1 = 2\n"), ParseError);
  EXPECT_THROW(Config::parse("[exciton]\ng1\n"), ParseError);
  EXPECT_THROW(Config::parse("g1 = 1\n"), ParseError);
}

TEST(Config, MalformedNumberIsReported) {
  const auto cfg = Config::parse("[exciton]\ng1 = fast\n");
  EXPECT_THROW(cfg.number("exciton", "g1"), std::exception);
}

TEST(Units, ConversionsRoundTrip) {
  EXPECT_DOUBLE_EQ(to_uev(1.0, EnergyUnit::meV), 1000.0);
  EXPECT_NEAR(from_uev(to_uev(1475.4, EnergyUnit::MHz), EnergyUnit::MHz), 1475.4, 1e-9);
  EXPECT_NEAR(to_uev(1475.4, EnergyUnit::MHz), 6.1018, 1e-3);
  EXPECT_THROW(parse_unit("eV"), std::invalid_argument);
}

TEST(SpectrumFile, MeVConvertedToMicroEv) {
  const auto g = parse_spectrum_text("1150.0 0.5\n1150.1 0.7\n");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_NEAR(g.energies[0], 1.1500e6, 1e-6);
  EXPECT_NEAR(g.energies[1], 1.1501e6, 1e-6);
  EXPECT_DOUBLE_EQ(g.intensities[1], 0.7);
}

TEST(SpectrumFile, MicroEvHeaderMeansNoConversion) {
  const auto g = parse_spectrum_text("# unit: ueV\n1150.0 0.5\n1150.1 0.7\n");
  EXPECT_DOUBLE_EQ(g.energies[0], 1150.0);
  EXPECT_DOUBLE_EQ(g.energies[1], 1150.1);
}

TEST(SpectrumFile, MalformedRowNamesLine) {
  try {
    parse_spectrum_text("# header\n1150.0 0.5\nabc 1.0\n", "data.txt");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("data.txt:3"), std::string::npos) << e.what();
  }
}

TEST(SpectrumFile, MonotonicityEnforcedAndDescendingReversed) {
  EXPECT_THROW(parse_spectrum_text("1 0\n2 0\n2 0\n"), ParseError);
  EXPECT_THROW(parse_spectrum_text("1 0\n3 0\n2 0\n"), ParseError);
  const auto g = parse_spectrum_text("# unit: ueV\n3 30\n2 20\n1 10\n");
  EXPECT_EQ(g.energies, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(g.intensities, (std::vector<double>{10, 20, 30}));
}

TEST(SpectrumFile, MinimumRowCount) {
  EXPECT_THROW(parse_spectrum_text("1 0\n2 0\n", "s", EnergyUnit::meV, 8), ParseError);
  EXPECT_THROW(parse_spectrum_text("1 0 5\n2 0\n"), ParseError);
}

TEST(SpectrumFile, FormatParseRoundTrip) {
  SpectrumGrid g{{-10.25, 0.0, 12.5}, {1.0, 2.5, 0.125}};
  for (auto u : {EnergyUnit::ueV, EnergyUnit::meV, EnergyUnit::MHz}) {
    const auto back = parse_spectrum_text(format_spectrum(g, u, {"test"}));
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(back.energies[i], g.energies[i], 1e-9);
      EXPECT_DOUBLE_EQ(back.intensities[i], g.intensities[i]);
    }
  }
}

TEST(Report, TextAndJsonAgree) {
  Report r;
  r.add("T_fit_K", 1.5);
  r.add("iterations", 12);
  r.add("converged", true);
  r.add("sigma", std::numeric_limits<double>::quiet_NaN());
  r.add("system", "Bi");
  EXPECT_EQ(r.text(), "T_fit_K = 1.5\niterations = 12\nconverged = true\nsigma = nan\nsystem = Bi\n");
  const auto j = r.json();
  EXPECT_DOUBLE_EQ(j["T_fit_K"].get<double>(), 1.5);
  EXPECT_EQ(j["iterations"].get<long long>(), 12);
  EXPECT_TRUE(j["sigma"].is_null());
  EXPECT_EQ(j.begin().key(), "T_fit_K");
}

TEST(Csv, HeaderAndRows) {
  CsvTable t({"a_ueV", "b"});
  t.row({"1", "x"});
  EXPECT_EQ(t.text(), "a_ueV,b\n1,x\n");
  EXPECT_THROW(t.row({"1"}), std::logic_error);
}

TEST(Svg, RendersPolylineAndEscapesLabels) {
  const auto xy = parse_xy_text("time_s,N<a&b>\n0,1\n1,2\n2,0.5\n");
  EXPECT_EQ(xy.x.size(), 3u);
  const auto svg = svg_line_chart(xy, "t & y");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(svg.find("N&lt;a&amp;b&gt;"), std::string::npos);
  EXPECT_NE(svg.find("t &amp; y"), std::string::npos);
  EXPECT_THROW(parse_xy_text("1 2\n"), ParseError);
}

TEST(Scenario, FitConfigLayering) {
  const auto cfg = Config::parse("[exciton]\ng1 = 0.9\n[spectrum]\nfield = 4\n[fit]\ng1 = 1.1\nfree = p_fit\nshared = g1\n");
  const auto f = fit_from_config(cfg);
  EXPECT_DOUBLE_EQ(f.initial[Param::g1], 1.1);
  EXPECT_DOUBLE_EQ(f.context.field, 4.0);
  EXPECT_TRUE(f.initial.is_free(Param::p_fit));
  EXPECT_FALSE(f.initial.is_free(Param::t_fit));
  EXPECT_EQ(f.shared, std::set<Param>{Param::g1});
  EXPECT_THROW(fit_from_config(Config::parse("[fit]\nfree = p_fti\n")), std::invalid_argument);
}

TEST(Scenario, KineticsConfig) {
  const auto k = kinetics_from_config(Config::parse("[kinetics]\ncapture_time_us = 5\nfe_polarization = equilibrium\n"));
  EXPECT_DOUBLE_EQ(k.params.capture_rate, 2e5);
  EXPECT_FALSE(k.params.fe_polarization.has_value());
  EXPECT_THROW(kinetics_from_config(Config::parse("[kinetics]\ncapture_time_us = 5\ncapture_rate = 1\n")),
               std::invalid_argument);
  const auto grid = kinetics_time_grid(1e-2, 7);
  ASSERT_EQ(grid.size(), 7u);
  EXPECT_EQ(grid[0], 0.0);
  EXPECT_NEAR(grid[1], 1e-7, 1e-20);
  EXPECT_NEAR(grid.back(), 1e-2, 1e-15);
}

TEST(Scenario, CustomSystem) {
  const auto sys = system_from_config(
      Config::parse("[system]\nlabel = X\nnuclear_spin = 1.5\nhyperfine_MHz = 100\n"));
  EXPECT_EQ(sys.nuclear_spin.twice(), 3);
  EXPECT_NEAR(sys.hyperfine, to_uev(100, EnergyUnit::MHz), 1e-12);
}
