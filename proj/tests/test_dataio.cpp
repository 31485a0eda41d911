#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "gpecm/dataio.hpp"
#include "gpecm/error.hpp"
#include "gpecm/pchip.hpp"
#include "test_util.hpp"

using namespace gpecm;

namespace {

void write(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

// Cycles of constant current separated by rests.
RawTimeseries cycling(int cycles, double rest_s, double cycle_s) {
  RawTimeseries r;
  double t = 0.0;
  auto push = [&](double i, double lab) {
    r.t.push_back(t);
    r.i.push_back(i);
    r.v.push_back(3.7 + 0.01 * i);
    r.temp.push_back(25.0);
    r.t_amb.push_back(25.0);
    r.label.push_back(lab);
    t += 1.0;
  };
  for (int c = 0; c < cycles; ++c) {
    for (int k = 0; k < rest_s; ++k) push(0.0, 0);
    for (int k = 0; k < cycle_s; ++k) push(k % 20 < 10 ? -2.0 : 1.0, c + 1);
  }
  for (int k = 0; k < rest_s; ++k) push(0.0, 0);
  return r;
}

}  // namespace

TEST(Pchip, InterpolatesAndPreservesMonotonicity) {
  const std::vector<double> x{0, 1, 2, 3, 4}, y{0, 0.1, 0.15, 2.0, 2.05};
  const Pchip p(x, y);
  for (size_t k = 0; k < x.size(); ++k) EXPECT_DOUBLE_EQ(p(x[k]), y[k]);
  double prev = -1.0;
  for (double q = 0.0; q <= 4.0; q += 0.01) {
    EXPECT_GE(p(q), prev - 1e-15);
    prev = p(q);
    EXPECT_GE(p.derivative(q), -1e-12);
  }
  // Linear data is reproduced exactly.
  const Pchip lin({0, 1, 3, 7}, {1, 3, 7, 15});
  EXPECT_NEAR(lin(5.5), 12.0, 1e-13);
  EXPECT_THROW(Pchip({0, 0, 1}, {1, 2, 3}), InvalidArgument);
}

TEST(DataIo, WriteLoadRoundTripIsExact) {
  testutil::TempDir dir("gpecm_io");
  RawTimeseries r = cycling(1, 5, 7);
  r.v[3] = 3.123456789012345;
  r.zeta.assign(r.size(), 0.0);
  r.zeta[4] = 1.0 / 3.0;
  write_timeseries(dir.str("a.csv"), r);
  const RawTimeseries b = load_timeseries(dir.str("a.csv"));
  EXPECT_EQ(b.t, r.t);
  EXPECT_EQ(b.i, r.i);
  EXPECT_EQ(b.v, r.v);
  EXPECT_EQ(b.zeta, r.zeta);
  EXPECT_EQ(b.label, r.label);
}

TEST(DataIo, LoaderErrorsNameTheProblem) {
  testutil::TempDir dir("gpecm_io");
  write(dir.str("missing.csv"), "t_s,i_A,v_V\n0,0,3.7\n");
  EXPECT_THROW(load_timeseries(dir.str("missing.csv")), DataError);
  write(dir.str("order.csv"), "t_s,i_A,v_V,temp_C,t_amb_C\n0,0,3.7,25,25\n1,0,3.7,25,25\n1,0,3.7,25,25\n");
  try {
    load_timeseries(dir.str("order.csv"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_timeseries(dir.str("absent.csv")), DataError);
}

TEST(DataIo, SignConventionAmbientOverrideAndNanRows) {
  testutil::TempDir dir("gpecm_io");
  write(dir.str("d.csv"), "t_s,i_A,v_V,temp_C\n0,2,3.7,25\n1,nan,3.7,25\n2,-1,3.7,25\n");
  LoadOptions o;
  o.discharge_positive = true;
  o.t_amb_override = 20.0;
  LoadReport rep;
  const RawTimeseries r = load_timeseries(dir.str("d.csv"), o, &rep);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(rep.dropped_nan_rows, 1u);
  EXPECT_DOUBLE_EQ(r.i[0], -2.0);
  EXPECT_DOUBLE_EQ(r.i[1], 1.0);
  EXPECT_DOUBLE_EQ(r.t_amb[0], 20.0);
  o.t_amb_override.reset();
  EXPECT_THROW(load_timeseries(dir.str("d.csv"), o), DataError);
}

TEST(DataIo, SegmentationFindsCyclesWithLeadIn) {
  const RawTimeseries r = cycling(3, 400, 200);
  const auto spans = segment_cycles(r);
  ASSERT_EQ(spans.size(), 3u);
  for (const Span& s : spans) {
    EXPECT_DOUBLE_EQ(r.i[s.begin], 0.0);
    EXPECT_NE(r.i[s.begin + 30], 0.0);
    EXPECT_NEAR(static_cast<double>(s.size()), 230.0, 1.0);
  }
  SegmentRules by_label;
  by_label.use_label = true;
  EXPECT_EQ(segment_cycles(r, by_label).size(), 3u);
  RawTimeseries idle = cycling(0, 500, 0);
  EXPECT_THROW(segment_cycles(idle), DataError);
}

TEST(DataIo, SelectEvery) {
  std::vector<Span> s(5);
  for (size_t k = 0; k < 5; ++k) s[k] = {k * 10, k * 10 + 5};
  const auto sel = select_every(s, 2);
  ASSERT_EQ(sel.size(), 2u);
  EXPECT_EQ(sel[0].begin, 10u);
  EXPECT_EQ(sel[1].begin, 30u);
  EXPECT_THROW(select_every(s, 10), DataError);
}

TEST(DataIo, ThroughputAndResampling) {
  RawTimeseries r;
  for (int k = 0; k <= 1000; ++k) {
    r.t.push_back(k == 0 ? 0.0 : k + 0.3 * std::sin(k));
    r.i.push_back(-3.6);
    r.v.push_back(4.0 - 0.001 * r.t.back());
    r.temp.push_back(25.0);
    r.t_amb.push_back(25.0);
  }
  r.t.back() = 1000.0;
  const auto z = accumulate_zeta(r);
  EXPECT_NEAR(z.back(), 1.0, 1e-12);
  const CycleSegment seg = resample_1hz(r, {0, r.size()}, 4);
  EXPECT_EQ(seg.cycle_index, 4);
  EXPECT_DOUBLE_EQ(seg.dt, 1.0);
  ASSERT_EQ(seg.size(), 1001u);
  EXPECT_NEAR(seg.v[500], 4.0 - 0.5, 1e-9);
  EXPECT_DOUBLE_EQ(seg.zeta, 0.0);
}

TEST(DataIo, SegmentFileRoundTrip) {
  testutil::TempDir dir("gpecm_io");
  CycleSegment s;
  s.t0 = 100.0;
  s.zeta = 12.5;
  for (int k = 0; k < 50; ++k) {
    s.i.push_back(std::sin(k));
    s.v.push_back(3.7 + 0.01 * k);
    s.temp.push_back(25.0 + 0.01 * k);
    s.t_amb.push_back(25.0);
  }
  write_segment(dir.str("s.csv"), s);
  const CycleSegment b = read_segment(dir.str("s.csv"), 2);
  EXPECT_EQ(b.i, s.i);
  EXPECT_DOUBLE_EQ(b.zeta, 12.5);
  EXPECT_DOUBLE_EQ(b.t0, 100.0);
  write(dir.str("gap.csv"), "t_s,i_A,v_V,temp_C,t_amb_C\n0,0,3.7,25,25\n1,0,3.7,25,25\n3,0,3.7,25,25\n");
  EXPECT_THROW(read_segment(dir.str("gap.csv")), DataError);
}

TEST(DataIo, ThermalFitRecoversResistance) {
  std::vector<double> t, temp;
  const double r_c = 5.5, c_c = 15.7;
  for (int k = 0; k < 400; ++k) {
    t.push_back(k);
    temp.push_back(25.0 + 6.0 * std::exp(-k / (r_c * c_c)) + 0.01 * std::sin(7.0 * k));
  }
  const ThermalFit f = fit_thermal_resistance(t, temp, 25.0, c_c);
  EXPECT_NEAR(f.r_c, r_c, 0.01 * r_c);
  EXPECT_NEAR(f.delta_t0, 6.0, 0.05);
  EXPECT_LT(f.rmse, 0.02);
  EXPECT_THROW(fit_thermal_resistance(std::span(t).first(10), std::span(temp).first(10), 25.0, c_c), DataError);
}

TEST(DataIo, CheckupJsonRoundTrip) {
  CheckupRecord a;
  a.zeta = 30.0;
  a.capacity_ah = 0.81;
  a.pulse_r0_ohm = {{0.2, 0.061}, {0.5, 0.048}};
  a.warnings = {"missing pulse at 0.8"};
  const auto back = checkups_from_json(checkups_to_json({a}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_DOUBLE_EQ(back[0].zeta, 30.0);
  EXPECT_NEAR(back[0].pulse_r0_ohm.at(0.5), 0.048, 1e-15);
  EXPECT_EQ(back[0].warnings, a.warnings);
}
