#include "gpecm/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "csv.hpp"
#include "gpecm/error.hpp"
#include "gpecm/pchip.hpp"

namespace gpecm {

using nlohmann::json;

RawTimeseries load_timeseries(const std::string& path, const LoadOptions& opt, LoadReport* report) {
  const csv::Table tab = csv::read(path);
  const ColumnMap& cm = opt.columns;
  auto need = [&](const std::string& name) {
    const int c = csv::column(tab, name);
    if (c < 0) throw DataError(path + ": missing column '" + name + "'");
    return static_cast<size_t>(c);
  };
  const size_t ct = need(cm.t), ci = need(cm.i), cv = need(cm.v), ctemp = need(cm.temp);
  const int camb = csv::column(tab, cm.t_amb);
  if (camb < 0 && !opt.t_amb_override)
    throw DataError(path + ": missing column '" + cm.t_amb + "' and no ambient override given");
  const int clabel = csv::column(tab, cm.label);
  const int czeta = csv::column(tab, cm.zeta);

  RawTimeseries raw;
  const double sign = opt.discharge_positive ? -1.0 : 1.0;
  for (size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    if (!raw.t.empty() && !(row[ct] > raw.t.back()))
      throw DataError(path + ":" + std::to_string(tab.line_numbers[r]) + ": time " + csv::format_double(row[ct]) +
                      " does not increase");
    raw.t.push_back(row[ct]);
    raw.i.push_back(sign * row[ci]);
    raw.v.push_back(row[cv]);
    raw.temp.push_back(row[ctemp]);
    raw.t_amb.push_back(opt.t_amb_override ? *opt.t_amb_override : row[static_cast<size_t>(camb)]);
    if (clabel >= 0) raw.label.push_back(row[static_cast<size_t>(clabel)]);
    if (czeta >= 0) raw.zeta.push_back(row[static_cast<size_t>(czeta)]);
  }
  if (report) {
    report->rows = raw.size();
    report->dropped_nan_rows = tab.dropped_nan_rows;
  }
  return raw;
}

void write_timeseries(const std::string& path, const RawTimeseries& raw) {
  const size_t n = raw.size();
  if (raw.i.size() != n || raw.v.size() != n || raw.temp.size() != n || raw.t_amb.size() != n)
    throw InvalidArgument("time series columns differ in length");
  const bool label = !raw.label.empty(), zeta = !raw.zeta.empty();
  if ((label && raw.label.size() != n) || (zeta && raw.zeta.size() != n))
    throw InvalidArgument("optional column length mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "t_s,i_A,v_V,temp_C,t_amb_C";
  if (label) out << ",label";
  if (zeta) out << ",zeta_Ah";
  out << '\n';
  using csv::format_double;
  for (size_t k = 0; k < n; ++k) {
    out << format_double(raw.t[k]) << ',' << format_double(raw.i[k]) << ',' << format_double(raw.v[k]) << ','
        << format_double(raw.temp[k]) << ',' << format_double(raw.t_amb[k]);
    if (label) out << ',' << format_double(raw.label[k]);
    if (zeta) out << ',' << format_double(raw.zeta[k]);
    out << '\n';
  }
  if (!out) throw DataError("write failed for " + path);
}

RawTimeseries segment_to_timeseries(const CycleSegment& seg) {
  RawTimeseries raw;
  const size_t n = seg.size();
  raw.t.resize(n);
  for (size_t k = 0; k < n; ++k) raw.t[k] = seg.t0 + static_cast<double>(k) * seg.dt;
  raw.i = seg.i;
  raw.v = seg.v;
  raw.temp = seg.temp;
  raw.t_amb = seg.t_amb;
  raw.zeta.assign(n, seg.zeta);
  return raw;
}

void write_segment(const std::string& path, const CycleSegment& seg) { write_timeseries(path, segment_to_timeseries(seg)); }

CycleSegment read_segment(const std::string& path, int cycle_index, const LoadOptions& options) {
  const RawTimeseries raw = load_timeseries(path, options);
  if (raw.size() < 2) throw DataError(path + ": segment needs at least two samples");
  CycleSegment seg;
  seg.t0 = raw.t.front();
  seg.dt = raw.t[1] - raw.t[0];
  for (size_t k = 1; k < raw.size(); ++k)
    if (std::abs(raw.t[k] - raw.t[k - 1] - seg.dt) > 1e-9)
      throw DataError(path + ": samples are not uniformly spaced at row " + std::to_string(k + 1));
  seg.zeta = raw.zeta.empty() ? 0.0 : raw.zeta.front();
  seg.cycle_index = cycle_index;
  seg.i = raw.i;
  seg.v = raw.v;
  seg.temp = raw.temp;
  seg.t_amb = raw.t_amb;
  return seg;
}

std::vector<Span> segment_cycles(const RawTimeseries& raw, const SegmentRules& rules) {
  const size_t n = raw.size();
  std::vector<Span> spans;
  auto keep = [&](size_t b, size_t e) {
    if (e > b && raw.t[e - 1] - raw.t[b] >= rules.min_span_s) spans.push_back({b, e});
  };
  if (rules.use_label) {
    if (raw.label.size() != n) throw DataError("label-based segmentation needs a label column");
    size_t b = 0;
    for (size_t k = 1; k <= n; ++k)
      if (k == n || raw.label[k] != raw.label[b]) {
        if (raw.label[b] > 0) keep(b, k);
        b = k;
      }
  } else {
    // Mark long rests, then take the maximal runs between them.
    std::vector<bool> gap(n, false);
    size_t k = 0;
    while (k < n) {
      if (std::abs(raw.i[k]) >= rules.rest_current) {
        ++k;
        continue;
      }
      size_t e = k;
      while (e < n && std::abs(raw.i[e]) < rules.rest_current) ++e;
      const double dur = (e < n ? raw.t[e] : raw.t[e - 1]) - raw.t[k];
      if (dur >= rules.rest_gap_s) std::fill(gap.begin() + static_cast<long>(k), gap.begin() + static_cast<long>(e), true);
      k = e;
    }
    size_t b = 0;
    while (b < n) {
      while (b < n && gap[b]) ++b;
      size_t e = b;
      while (e < n && !gap[e]) ++e;
      if (e > b) {
        size_t s = b;
        while (s > 0 && gap[s - 1] && raw.t[b] - raw.t[s - 1] <= rules.lead_in_s + 1e-9) --s;
        keep(s, e);
      }
      b = e;
    }
  }
  if (spans.empty()) throw DataError("no cycle spans found");
  return spans;
}

std::vector<Span> select_every(std::span<const Span> spans, int k) {
  if (k < 1) throw InvalidArgument("selection stride must be at least 1");
  std::vector<Span> out;
  const size_t ks = static_cast<size_t>(k);
  for (size_t j = ks; j <= spans.size(); j += ks) out.push_back(spans[j - 1]);
  if (out.empty()) throw DataError("fewer spans than one selection block");
  return out;
}

std::vector<double> accumulate_zeta(const RawTimeseries& raw) {
  std::vector<double> z(raw.size(), 0.0);
  for (size_t k = 1; k < raw.size(); ++k) z[k] = z[k - 1] + std::abs(raw.i[k - 1]) * (raw.t[k] - raw.t[k - 1]) / 3600.0;
  return z;
}

CycleSegment resample_1hz(const RawTimeseries& raw, const Span& span, int cycle_index) {
  if (span.end > raw.size() || span.begin >= span.end) throw InvalidArgument("span outside the series");
  const double ta = raw.t[span.begin], tb = raw.t[span.end - 1];
  if (tb - ta < 60.0) throw DataError("span shorter than 60 s");
  const double t0 = std::ceil(ta - 1e-9);
  const size_t m = static_cast<size_t>(std::floor(tb + 1e-9) - t0) + 1;
  std::vector<double> tq(m);
  for (size_t k = 0; k < m; ++k) tq[k] = t0 + static_cast<double>(k);

  auto sub = [&](const std::vector<double>& col) {
    return std::span<const double>(col.data() + span.begin, span.size());
  };
  const std::span<const double> ts = sub(raw.t);
  CycleSegment seg;
  seg.t0 = t0;
  seg.dt = 1.0;
  seg.cycle_index = cycle_index;
  seg.i = pchip_interpolate(ts, sub(raw.i), tq);
  seg.v = pchip_interpolate(ts, sub(raw.v), tq);
  seg.temp = pchip_interpolate(ts, sub(raw.temp), tq);
  seg.t_amb = pchip_interpolate(ts, sub(raw.t_amb), tq);
  if (!raw.zeta.empty()) {
    seg.zeta = pchip_interpolate(ts, sub(raw.zeta), std::span<const double>(&t0, 1)).front();
  } else {
    const std::vector<double> z = accumulate_zeta(raw);
    seg.zeta = pchip_interpolate(ts, std::span<const double>(z.data() + span.begin, span.size()),
                                 std::span<const double>(&t0, 1))
                   .front();
  }
  return seg;
}

std::vector<CycleSegment> prepare_segments(const RawTimeseries& raw, const SegmentRules& rules, int k) {
  const std::vector<Span> all = segment_cycles(raw, rules);
  const std::vector<Span> sel = select_every(all, k);
  std::vector<CycleSegment> out;
  int idx = 0;
  for (const Span& s : sel) out.push_back(resample_1hz(raw, s, (++idx) * k - 1));
  return out;
}

namespace {

struct Run {
  size_t begin, end;  // [begin, end)
  double current;
};

// Maximal runs of near-constant nonzero current.
std::vector<Run> constant_runs(const RawTimeseries& raw, double rest_current) {
  std::vector<Run> runs;
  const size_t n = raw.size();
  size_t k = 0;
  while (k < n) {
    const double c = raw.i[k];
    if (std::abs(c) < rest_current) {
      ++k;
      continue;
    }
    size_t e = k + 1;
    while (e < n && std::abs(raw.i[e] - c) <= 0.02 * std::abs(c)) ++e;
    runs.push_back({k, e, c});
    k = e;
  }
  return runs;
}

double charge_ah(const RawTimeseries& raw, size_t b, size_t e) {
  double q = 0.0;
  for (size_t k = b; k < e; ++k) {
    const double dt = k + 1 < raw.size() ? raw.t[k + 1] - raw.t[k] : (k > 0 ? raw.t[k] - raw.t[k - 1] : 1.0);
    q += raw.i[k] * dt;
  }
  return q / 3600.0;
}

double interp_linear(const RawTimeseries& raw, const std::vector<double>& y, double t) {
  auto it = std::lower_bound(raw.t.begin(), raw.t.end(), t);
  if (it == raw.t.end()) return std::numeric_limits<double>::quiet_NaN();
  const size_t k = static_cast<size_t>(it - raw.t.begin());
  if (std::abs(raw.t[k] - t) < 1e-9 || k == 0) return y[k];
  const double w = (t - raw.t[k - 1]) / (raw.t[k] - raw.t[k - 1]);
  return (1.0 - w) * y[k - 1] + w * y[k];
}

}  // namespace

std::vector<CheckupRecord> extract_checkups(const RawTimeseries& raw, const CheckupProtocol& pr, double zeta_offset) {
  const double rest = 0.05;
  const std::vector<Run> runs = constant_runs(raw, rest);
  double max_dis = 0.0;
  for (const Run& r : runs)
    if (r.current < 0.0) max_dis = std::max(max_dis, -charge_ah(raw, r.begin, r.end));
  if (max_dis <= 0.0) throw DataError("no constant-current discharge found");
  std::vector<size_t> full;
  for (size_t j = 0; j < runs.size(); ++j)
    if (runs[j].current < 0.0 && -charge_ah(raw, runs[j].begin, runs[j].end) >= 0.6 * max_dis) full.push_back(j);

  const std::vector<double> zeta_series = raw.zeta.empty() ? accumulate_zeta(raw) : raw.zeta;
  std::vector<CheckupRecord> out;
  for (size_t f = 0; f < full.size(); ++f) {
    const Run& cap = runs[full[f]];
    CheckupRecord rec;
    rec.capacity_ah = -charge_ah(raw, cap.begin, cap.end);
    rec.zeta = zeta_offset + zeta_series[cap.begin];
    const size_t stop = f + 1 < full.size() ? runs[full[f + 1]].begin : raw.size();

    // SOC by coulomb counting from empty at the end of the capacity discharge.
    std::map<double, std::vector<double>> by_point;
    double soc = 0.0;
    size_t cursor = cap.end;
    for (size_t j = full[f] + 1; j < runs.size() && runs[j].begin < stop; ++j) {
      const Run& r = runs[j];
      soc += charge_ah(raw, cursor, r.begin) / rec.capacity_ah;
      cursor = r.begin;
      const double dur = raw.t[r.end - 1] - raw.t[r.begin];
      const bool pulse = dur <= 3.0 * pr.pulse_s && std::abs(std::abs(r.current) - pr.pulse_current) <=
                                                          0.2 * pr.pulse_current;
      if (pulse && r.begin > 0 && std::abs(raw.i[r.begin - 1]) < rest) {
        const double t_on = raw.t[r.begin];
        const double v1 = interp_linear(raw, raw.v, t_on + 1.0);
        const double i1 = interp_linear(raw, raw.i, t_on + 1.0);
        const double dv = v1 - raw.v[r.begin - 1];
        const double di = i1 - raw.i[r.begin - 1];
        if (std::isfinite(dv) && std::abs(di) > rest) {
          double best = pr.soc_points.empty() ? soc : pr.soc_points.front();
          for (double p : pr.soc_points)
            if (std::abs(p - soc) < std::abs(best - soc)) best = p;
          if (std::abs(best - soc) <= 0.1) by_point[best].push_back(dv / di);
        }
      }
    }
    for (const auto& [p, vals] : by_point)
      rec.pulse_r0_ohm[p] = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
    for (double p : pr.soc_points)
      if (!rec.pulse_r0_ohm.count(p))
        rec.warnings.push_back("no pulse found at SOC " + csv::format_double(p));
    out.push_back(std::move(rec));
  }
  return out;
}

ThermalFit fit_thermal_resistance(std::span<const double> t, std::span<const double> temp, double t_amb, double c_c) {
  const size_t n = t.size();
  if (temp.size() != n) throw InvalidArgument("time and temperature lengths differ");
  if (n < 30) throw DataError("thermal relaxation span needs at least 30 samples");
  if (!(c_c > 0.0)) throw InvalidArgument("heat capacity must be positive");
  const double ts = t[0];
  Eigen::VectorXd x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
  for (size_t k = 0; k < n; ++k) {
    x(static_cast<Eigen::Index>(k)) = t[k] - ts;
    y(static_cast<Eigen::Index>(k)) = temp[k] - t_amb;
  }
  // Start from a log-linear fit on the points clearly away from ambient.
  const double ymax = y.cwiseAbs().maxCoeff();
  if (!(ymax > 0.0)) throw DataError("thermal span does not decay");
  const double sgn = y(0) >= 0.0 ? 1.0 : -1.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double v = sgn * y(k);
    if (v > 0.05 * ymax) {
      const double l = std::log(v);
      sx += x(k);
      sy += l;
      sxx += x(k) * x(k);
      sxy += x(k) * l;
      ++m;
    }
  }
  const double den = m * sxx - sx * sx;
  if (m < 3 || !(den > 0.0)) throw DataError("thermal span does not decay");
  const double slope = (m * sxy - sx * sy) / den;
  if (!(slope < 0.0)) throw DataError("thermal span does not decay");
  double log_tau = std::log(-1.0 / slope);
  double a = sgn * std::exp((sy - slope * sx) / m);

  // Gauss-Newton with Levenberg damping on (dT0, log tau).
  auto resid = [&](double amp, double lt) {
    return Eigen::VectorXd(y - amp * (-x.array() / std::exp(lt)).exp().matrix());
  };
  Eigen::VectorXd r = resid(a, log_tau);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  for (int it = 0; it < 200; ++it) {
    const double tau = std::exp(log_tau);
    const Eigen::ArrayXd e = (-x.array() / tau).exp();
    Eigen::MatrixXd j(x.size(), 2);
    j.col(0) = e.matrix();
    j.col(1) = (a * e * x.array() / tau).matrix();
    const Eigen::Matrix2d jtj = j.transpose() * j;
    const Eigen::Vector2d g = j.transpose() * r;
    bool moved = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::Matrix2d lhs = jtj;
      lhs.diagonal() *= 1.0 + mu;
      const Eigen::Vector2d d = lhs.ldlt().solve(g);
      const Eigen::VectorXd rn = resid(a + d(0), log_tau + d(1));
      const double cn = rn.squaredNorm();
      if (std::isfinite(cn) && cn <= cost) {
        const bool small = std::abs(d(0)) <= 1e-14 * std::abs(a) + 1e-300 && std::abs(d(1)) <= 1e-14;
        a += d(0);
        log_tau += d(1);
        r = rn;
        cost = cn;
        mu = std::max(mu * 0.3, 1e-12);
        moved = !small;
        break;
      }
      mu *= 10.0;
    }
    if (!moved) break;
  }
  const double tau = std::exp(log_tau);
  if (!std::isfinite(tau) || !(tau > 0.0)) throw DataError("thermal span does not decay");
  ThermalFit fit;
  fit.tau = tau;
  fit.r_c = tau / c_c;
  fit.delta_t0 = a;
  fit.rmse = std::sqrt(cost / static_cast<double>(n));
  return fit;
}

std::string checkups_to_json(const std::vector<CheckupRecord>& records) {
  json arr = json::array();
  for (const auto& r : records) {
    json pulses = json::array();
    for (const auto& [soc, ohm] : r.pulse_r0_ohm) pulses.push_back({{"soc", soc}, {"r0_mohm", ohm * 1e3}});
    arr.push_back({{"zeta_Ah", r.zeta}, {"capacity_Ah", r.capacity_ah}, {"pulse_r0", pulses}, {"warnings", r.warnings}});
  }
  return json{{"schema_version", 1}, {"checkups", arr}}.dump(2);
}

std::vector<CheckupRecord> checkups_from_json(const std::string& text) {
  std::vector<CheckupRecord> out;
  try {
    const json j = json::parse(text);
    for (const auto& e : j.at("checkups")) {
      CheckupRecord r;
      r.zeta = e.at("zeta_Ah").get<double>();
      r.capacity_ah = e.at("capacity_Ah").get<double>();
      for (const auto& p : e.at("pulse_r0")) r.pulse_r0_ohm[p.at("soc").get<double>()] = p.at("r0_mohm").get<double>() * 1e-3;
      if (e.contains("warnings")) r.warnings = e.at("warnings").get<std::vector<std::string>>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    throw DataError(std::string("checkup JSON: ") + ex.what());
  }
  return out;
}

std::string segments_summary_json(const std::vector<CycleSegment>& segments) {
  json arr = json::array();
  for (const auto& s : segments)
    arr.push_back({{"cycle_index", s.cycle_index}, {"zeta_Ah", s.zeta}, {"t0_s", s.t0}, {"samples", s.size()}});
  return json{{"schema_version", 1}, {"segments", arr}}.dump(2);
}

}  // namespace gpecm
