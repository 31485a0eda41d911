#include "gpecm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "gpecm/error.hpp"

namespace gpecm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cell_name(size_t c) { return "cell" + std::to_string(c); }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir);
}

// Seconds of rest written ahead of each simulated cycle; with the profile's own
// leading rest this exceeds the default segmentation gap.
constexpr int kInterCycleRest = 570;

json hyper_to_json(const HyperParams& h) {
  json j = json::object();
  for (int i = 0; i < kHyperCount; ++i) j[hyper_name(i)] = h[i];
  return j;
}

HyperParams hyper_from_json(const json& j) {
  HyperParams h = HyperParams::defaults();
  for (auto it = j.begin(); it != j.end(); ++it) {
    const int idx = hyper_index(it.key());
    if (idx < 0) throw DataError("unknown hyperparameter '" + it.key() + "' in fit artifact");
    h[idx] = it.value().get<double>();
  }
  return h;
}

json health_json(const CovarianceHealth& h) {
  return {{"max_asymmetry", h.max_asymmetry},
          {"min_diag_ratio", h.min_diag_ratio},
          {"steps", h.steps},
          {"alpha_floor_hits", h.alpha_floor_hits},
          {"q_inv_floor_hits", h.q_inv_floor_hits},
          {"soc_clamps", h.soc_clamps}};
}

std::string label_num(double v) { return csv::format_double(v); }

std::vector<CellData> drop_tail(std::vector<CellData> cells, int n) {
  for (auto& c : cells) {
    if (static_cast<int>(c.size()) <= n)
      throw ConfigError("holdout of " + std::to_string(n) + " leaves no cycles to fit");
    c.resize(c.size() - static_cast<size_t>(n));
  }
  return cells;
}

ModelSetup fitted_setup(const RunConfig& config, std::span<const CellData> cells) {
  ModelSetup s = config.model;
  if (config.fit.auto_ranges) auto_ranges(cells, s);
  return s;
}

struct ParamAt {
  double mean, sd;
};

ParamAt param(const SmoothedPosterior& post, const FieldState& block, FieldId f, double z, double i) {
  const ParameterEstimate e = post.query(block, {f, z, i});
  return {e.smooth_mean, e.smooth_sd};
}

}  // namespace

SimulateSummary cmd_simulate(const RunConfig& config) {
  const SimulateConfig& sc = config.simulate;
  const GroundTruth truth = truth_from_config(sc);
  const fs::path out(sc.out_dir);
  const fs::path stage = out.string() + ".partial";
  std::error_code ec;
  fs::remove_all(stage, ec);
  if (!fs::create_directories(stage, ec) || ec)
    throw DataError("cannot create output directory " + stage.string());

  SimulateSummary summary;
  json files = json::array();
  try {
    for (int c = 0; c < sc.cells; ++c) {
      const std::uint64_t off = static_cast<std::uint64_t>(c) * sc.cell_seed_stride;
      RawTimeseries raw;
      std::ostringstream latent;
      latent << "t_s,cycle,z,v1_V,tc_C,v_clean_V,temp_clean_C,q_inv,alpha,beta,r0_ohm\n";
      json truth_rows = json::array();
      std::vector<CheckupRecord> checkups;
      double t = 0.0;
      for (int k = 0; k < sc.plan.n_cycles; ++k) {
        const double zeta = k * sc.plan.cycle_spacing_ah;
        CurrentProfile prof = synth_profile(sc.plan.profile_seed + off + static_cast<std::uint64_t>(k),
                                            sc.plan.duration_s, sc.plan.i_max, sc.plan.mean_current);
        prof.i.insert(prof.i.begin(), kInterCycleRest, 0.0);
        const SimulationOutput sim = simulate(truth, prof, sc.plan.z_init, sc.plan.t_amb,
                                              sc.plan.noise_seed + off + static_cast<std::uint64_t>(k), zeta, k);
        const CycleSegment& seg = sim.segment;
        for (size_t n = 0; n < seg.size(); ++n, t += 1.0) {
          raw.t.push_back(t);
          raw.i.push_back(seg.i[n]);
          raw.v.push_back(seg.v[n]);
          raw.temp.push_back(seg.temp[n]);
          raw.t_amb.push_back(seg.t_amb[n]);
          raw.zeta.push_back(zeta);
          const double z = sim.latent.z[n];
          using csv::format_double;
          latent << format_double(t) << ',' << k << ',' << format_double(z) << ',' << format_double(sim.latent.v1[n])
                 << ',' << format_double(sim.latent.tc[n]) << ',' << format_double(sim.latent.v_clean[n]) << ','
                 << format_double(sim.latent.temp_clean[n]) << ',' << format_double(truth.q_inv_at(zeta)) << ','
                 << format_double(truth.alpha_at(z, zeta)) << ',' << format_double(truth.beta_at(z, zeta)) << ','
                 << format_double(truth.r0_at(z, seg.i[n], zeta)) << '\n';
        }
        json r0 = json::array();
        for (double soc : sc.protocol.soc_points)
          r0.push_back({{"soc", soc},
                        {"r0_mohm", 1e3 * truth.r0_at(soc, sc.protocol.pulse_current, zeta)},
                        {"alpha", truth.alpha_at(soc, zeta)},
                        {"beta", truth.beta_at(soc, zeta)}});
        truth_rows.push_back({{"zeta_Ah", zeta}, {"q_Ah", 1.0 / truth.q_inv_at(zeta)}, {"pulse", r0}});
        if (sc.checkups) {
          RawTimeseries ck = synthetic_checkup(truth, zeta, sc.protocol, sc.plan.t_amb);
          ck.zeta.assign(ck.size(), zeta);
          for (auto& rec : extract_checkups(ck, sc.protocol)) checkups.push_back(std::move(rec));
        }
      }
      const std::string base = cell_name(static_cast<size_t>(c));
      write_timeseries((stage / (base + ".csv")).string(), raw);
      write_text_file((stage / (base + "_latent.csv")).string(), latent.str());
      write_text_file((stage / (base + "_truth.json")).string(),
                      json{{"schema_version", kSchemaVersion}, {"cycles", truth_rows}}.dump(2));
      if (sc.checkups) write_text_file((stage / (base + "_checkups.json")).string(), checkups_to_json(checkups));
      summary.samples += raw.size();
    }
    std::vector<fs::path> produced;
    for (const auto& e : fs::directory_iterator(stage)) produced.push_back(e.path());
    std::sort(produced.begin(), produced.end());
    for (const auto& p : produced) {
      const std::string bytes = read_text_file(p.string());
      files.push_back({{"name", p.filename().string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a(bytes))}});
    }
    const json manifest = {{"schema_version", kSchemaVersion},
                           {"command", "simulate"},
                           {"truth",
                            {{"alpha", "0.015 - 0.09 (0.05 - z)^3"},
                             {"beta", "0.002 (1 - (z - 0.5)^2)"},
                             {"r0", "0.05 asinh(|I|)/|I| + 0.04 (z - 1)^2"},
                             {"q_inv", truth.q_inv},
                             {"drift", config.source.at("simulate").at("drift")}}},
                           {"files", files},
                           {"config", config.source}};
    write_text_file((stage / "manifest.json").string(), manifest.dump(2));

    ensure_dir(out.string());
    for (const auto& e : fs::directory_iterator(stage)) {
      const fs::path dst = out / e.path().filename();
      fs::rename(e.path(), dst);
      summary.files.push_back(dst.string());
    }
    std::sort(summary.files.begin(), summary.files.end());
    fs::remove_all(stage, ec);
  } catch (...) {
    fs::remove_all(stage, ec);
    throw;
  }
  summary.manifest = (out / "manifest.json").string();
  return summary;
}

std::vector<std::string> cell_paths(const RunConfig& config) {
  if (!config.data.cells.empty()) return config.data.cells;
  std::vector<std::string> out;
  for (int c = 0; c < config.simulate.cells; ++c)
    out.push_back((fs::path(config.simulate.out_dir) / (cell_name(static_cast<size_t>(c)) + ".csv")).string());
  return out;
}

std::vector<std::string> checkup_paths(const RunConfig& config) {
  if (!config.data.checkups.empty()) return config.data.checkups;
  std::vector<std::string> out;
  for (const std::string& p : cell_paths(config)) {
    fs::path q(p);
    out.push_back((q.parent_path() / (q.stem().string() + "_checkups.json")).string());
  }
  return out;
}

std::vector<CellData> load_cells(const RunConfig& config) {
  std::vector<CellData> cells;
  for (const std::string& p : cell_paths(config)) {
    if (!fs::exists(p)) throw DataError("cell data not found: " + p);
    const RawTimeseries raw = load_timeseries(p, config.data.load);
    cells.push_back(prepare_segments(raw, config.data.rules, config.data.select_every));
  }
  if (cells.empty()) throw DataError("no cell data configured");
  return cells;
}

void auto_ranges(std::span<const CellData> cells, ModelSetup& setup) {
  double zlo = 1.0, zhi = 0.0, ilo = 0.0, ihi = 0.0;
  bool any = false;
  for (const CellData& cell : cells)
    for (const CycleSegment& seg : cell) {
      if (seg.size() == 0) continue;
      double z = setup.ocv.inverse(seg.v.front()).z;
      for (size_t k = 0; k < seg.size(); ++k) {
        zlo = std::min(zlo, z);
        zhi = std::max(zhi, z);
        ilo = std::min(ilo, seg.i[k]);
        ihi = std::max(ihi, seg.i[k]);
        z += setup.c_q_inv * seg.i[k] * seg.dt / 3600.0;
      }
      any = true;
    }
  if (!any) throw DataError("no samples to size the parameter grids");
  setup.z_lo = std::max(0.0, zlo - 0.02);
  setup.z_hi = std::min(1.0, zhi + 0.02);
  if (!(setup.z_hi > setup.z_lo + 0.05)) setup.z_hi = std::min(1.0, setup.z_lo + 0.05);
  setup.i_lo = ilo;
  setup.i_hi = ihi;
  if (!(setup.i_hi > setup.i_lo + 0.1)) {
    setup.i_lo -= 0.05;
    setup.i_hi += 0.05;
  }
}

std::string fit_artifact_json(const FitArtifact& a) {
  json j = {{"schema_version", kSchemaVersion},
            {"stage", a.stage},
            {"theta", hyper_to_json(a.theta)},
            {"phi", a.phi},
            {"unidentifiable", a.unidentifiable},
            {"ranges", {{"z_lo", a.setup.z_lo}, {"z_hi", a.setup.z_hi}, {"i_lo", a.setup.i_lo}, {"i_hi", a.setup.i_hi}}},
            {"extra", a.extra.is_null() ? json::object() : a.extra}};
  return j.dump(2);
}

FitArtifact read_fit_artifact(const std::string& path, const ModelSetup& base) {
  if (!fs::exists(path)) throw DataError("fit result not found: " + path);
  FitArtifact a;
  try {
    const json j = json::parse(read_text_file(path));
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw DataError(path + ": unsupported schema_version");
    a.stage = j.at("stage").get<int>();
    a.theta = hyper_from_json(j.at("theta"));
    a.phi = j.at("phi").get<double>();
    a.unidentifiable = j.at("unidentifiable").get<bool>();
    a.setup = base;
    const json& r = j.at("ranges");
    a.setup.z_lo = r.at("z_lo").get<double>();
    a.setup.z_hi = r.at("z_hi").get<double>();
    a.setup.i_lo = r.at("i_lo").get<double>();
    a.setup.i_hi = r.at("i_hi").get<double>();
    a.extra = j.at("extra");
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return a;
}

std::string cmd_fit(const RunConfig& config, int stage) {
  if (stage != 1 && stage != 2) throw ConfigError("fit stage must be 1 or 2");
  const FitConfig& fc = config.fit;
  const fs::path dir(fc.out_dir);
  const std::string s1_path = (dir / "stage1.json").string();
  // Check the stage-2 precondition before touching data.
  if (stage == 2 && !fs::exists(s1_path))
    throw DataError("stage 2 needs the stage-1 result " + s1_path + "; run fit with stage 1 first");

  const std::vector<CellData> cells = drop_tail(load_cells(config), fc.holdout);
  ensure_dir(dir.string());
  std::ostringstream log_text;
  FitLogger log = [&log_text](const FitLogRecord& r) {
    json j = {{"stage", std::stoi(r.stage)}, {"phase", r.phase}, {"start", r.start},
              {"iteration", r.iteration}, {"phi", std::isfinite(r.phi) ? json(r.phi) : json(nullptr)},
              {"theta", hyper_to_json(r.theta)}};
    log_text << j.dump() << '\n';
  };

  FitArtifact art;
  art.stage = stage;
  if (stage == 1) {
    art.setup = fitted_setup(config, cells);
    std::vector<CellData> first;
    for (const CellData& c : cells)
      first.emplace_back(c.begin(), c.begin() + std::min<long>(fc.stage1_cycles, static_cast<long>(c.size())));
    Stage1Options opt;
    opt.seed = fc.seed;
    opt.n_random = fc.n_random;
    opt.n_refine = fc.n_refine;
    opt.box = fc.box;
    opt.optimizer = fc.optimizer;
    const Stage1Result r = fit_stage1(first, art.setup, opt, fc.start, log);
    art.theta = r.theta;
    art.phi = r.phi;
    art.extra = {{"best_random_phi", r.best_random_phi},
                 {"failed_starts", r.failed_starts},
                 {"refined_phi", r.refined_phi},
                 {"health", health_json(r.health)}};
  } else {
    const FitArtifact s1 = read_fit_artifact(s1_path, config.model);
    art.setup = s1.setup;
    Stage2Options opt;
    opt.grid = fc.stage2_grid;
    opt.box = fc.box;
    opt.optimizer = fc.optimizer;
    const Stage2Result r = fit_stage2(cells, s1.theta, art.setup, opt, log);
    art.theta = r.theta;
    art.phi = r.phi;
    art.unidentifiable = r.unidentifiable;
    art.extra = {{"grid_phi", r.grid_phi}, {"health", health_json(r.health)}};
  }
  const std::string tag = "stage" + std::to_string(stage);
  write_text_file((dir / (tag + "_log.jsonl")).string(), log_text.str());
  const std::string out = (dir / (tag + ".json")).string();
  write_text_file(out, fit_artifact_json(art));
  return out;
}

CellPosterior estimate_cell(const CellData& cell, const HyperParams& theta, const ModelSetup& setup) {
  const BatteryFilterModel model = build_model(theta, setup);
  CellPosterior p;
  p.filter = run_lifetime(cell, model);
  p.smoothed = rts_smooth(model.gp, p.filter.checkpoints);
  return p;
}

FitArtifact best_fit(const RunConfig& config) {
  const fs::path dir(config.fit.out_dir);
  const fs::path s2 = dir / "stage2.json", s1 = dir / "stage1.json";
  if (fs::exists(s2)) return read_fit_artifact(s2.string(), config.model);
  if (fs::exists(s1)) return read_fit_artifact(s1.string(), config.model);
  throw DataError("no fit result in " + dir.string() + "; run fit first");
}

ReportRow report_row(const SmoothedPosterior& post, double zeta, const EstimateConfig& est, bool) {
  const FieldState block = post.state_at(zeta);
  ReportRow r;
  r.zeta = zeta;
  const ParamAt q = param(post, block, FieldId::kQInv, 0.5, 0.0);
  if (!(q.mean > 0.0)) throw NumericalError("non-positive inverse capacity estimate");
  r.q_ah_mean = 1.0 / q.mean;
  r.q_ah_sd = q.sd / (q.mean * q.mean);
  for (double z : est.z_points) {
    for (double i : est.i_points) {
      const ParamAt p = param(post, block, FieldId::kR0, z, i);
      r.r0_mohm_mean.push_back(1e3 * p.mean);
      r.r0_mohm_sd.push_back(1e3 * p.sd);
    }
    r.alpha_mean.push_back(param(post, block, FieldId::kAlpha, z, 0.0).mean);
    r.beta_mean.push_back(param(post, block, FieldId::kBeta, z, 0.0).mean);
  }
  return r;
}

std::string report_csv(const std::vector<ReportRow>& rows, const EstimateConfig& est) {
  using csv::format_double;
  std::ostringstream out;
  out << "zeta_Ah,q_Ah_mean,q_Ah_sd";
  for (double z : est.z_points)
    for (double i : est.i_points) {
      const std::string tag = "r0_mohm_at_z" + label_num(z) + "_I" + label_num(i);
      out << ',' << tag << "_mean," << tag << "_sd";
    }
  for (double z : est.z_points) out << ",alpha_at_z" << label_num(z) << "_mean";
  for (double z : est.z_points) out << ",beta_at_z" << label_num(z) << "_mean";
  out << '\n';
  for (const ReportRow& r : rows) {
    out << format_double(r.zeta) << ',' << format_double(r.q_ah_mean) << ',' << format_double(r.q_ah_sd);
    for (size_t k = 0; k < r.r0_mohm_mean.size(); ++k)
      out << ',' << format_double(r.r0_mohm_mean[k]) << ',' << format_double(r.r0_mohm_sd[k]);
    for (double a : r.alpha_mean) out << ',' << format_double(a);
    for (double b : r.beta_mean) out << ',' << format_double(b);
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> cmd_estimate(const RunConfig& config) {
  const FitArtifact fit = best_fit(config);
  const std::vector<CellData> cells = load_cells(config);
  const EstimateConfig& est = config.estimate;
  ensure_dir(est.out_dir);
  std::vector<std::string> written;
  for (size_t c = 0; c < cells.size(); ++c) {
    const CellPosterior p = estimate_cell(cells[c], fit.theta, fit.setup);
    const SmoothedPosterior& post = p.smoothed;
    std::vector<ReportRow> rows;
    json cps = json::array();
    for (const FilterCheckpoint& cp : post.checkpoints()) {
      rows.push_back(report_row(post, cp.zeta, est, false));
      const ReportRow& r = rows.back();
      cps.push_back({{"zeta_Ah", r.zeta},
                     {"q_Ah_mean", r.q_ah_mean},
                     {"q_Ah_sd", r.q_ah_sd},
                     {"r0_mohm_mean", r.r0_mohm_mean},
                     {"r0_mohm_sd", r.r0_mohm_sd},
                     {"alpha_mean", r.alpha_mean},
                     {"beta_mean", r.beta_mean}});
    }
    const std::string base = (fs::path(est.out_dir) / cell_name(c)).string();
    const json doc = {{"schema_version", kSchemaVersion},
                      {"fit_stage", fit.stage},
                      {"phi", p.filter.phi_total},
                      {"z_points", est.z_points},
                      {"i_points", est.i_points},
                      {"health", health_json(p.filter.health)},
                      {"checkpoints", cps}};
    write_text_file(base + "_posterior.json", doc.dump(2));
    write_text_file(base + "_report.csv", report_csv(rows, est));

    // Curves over SOC at each checkpoint and requested current.
    using csv::format_double;
    std::ostringstream curves;
    curves << "zeta_Ah,z,I_A,alpha_mean,alpha_sd,beta_mean,beta_sd,r0_mohm_mean,r0_mohm_sd\n";
    const int nz = 21;
    for (const FilterCheckpoint& cp : post.checkpoints()) {
      const FieldState block = post.state_at(cp.zeta);
      for (int k = 0; k < nz; ++k) {
        const double z = fit.setup.z_lo + (fit.setup.z_hi - fit.setup.z_lo) * k / (nz - 1);
        const ParamAt a = param(post, block, FieldId::kAlpha, z, 0.0);
        const ParamAt b = param(post, block, FieldId::kBeta, z, 0.0);
        for (double i : est.i_points) {
          const ParamAt r = param(post, block, FieldId::kR0, z, i);
          curves << format_double(cp.zeta) << ',' << format_double(z) << ',' << format_double(i) << ','
                 << format_double(a.mean) << ',' << format_double(a.sd) << ',' << format_double(b.mean) << ','
                 << format_double(b.sd) << ',' << format_double(1e3 * r.mean) << ',' << format_double(1e3 * r.sd)
                 << '\n';
        }
      }
    }
    write_text_file(base + "_curves.csv", curves.str());
    written.push_back(base + "_posterior.json");
    written.push_back(base + "_report.csv");
    written.push_back(base + "_curves.csv");
  }
  return written;
}

std::vector<std::string> cmd_forecast(const RunConfig& config) {
  const FitArtifact fit = best_fit(config);
  const std::vector<CellData> cells = load_cells(config);
  const EstimateConfig& est = config.estimate;
  ensure_dir(est.out_dir);
  std::vector<std::string> written;
  for (size_t c = 0; c < cells.size(); ++c) {
    const CellPosterior p = estimate_cell(cells[c], fit.theta, fit.setup);
    const double last = p.smoothed.last_zeta();
    std::vector<double> at = est.zeta_star;
    if (at.empty())
      for (int k = 0; k <= est.forecast_count; ++k) at.push_back(last + k * est.forecast_step);
    std::vector<ReportRow> rows;
    for (double z : at) {
      if (z < last) throw ConfigError("forecast locations must not precede the last checkpoint");
      rows.push_back(report_row(p.smoothed, z, est, true));
    }
    const std::string path = (fs::path(est.out_dir) / (cell_name(c) + "_forecast.csv")).string();
    write_text_file(path, report_csv(rows, est));
    written.push_back(path);
  }
  return written;
}

double pulse_resistance_model(const SmoothedPosterior& post, double zeta, double soc, double pulse_current) {
  const FieldState block = post.state_at(zeta);
  const double r_dis = param(post, block, FieldId::kR0, soc, -pulse_current).mean;
  const double r_chg = param(post, block, FieldId::kR0, soc, pulse_current).mean;
  const double a = param(post, block, FieldId::kAlpha, soc, 0.0).mean;
  const double b = param(post, block, FieldId::kBeta, soc, 0.0).mean;
  const double rc = a > 0.0 ? b * (-std::expm1(-a)) / a : b;
  return 0.5 * (r_dis + r_chg) + rc;
}

std::vector<ValidationRow> validate_cells(const RunConfig& config, std::string* table_text) {
  const FitArtifact fit = best_fit(config);
  const int hold = config.estimate.holdout;
  const std::vector<CellData> all = load_cells(config);
  const std::vector<CellData> train = drop_tail(all, hold);
  const std::vector<std::string> ck_paths = checkup_paths(config);
  if (ck_paths.size() != all.size()) throw ConfigError("one checkup file per cell is required");
  const double pulse = config.simulate.protocol.pulse_current;

  std::vector<ValidationRow> rows;
  for (size_t c = 0; c < all.size(); ++c) {
    if (!fs::exists(ck_paths[c])) throw DataError("checkup records not found: " + ck_paths[c]);
    const std::vector<CheckupRecord> recs = checkups_from_json(read_text_file(ck_paths[c]));
    const CellPosterior p = estimate_cell(train[c], fit.theta, fit.setup);
    const double last = p.smoothed.last_zeta();
    const double first = p.smoothed.first_zeta();
    ValidationRow row;
    row.cell = cell_name(c);
    double cap2[2] = {0, 0}, r02[2] = {0, 0};
    int ncap[2] = {0, 0}, nr0[2] = {0, 0};
    for (const CheckupRecord& rec : recs) {
      if (rec.zeta < first - 1e-9) continue;
      const int k = rec.zeta <= last + 1e-9 ? 0 : 1;
      const ReportRow rr = report_row(p.smoothed, rec.zeta, config.estimate, k == 1);
      cap2[k] += std::pow(rr.q_ah_mean - rec.capacity_ah, 2);
      ++ncap[k];
      for (const auto& [soc, ohm] : rec.pulse_r0_ohm) {
        const double model = pulse_resistance_model(p.smoothed, rec.zeta, soc, pulse);
        r02[k] += std::pow(1e3 * (model - ohm), 2);
        ++nr0[k];
      }
    }
    auto rms = [](double s, int n) { return n ? std::sqrt(s / n) : std::numeric_limits<double>::quiet_NaN(); };
    row.cap_interp_ah = rms(cap2[0], ncap[0]);
    row.cap_extrap_ah = rms(cap2[1], ncap[1]);
    row.r0_interp_mohm = rms(r02[0], nr0[0]);
    row.r0_extrap_mohm = rms(r02[1], nr0[1]);
    row.n_interp = ncap[0];
    row.n_extrap = ncap[1];
    rows.push_back(row);
  }
  if (table_text) {
    std::ostringstream t;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-8s | %-27s | %-27s\n", "", "Capacity RMSE [Ah]", "Resistance RMSE [mOhm]");
    t << buf;
    std::snprintf(buf, sizeof(buf), "%-8s | %-13s %-13s | %-13s %-13s\n", "Cell", "Interpolated", "Extrapolated",
                  "Interpolated", "Extrapolated");
    t << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%-8s | %-13.4f %-13.4f | %-13.3f %-13.3f\n", r.cell.c_str(), r.cap_interp_ah,
                    r.cap_extrap_ah, r.r0_interp_mohm, r.r0_extrap_mohm);
      t << buf;
    }
    *table_text = t.str();
  }
  return rows;
}

std::vector<std::string> cmd_validate(const RunConfig& config, std::string* table_text) {
  std::string table;
  const std::vector<ValidationRow> rows = validate_cells(config, &table);
  ensure_dir(config.estimate.out_dir);
  using csv::format_double;
  std::ostringstream out;
  out << "cell,cap_interp_Ah,cap_extrap_Ah,r0_interp_mohm,r0_extrap_mohm,n_interp,n_extrap\n";
  for (const auto& r : rows)
    out << r.cell << ',' << format_double(r.cap_interp_ah) << ',' << format_double(r.cap_extrap_ah) << ','
        << format_double(r.r0_interp_mohm) << ',' << format_double(r.r0_extrap_mohm) << ',' << r.n_interp << ','
        << r.n_extrap << '\n';
  const std::string path = (fs::path(config.estimate.out_dir) / "validate.csv").string();
  write_text_file(path, out.str());
  const std::string tpath = (fs::path(config.estimate.out_dir) / "validate_table.txt").string();
  write_text_file(tpath, table);
  if (table_text) *table_text = table;
  return {path, tpath};
}

}  // namespace gpecm
