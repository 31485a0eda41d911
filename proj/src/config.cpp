#include "gpecm/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpecm/error.hpp"

namespace gpecm {

using nlohmann::json;

namespace {

json hyper_json(const std::array<double, kHyperCount>& v) {
  json j = json::object();
  for (int i = 0; i < kHyperCount; ++i) j[hyper_name(i)] = v[static_cast<size_t>(i)];
  return j;
}

void read_hyper(const json& j, std::array<double, kHyperCount>& v) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const int idx = hyper_index(it.key());
    if (idx < 0) throw ConfigError("unknown hyperparameter '" + it.key() + "'");
    v[static_cast<size_t>(idx)] = it.value().get<double>();
  }
}

json drift_json(const DriftPoly& d) { return {{"linear", d.linear}, {"quadratic", d.quadratic}}; }
DriftPoly read_drift(const json& j) { return {j.at("linear").get<double>(), j.at("quadratic").get<double>()}; }

std::function<double(double)> drift_fn(const DriftPoly& d) {
  if (d.linear == 0.0 && d.quadratic == 0.0) return {};
  return [d](double zeta) { return 1.0 + d.linear * zeta + d.quadratic * zeta * zeta; };
}

// Recursively rejects keys absent from the defaults so typos surface.
void check_keys(const json& given, const json& reference, const std::string& path) {
  if (!given.is_object() || !reference.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string p = path.empty() ? it.key() : path + "." + it.key();
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + p + "'");
    check_keys(it.value(), reference.at(it.key()), p);
  }
}

}  // namespace

json default_config_json() {
  const ModelSetup m;
  const SimulateConfig s;
  const DataConfig d;
  const FitConfig f;
  const EstimateConfig e;
  const Box box = Box::defaults();
  json j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = {{"z_lo", m.z_lo},
                {"z_hi", m.z_hi},
                {"i_lo", m.i_lo},
                {"i_hi", m.i_hi},
                {"n_z", m.n_z},
                {"n_z_r0", m.n_z_r0},
                {"n_i_r0", m.n_i_r0},
                {"c_q_inv", m.c_q_inv},
                {"c_alpha", m.c_alpha},
                {"c_beta", m.c_beta},
                {"c_r0", m.c_r0},
                {"ocv_poly", m.ocv.coefficients()},
                {"ocv_csv", ""},
                {"thermal", {{"r_c", m.thermal.r_c}, {"c_c", m.thermal.c_c}}},
                {"q_batt", {m.q_batt(0), m.q_batt(1), m.q_batt(2)}},
                {"p_batt0", {m.p_batt0(0), m.p_batt0(1), m.p_batt0(2)}}};
  j["simulate"] = {{"out_dir", s.out_dir},
                   {"cells", s.cells},
                   {"n_cycles", s.plan.n_cycles},
                   {"cycle_spacing_ah", s.plan.cycle_spacing_ah},
                   {"duration_s", s.plan.duration_s},
                   {"i_max", s.plan.i_max},
                   {"mean_current", s.plan.mean_current},
                   {"z_init", s.plan.z_init},
                   {"t_amb", s.plan.t_amb},
                   {"profile_seed", s.plan.profile_seed},
                   {"noise_seed", s.plan.noise_seed},
                   {"cell_seed_stride", s.cell_seed_stride},
                   {"sigma_v", s.sigma_v},
                   {"sigma_t", s.sigma_t},
                   {"drift",
                    {{"q_inv", drift_json(s.drift_q_inv)},
                     {"alpha", drift_json(s.drift_alpha)},
                     {"beta", drift_json(s.drift_beta)},
                     {"r0", drift_json(s.drift_r0)}}},
                   {"checkups", s.checkups},
                   {"checkup_protocol",
                    {{"c_rate", s.protocol.c_rate},
                     {"pulse_current", s.protocol.pulse_current},
                     {"pulse_s", s.protocol.pulse_s},
                     {"rest_s", s.protocol.rest_s},
                     {"soc_points", s.protocol.soc_points}}}};
  j["data"] = {{"cells", d.cells},
               {"discharge_positive", d.load.discharge_positive},
               {"t_amb_override", nullptr},
               {"rest_current", d.rules.rest_current},
               {"rest_gap_s", d.rules.rest_gap_s},
               {"min_span_s", d.rules.min_span_s},
               {"lead_in_s", d.rules.lead_in_s},
               {"use_label", d.rules.use_label},
               {"select_every", d.select_every},
               {"checkups", d.checkups}};
  j["fit"] = {{"out_dir", f.out_dir},
              {"seed", f.seed},
              {"n_random", f.n_random},
              {"n_refine", f.n_refine},
              {"stage1_cycles", f.stage1_cycles},
              {"holdout", f.holdout},
              {"max_iterations", f.optimizer.max_iterations},
              {"f_rel_tol", f.optimizer.f_rel_tol},
              {"g_inf_tol", f.optimizer.g_inf_tol},
              {"fd_step", f.optimizer.fd_step},
              {"auto_ranges", f.auto_ranges},
              {"start", hyper_json(f.start.value)},
              {"box", {{"lower", hyper_json(box.lower)}, {"upper", hyper_json(box.upper)}}},
              {"stage2_grid",
               {{hyper_name(kSigma0Zeta), f.stage2_grid[0]},
                {hyper_name(kSigma1Zeta), f.stage2_grid[1]},
                {hyper_name(kSigmaZetaR), f.stage2_grid[2]},
                {hyper_name(kGammaZetaR), f.stage2_grid[3]}}}};
  j["estimate"] = {{"out_dir", e.out_dir},
                   {"z_points", e.z_points},
                   {"i_points", e.i_points},
                   {"zeta_star", e.zeta_star},
                   {"forecast_step", e.forecast_step},
                   {"forecast_count", e.forecast_count},
                   {"holdout", e.holdout},
                   {"r0_pulse_current", e.r0_pulse_current}};
  return j;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &config;
  std::string path;
  std::istringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (size_t k = 0; k < parts.size(); ++k) {
    path += (k ? "." : "") + parts[k];
    if (!node->is_object() || !node->contains(parts[k])) throw ConfigError("unknown config key '" + path + "'");
    node = &(*node)[parts[k]];
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = value;
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  try {
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
      throw ConfigError("config schema_version must be " + std::to_string(kSchemaVersion));
    check_keys(j, default_config_json(), "");
    const json full = [&] {
      json d = default_config_json();
      d.merge_patch(j);
      return d;
    }();

    const json& m = full.at("model");
    ModelSetup& s = c.model;
    s.z_lo = m.at("z_lo").get<double>();
    s.z_hi = m.at("z_hi").get<double>();
    s.i_lo = m.at("i_lo").get<double>();
    s.i_hi = m.at("i_hi").get<double>();
    s.n_z = m.at("n_z").get<int>();
    s.n_z_r0 = m.at("n_z_r0").get<int>();
    s.n_i_r0 = m.at("n_i_r0").get<int>();
    s.c_q_inv = m.at("c_q_inv").get<double>();
    s.c_alpha = m.at("c_alpha").get<double>();
    s.c_beta = m.at("c_beta").get<double>();
    s.c_r0 = m.at("c_r0").get<double>();
    s.ocv = OcvCurve::polynomial(m.at("ocv_poly").get<std::vector<double>>());
    c.ocv_csv = m.at("ocv_csv").get<std::string>();
    if (!c.ocv_csv.empty()) s.ocv = OcvCurve::load_csv(c.ocv_csv);
    s.thermal.r_c = m.at("thermal").at("r_c").get<double>();
    s.thermal.c_c = m.at("thermal").at("c_c").get<double>();
    const auto qb = m.at("q_batt").get<std::vector<double>>();
    const auto pb = m.at("p_batt0").get<std::vector<double>>();
    if (qb.size() != 3 || pb.size() != 3) throw ConfigError("q_batt and p_batt0 need three entries");
    s.q_batt = Eigen::Vector3d(qb[0], qb[1], qb[2]);
    s.p_batt0 = Eigen::Vector3d(pb[0], pb[1], pb[2]);
    s.validate();

    const json& sj = full.at("simulate");
    SimulateConfig& sim = c.simulate;
    sim.out_dir = sj.at("out_dir").get<std::string>();
    sim.cells = sj.at("cells").get<int>();
    sim.plan.n_cycles = sj.at("n_cycles").get<int>();
    sim.plan.cycle_spacing_ah = sj.at("cycle_spacing_ah").get<double>();
    sim.plan.duration_s = sj.at("duration_s").get<int>();
    sim.plan.i_max = sj.at("i_max").get<double>();
    sim.plan.mean_current = sj.at("mean_current").get<double>();
    sim.plan.z_init = sj.at("z_init").get<double>();
    sim.plan.t_amb = sj.at("t_amb").get<double>();
    sim.plan.profile_seed = sj.at("profile_seed").get<std::uint64_t>();
    sim.plan.noise_seed = sj.at("noise_seed").get<std::uint64_t>();
    sim.cell_seed_stride = sj.at("cell_seed_stride").get<std::uint64_t>();
    sim.sigma_v = sj.at("sigma_v").get<double>();
    sim.sigma_t = sj.at("sigma_t").get<double>();
    sim.drift_q_inv = read_drift(sj.at("drift").at("q_inv"));
    sim.drift_alpha = read_drift(sj.at("drift").at("alpha"));
    sim.drift_beta = read_drift(sj.at("drift").at("beta"));
    sim.drift_r0 = read_drift(sj.at("drift").at("r0"));
    sim.checkups = sj.at("checkups").get<bool>();
    const json& pj = sj.at("checkup_protocol");
    sim.protocol.c_rate = pj.at("c_rate").get<double>();
    sim.protocol.pulse_current = pj.at("pulse_current").get<double>();
    sim.protocol.pulse_s = pj.at("pulse_s").get<int>();
    sim.protocol.rest_s = pj.at("rest_s").get<int>();
    sim.protocol.soc_points = pj.at("soc_points").get<std::vector<double>>();
    if (sim.cells < 1 || sim.plan.n_cycles < 1) throw ConfigError("simulate.cells and simulate.n_cycles must be >= 1");
    if (sim.plan.duration_s < 60) throw ConfigError("simulate.duration_s must be at least 60");
    if (!(sim.sigma_v >= 0.0) || !(sim.sigma_t >= 0.0)) throw ConfigError("noise levels must be non-negative");

    const json& dj = full.at("data");
    DataConfig& d = c.data;
    d.cells = dj.at("cells").get<std::vector<std::string>>();
    d.load.discharge_positive = dj.at("discharge_positive").get<bool>();
    if (dj.contains("t_amb_override") && !dj.at("t_amb_override").is_null())
      d.load.t_amb_override = dj.at("t_amb_override").get<double>();
    d.rules.rest_current = dj.at("rest_current").get<double>();
    d.rules.rest_gap_s = dj.at("rest_gap_s").get<double>();
    d.rules.min_span_s = dj.at("min_span_s").get<double>();
    d.rules.lead_in_s = dj.at("lead_in_s").get<double>();
    d.rules.use_label = dj.at("use_label").get<bool>();
    d.select_every = dj.at("select_every").get<int>();
    d.checkups = dj.at("checkups").get<std::vector<std::string>>();
    if (d.select_every < 1) throw ConfigError("data.select_every must be >= 1");

    const json& fj = full.at("fit");
    FitConfig& f = c.fit;
    f.out_dir = fj.at("out_dir").get<std::string>();
    f.seed = fj.at("seed").get<std::uint64_t>();
    f.n_random = fj.at("n_random").get<int>();
    f.n_refine = fj.at("n_refine").get<int>();
    f.stage1_cycles = fj.at("stage1_cycles").get<int>();
    f.holdout = fj.at("holdout").get<int>();
    f.optimizer.max_iterations = fj.at("max_iterations").get<int>();
    f.optimizer.f_rel_tol = fj.at("f_rel_tol").get<double>();
    f.optimizer.g_inf_tol = fj.at("g_inf_tol").get<double>();
    f.optimizer.fd_step = fj.at("fd_step").get<double>();
    f.auto_ranges = fj.at("auto_ranges").get<bool>();
    read_hyper(fj.at("start"), f.start.value);
    read_hyper(fj.at("box").at("lower"), f.box.lower);
    read_hyper(fj.at("box").at("upper"), f.box.upper);
    const int s2[4] = {kSigma0Zeta, kSigma1Zeta, kSigmaZetaR, kGammaZetaR};
    for (int k = 0; k < 4; ++k)
      f.stage2_grid[static_cast<size_t>(k)] = fj.at("stage2_grid").at(hyper_name(s2[k])).get<std::vector<double>>();
    if (f.holdout < 0) throw ConfigError("fit.holdout must be >= 0");
    if (f.n_random < 1 || f.n_refine < 1 || f.stage1_cycles < 1) throw ConfigError("fit counts must be >= 1");
    f.start.validate();
    f.box.validate();

    const json& ej = full.at("estimate");
    EstimateConfig& e = c.estimate;
    e.out_dir = ej.at("out_dir").get<std::string>();
    e.z_points = ej.at("z_points").get<std::vector<double>>();
    e.i_points = ej.at("i_points").get<std::vector<double>>();
    e.zeta_star = ej.at("zeta_star").get<std::vector<double>>();
    e.forecast_step = ej.at("forecast_step").get<double>();
    e.forecast_count = ej.at("forecast_count").get<int>();
    e.holdout = ej.at("holdout").get<int>();
    e.r0_pulse_current = ej.at("r0_pulse_current").get<double>();
    if (e.holdout < 0) throw ConfigError("estimate.holdout must be >= 0");
    c.source = full;
    c.source["data"]["t_amb_override"] = c.data.load.t_amb_override ? json(*c.data.load.t_amb_override) : json(nullptr);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  } catch (const DataError& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json j = default_config_json();
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
    json given = json::parse(read_text_file(path), nullptr, false);
    if (given.is_discarded() || !given.is_object()) throw ConfigError("config file is not a JSON object: " + path);
    // A manifest carries the resolved config it was produced from.
    if (given.contains("command") && given.contains("config")) given = json(given.at("config"));
    check_keys(given, j, "");
    j.merge_patch(given);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_config(j);
}

GroundTruth truth_from_config(const SimulateConfig& sim) {
  GroundTruth t = table1_truth();
  t.sigma_v = sim.sigma_v;
  t.sigma_t = sim.sigma_t;
  t.drift.q_inv = drift_fn(sim.drift_q_inv);
  t.drift.alpha = drift_fn(sim.drift_alpha);
  t.drift.beta = drift_fn(sim.drift_beta);
  t.drift.r0 = drift_fn(sim.drift_r0);
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("write failed for " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError("cannot write " + path);
  }
}

}  // namespace gpecm
