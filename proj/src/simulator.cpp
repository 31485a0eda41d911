#include "gpecm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gpecm/error.hpp"

namespace gpecm {

double table1_r0(double z, double current) {
  const double a = std::abs(current);
  const double shape = a < 1e-8 ? 1.0 - a * a / 6.0 : std::asinh(a) / a;
  return 0.05 * shape + 0.04 * (z - 1.0) * (z - 1.0);
}

GroundTruth table1_truth() {
  GroundTruth t;
  t.alpha_fn = [](double z) { return 0.015 - 0.09 * std::pow(0.05 - z, 3); };
  t.beta_fn = [](double z) { return 0.002 * (1.0 - (z - 0.5) * (z - 0.5)); };
  t.r0_fn = table1_r0;
  return t;
}

CurrentProfile synth_profile(std::uint64_t seed, int duration_s, double i_max, double mean_current,
                            int smooth_half_width) {
  if (duration_s < 60) throw InvalidArgument("profile duration must be at least 60 s");
  if (!(i_max > 0.0)) throw InvalidArgument("i_max must be positive");
  if (std::abs(mean_current) >= i_max) throw InvalidArgument("mean current must lie inside (-i_max, i_max)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int lead = 30;
  const size_t n = static_cast<size_t>(duration_s);
  std::vector<double> raw(n, 0.0);
  size_t t = static_cast<size_t>(lead);
  while (t < n) {
    const size_t len = static_cast<size_t>(5.0 + unit(rng) * 55.0);
    const double u = unit(rng);
    // Rests keep the low-current region excited; the rest are uniform levels.
    const double level = u < 0.15 ? 0.0 : i_max * (2.0 * unit(rng) - 1.0);
    for (size_t k = t; k < std::min(n, t + len); ++k) raw[k] = level;
    t += len;
  }
  // Short moving average for band limiting.
  const int w = std::max(0, smooth_half_width);
  std::vector<double> smooth(n, 0.0);
  for (size_t k = lead; k < n; ++k) {
    double acc = 0.0;
    int cnt = 0;
    for (int d = -w; d <= w; ++d) {
      const long j = static_cast<long>(k) + d;
      if (j < lead || j >= static_cast<long>(n)) continue;
      acc += raw[static_cast<size_t>(j)];
      ++cnt;
    }
    smooth[k] = acc / cnt;
  }
  // Shift the active part to the requested overall mean, re-clamping.
  std::vector<double> out = smooth;
  double shift = 0.0;
  for (int it = 0; it < 50; ++it) {
    double sum = 0.0;
    for (size_t k = lead; k < n; ++k) {
      out[k] = std::clamp(smooth[k] + shift, -i_max, i_max);
      sum += out[k];
    }
    const double err = mean_current * static_cast<double>(n) - sum;
    if (std::abs(err) < 1e-9 * static_cast<double>(n)) break;
    shift += err / static_cast<double>(n - lead);
  }
  return {std::move(out), seed};
}

namespace {

EcmParamSnapshot truth_params(const GroundTruth& g, double z, double i, double zeta) {
  EcmParamSnapshot p;
  p.q_inv.mean = g.q_inv_at(zeta);
  p.alpha.mean = g.alpha_at(z, zeta);
  p.beta.mean = g.beta_at(z, zeta);
  p.r0.mean = g.r0_at(z, i, zeta);
  return p;
}

}  // namespace

SimulationOutput simulate(const GroundTruth& truth, const CurrentProfile& profile, double z_init, double t_amb,
                          std::uint64_t noise_seed, double zeta, int cycle_index) {
  const size_t n = profile.i.size();
  if (n == 0) throw InvalidArgument("empty current profile");
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SimulationOutput out;
  CycleSegment& seg = out.segment;
  seg.zeta = zeta;
  seg.cycle_index = cycle_index;
  seg.i = profile.i;
  seg.v.resize(n);
  seg.temp.resize(n);
  seg.t_amb.assign(n, t_amb);
  LatentTrace& lat = out.latent;

  BatteryState s{z_init, 0.0, t_amb};
  for (size_t k = 0; k < n; ++k) {
    if (s.z < 0.02 || s.z > 0.98)
      throw InvalidArgument("simulated SOC leaves [0.02, 0.98] at sample " + std::to_string(k) +
                            "; shorten or rebalance the profile");
    const double i = profile.i[k];
    const EcmParamSnapshot p = truth_params(truth, s.z, i, zeta);
    const BatteryOutput y = output(s, i, p, truth.ocv);
    lat.z.push_back(s.z);
    lat.v1.push_back(s.v1);
    lat.tc.push_back(s.tc);
    lat.v_clean.push_back(y.v_terminal);
    lat.temp_clean.push_back(y.temperature);
    const double nv = gauss(rng);
    const double nt = gauss(rng);
    seg.v[k] = y.v_terminal + truth.sigma_v * nv;
    seg.temp[k] = y.temperature + truth.sigma_t * nt;
    s = step_dynamics(s, i, t_amb, 1.0, p, truth.thermal).next;
  }
  return out;
}

std::vector<SimulationOutput> simulate_aging(const GroundTruth& truth, const AgingPlan& plan) {
  if (plan.n_cycles < 1) throw InvalidArgument("aging plan needs at least one cycle");
  if (!(plan.cycle_spacing_ah > 0.0)) throw InvalidArgument("cycle spacing must be positive");
  std::vector<SimulationOutput> out;
  for (int k = 0; k < plan.n_cycles; ++k) {
    const double zeta = k * plan.cycle_spacing_ah;
    const CurrentProfile prof =
        synth_profile(plan.profile_seed + static_cast<std::uint64_t>(k), plan.duration_s, plan.i_max, plan.mean_current);
    out.push_back(simulate(truth, prof, plan.z_init, plan.t_amb, plan.noise_seed + static_cast<std::uint64_t>(k),
                           zeta, k));
  }
  return out;
}

RawTimeseries synthetic_checkup(const GroundTruth& truth, double zeta, const CheckupProtocol& pr, double t_amb) {
  const double q_ah = 1.0 / truth.q_inv_at(zeta);
  const double i_cc = pr.c_rate * q_ah;
  RawTimeseries raw;
  BatteryState s{1.0, 0.0, t_amb};
  double t = 0.0;
  auto emit = [&](double i, int seconds) {
    for (int k = 0; k < seconds; ++k) {
      const EcmParamSnapshot p = truth_params(truth, std::clamp(s.z, 0.0, 1.0), i, zeta);
      const BatteryOutput y = output(s, i, p, truth.ocv);
      raw.t.push_back(t);
      raw.i.push_back(i);
      raw.v.push_back(y.v_terminal);
      raw.temp.push_back(y.temperature);
      raw.t_amb.push_back(t_amb);
      s = step_dynamics(s, i, t_amb, 1.0, p, truth.thermal).next;
      t += 1.0;
    }
  };
  const int full_s = static_cast<int>(std::lround(3600.0 / pr.c_rate));
  emit(0.0, pr.rest_s);
  emit(-i_cc, full_s);
  emit(0.0, pr.rest_s);
  emit(i_cc, full_s);
  emit(0.0, pr.rest_s);
  double z_now = 1.0;
  for (double target : pr.soc_points) {
    const int secs = static_cast<int>(std::lround((z_now - target) * q_ah * 3600.0 / i_cc));
    if (secs > 0) emit(-i_cc, secs);
    z_now = target;
    emit(0.0, pr.rest_s);
    emit(-pr.pulse_current, pr.pulse_s);
    emit(0.0, pr.rest_s);
    emit(pr.pulse_current, pr.pulse_s);
    emit(0.0, pr.rest_s);
  }
  return raw;
}

}  // namespace gpecm
