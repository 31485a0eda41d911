#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gpecm/battery_model.hpp"
#include "gpecm/segment.hpp"

namespace gpecm {

/// Multipliers applied to the ground-truth parameters as functions of the
/// lifetime coordinate (Ah). Unset members mean no drift.
struct Drift {
  std::function<double(double)> q_inv;
  std::function<double(double)> alpha;
  std::function<double(double)> beta;
  std::function<double(double)> r0;

  static double apply(const std::function<double(double)>& f, double zeta) { return f ? f(zeta) : 1.0; }
};

struct GroundTruth {
  std::function<double(double)> alpha_fn;          ///< 1/s
  std::function<double(double)> beta_fn;           ///< 1/F
  std::function<double(double, double)> r0_fn;    ///< ohm, (z, I)
  double q_inv = 1.2;                              ///< 1/Ah
  ThermalParams thermal;
  OcvCurve ocv = OcvCurve::polynomial({3.64, 0.55, -0.72, 0.75});
  double sigma_v = 0.005;
  double sigma_t = 0.1;
  Drift drift;

  double q_inv_at(double zeta) const { return q_inv * Drift::apply(drift.q_inv, zeta); }
  double alpha_at(double z, double zeta) const { return alpha_fn(z) * Drift::apply(drift.alpha, zeta); }
  double beta_at(double z, double zeta) const { return beta_fn(z) * Drift::apply(drift.beta, zeta); }
  double r0_at(double z, double i, double zeta) const { return r0_fn(z, i) * Drift::apply(drift.r0, zeta); }
};

GroundTruth table1_truth();

/// 0.05 asinh(|I|)/|I| + 0.04 (z-1)^2 with the I = 0 limit filled in.
double table1_r0(double z, double current);

struct CurrentProfile {
  std::vector<double> i;  ///< A, 1 Hz
  std::uint64_t seed = 0;
};

/// Drive-like random profile: smoothed random pulses with occasional rests,
/// shifted to the requested mean current and clamped to |i| <= i_max. Starts
/// with a 30 s rest.
CurrentProfile synth_profile(std::uint64_t seed, int duration_s, double i_max, double mean_current,
                            int smooth_half_width = 3);

struct SimulationOutput {
  CycleSegment segment;
  LatentTrace latent;
};

/// Integrates the battery model at 1 Hz from rest with truth parameters
/// evaluated at the instantaneous state, and adds Gaussian measurement noise.
SimulationOutput simulate(const GroundTruth& truth, const CurrentProfile& profile, double z_init, double t_amb,
                          std::uint64_t noise_seed, double zeta = 0.0, int cycle_index = 0);

struct AgingPlan {
  int n_cycles = 27;
  double cycle_spacing_ah = 10.0;
  int duration_s = 1800;
  double i_max = 5.0;
  double mean_current = -1.0;
  double z_init = 0.9;
  double t_amb = 25.0;
  std::uint64_t profile_seed = 1;
  std::uint64_t noise_seed = 2;
};

/// Cycle k sits at zeta = k * spacing and uses seeds offset by k.
std::vector<SimulationOutput> simulate_aging(const GroundTruth& truth, const AgingPlan& plan);

/// Raw (possibly irregular) time series with the interchange columns.
struct RawTimeseries {
  std::vector<double> t;
  std::vector<double> i;
  std::vector<double> v;
  std::vector<double> temp;
  std::vector<double> t_amb;
  std::vector<double> label;  ///< optional, empty when absent
  std::vector<double> zeta;   ///< optional, empty when absent

  size_t size() const { return t.size(); }
};

struct CheckupProtocol {
  double c_rate = 0.3;
  double pulse_current = 2.0;  ///< A, magnitude
  int pulse_s = 10;
  int rest_s = 300;
  std::vector<double> soc_points{0.8, 0.5, 0.2};
};

/// Noise-free checkup at a fixed lifetime: rest at full charge, constant-
/// current discharge to empty, recharge, then discharge/charge pulse pairs at
/// each SOC set point.
RawTimeseries synthetic_checkup(const GroundTruth& truth, double zeta, const CheckupProtocol& protocol,
                                double t_amb = 25.0);

}  // namespace gpecm
