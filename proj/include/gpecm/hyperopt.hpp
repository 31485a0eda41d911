#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gpecm/joint_ekf.hpp"
#include "gpecm/optimizer.hpp"

namespace gpecm {

/// Free hyperparameters in their fixed order. Magnitudes are standard
/// deviations; gammas are inverse squared length scales (SE) or decay rates.
enum HyperIndex : int {
  kSigmaQInv = 0,
  kSigmaAlphaBeta,
  kSigmaR0,
  kGammaAlphaBetaZ,
  kGammaR0Z,
  kGammaR0I,
  kSigma0Zeta,
  kSigma1Zeta,
  kSigmaZetaR,
  kGammaZetaR,
  kSigmaNV,
  kSigmaNT,
  kHyperCount
};

inline constexpr std::array<int, 8> kStage1Indices{kSigmaQInv,      kSigmaAlphaBeta, kSigmaR0, kGammaAlphaBetaZ,
                                                   kGammaR0Z,       kGammaR0I,       kSigmaNV, kSigmaNT};
inline constexpr std::array<int, 4> kStage2Indices{kSigma0Zeta, kSigma1Zeta, kSigmaZetaR, kGammaZetaR};

const char* hyper_name(int index);
/// Index for a name, or -1.
int hyper_index(const std::string& name);

struct HyperParams {
  std::array<double, kHyperCount> value{};

  double& operator[](int i) { return value[static_cast<size_t>(i)]; }
  double operator[](int i) const { return value[static_cast<size_t>(i)]; }

  Eigen::VectorXd to_log() const;
  static HyperParams from_log(const Eigen::VectorXd& log_values);

  /// Stage-1 starting values: the lifetime terms are placeholders that make
  /// the lifetime kernel irrelevant over a single cycle.
  static HyperParams defaults();
  void validate() const;
};

/// Bounds per free parameter in natural units (stored in log space for the
/// optimiser).
struct Box {
  std::array<double, kHyperCount> lower{};
  std::array<double, kHyperCount> upper{};

  static Box defaults();
  void validate() const;
  bool contains(const HyperParams& h) const;
  Eigen::VectorXd log_lower(std::span<const int> idx) const;
  Eigen::VectorXd log_upper(std::span<const int> idx) const;
};

/// Everything besides hyperparameters needed to build the filter model.
struct ModelSetup {
  double z_lo = 0.0;
  double z_hi = 1.0;
  double i_lo = -5.0;
  double i_hi = 5.0;
  int n_z = 6;
  int n_z_r0 = 4;
  int n_i_r0 = 15;
  double c_q_inv = 1.09;
  double c_alpha = 0.01;
  double c_beta = 0.0007;
  double c_r0 = 0.04;
  OcvCurve ocv = OcvCurve::polynomial({3.64, 0.55, -0.72, 0.75});
  ThermalParams thermal;
  Eigen::Vector3d q_batt{1e-12, 1e-6, 1e-4};
  Eigen::Vector3d p_batt0{1e-4, 1e-6, 1e-2};

  void validate() const;
};

/// Builds the four parameter fields (q_inv, alpha, beta, r0) with zeta0
/// re-solved for each from its magnitude.
BatteryFilterModel build_model(const HyperParams& h, const ModelSetup& setup);

/// One cell's ordered segments.
using CellData = std::vector<CycleSegment>;

struct NlmlDiagnostics {
  bool finite = true;
  std::string failure;
  CovarianceHealth health;
};

/// Summed recursive NLML over the cells; +inf when a filter pass fails.
double nlml(const HyperParams& h, std::span<const CellData> cells, const ModelSetup& setup,
            NlmlDiagnostics* diag = nullptr);

/// Gradient of the NLML with respect to the log hyperparameters listed in
/// idx (all when empty), by central differences.
Eigen::VectorXd nlml_gradient(const HyperParams& h, std::span<const CellData> cells, const ModelSetup& setup,
                              std::span<const int> idx, double step = 1e-4);

struct FitLogRecord {
  std::string stage;
  std::string phase;  ///< "random", "refine", "grid", "final"
  int start = 0;
  int iteration = 0;
  double phi = 0.0;
  HyperParams theta;
};

using FitLogger = std::function<void(const FitLogRecord&)>;

struct Stage1Options {
  std::uint64_t seed = 42;
  int n_random = 1000;
  int n_refine = 25;
  Box box = Box::defaults();
  OptimizerOptions optimizer;
};

struct Stage1Result {
  HyperParams theta;
  double phi = 0.0;
  double best_random_phi = 0.0;
  int failed_starts = 0;
  std::vector<double> refined_phi;
  CovarianceHealth health;
};

/// Multi-start maximum likelihood over the operating-point and noise
/// hyperparameters on the first cycle of each cell. The lifetime terms are
/// held at `fixed`.
Stage1Result fit_stage1(std::span<const CellData> first_cycles, const ModelSetup& setup, const Stage1Options& options,
                        const HyperParams& fixed = HyperParams::defaults(), const FitLogger& log = {});

struct Stage2Options {
  /// Log-spaced lattice per lifetime hyperparameter (natural units).
  std::array<std::vector<double>, 4> grid{{{1e-4, 1e-3, 1e-2}, {1e-4, 1e-3, 1e-2}, {1e-2, 1e-1}, {1e-1, 1.0}}};
  Box box = Box::defaults();
  OptimizerOptions optimizer;
};

struct Stage2Result {
  HyperParams theta;
  double phi = 0.0;
  double grid_phi = 0.0;
  bool unidentifiable = false;
  CovarianceHealth health;
};

/// Lifetime hyperparameters with the operating-point ones fixed: grid search
/// for a start, then box-constrained quasi-Newton refinement.
Stage2Result fit_stage2(std::span<const CellData> cells, const HyperParams& theta_x, const ModelSetup& setup,
                        const Stage2Options& options, const FitLogger& log = {});

}  // namespace gpecm
