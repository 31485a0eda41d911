#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpecm/config.hpp"
#include "gpecm/dataio.hpp"
#include "gpecm/hyperopt.hpp"
#include "gpecm/joint_ekf.hpp"

namespace gpecm {

struct SimulateSummary {
  std::vector<std::string> files;
  std::string manifest;
  size_t samples = 0;
};

/// Writes per-cell dataset CSVs, latent-state CSVs, checkup JSON and a
/// manifest. Output is staged in a temporary directory and moved into place
/// only on success.
SimulateSummary cmd_simulate(const RunConfig& config);

/// Cell files listed in the config, or the simulator's outputs when empty.
std::vector<std::string> cell_paths(const RunConfig& config);
std::vector<std::string> checkup_paths(const RunConfig& config);
std::vector<CellData> load_cells(const RunConfig& config);

/// SOC and current grid ranges covering the data: SOC by OCV inversion of the
/// first sample of each segment plus coulomb counting.
void auto_ranges(std::span<const CellData> cells, ModelSetup& setup);

struct FitArtifact {
  int stage = 1;
  HyperParams theta;
  double phi = 0.0;
  ModelSetup setup;
  bool unidentifiable = false;
  nlohmann::json extra;
};

std::string fit_artifact_json(const FitArtifact& a);
FitArtifact read_fit_artifact(const std::string& path, const ModelSetup& base);

/// Stage 1 uses the leading cycles of each cell; stage 2 needs the stage-1
/// artifact. Returns the written artifact path.
std::string cmd_fit(const RunConfig& config, int stage);

/// Lifetime posterior for one cell under fitted hyperparameters.
struct CellPosterior {
  LifetimeResult filter;
  SmoothedPosterior smoothed;
};

CellPosterior estimate_cell(const CellData& cell, const HyperParams& theta, const ModelSetup& setup);

/// Fitted artifact to use downstream (stage 2 when present, else stage 1).
FitArtifact best_fit(const RunConfig& config);

/// Capacity and resistance summary at one lifetime coordinate.
struct ReportRow {
  double zeta = 0.0;
  double q_ah_mean = 0.0;
  double q_ah_sd = 0.0;
  std::vector<double> r0_mohm_mean;  ///< per (z, I) pair, z-major
  std::vector<double> r0_mohm_sd;
  std::vector<double> alpha_mean;    ///< per z point
  std::vector<double> beta_mean;
};

ReportRow report_row(const SmoothedPosterior& post, double zeta, const EstimateConfig& est, bool extrapolate);
std::string report_csv(const std::vector<ReportRow>& rows, const EstimateConfig& est);

/// Posterior JSON, report CSV and curve CSV per cell. Returns written paths.
std::vector<std::string> cmd_estimate(const RunConfig& config);
std::vector<std::string> cmd_forecast(const RunConfig& config);

struct ValidationRow {
  std::string cell;
  double cap_interp_ah = 0.0;
  double cap_extrap_ah = 0.0;
  double r0_interp_mohm = 0.0;
  double r0_extrap_mohm = 0.0;
  int n_interp = 0;
  int n_extrap = 0;
};

/// Model prediction of the pulse-test resistance at 1 s: R0 plus the RC
/// branch charged for one second from rest.
double pulse_resistance_model(const SmoothedPosterior& post, double zeta, double soc, double pulse_current);

/// Filters each cell with its last `holdout` segments removed and compares
/// interpolated and extrapolated estimates with the checkup records.
std::vector<ValidationRow> validate_cells(const RunConfig& config, std::string* table_text = nullptr);
std::vector<std::string> cmd_validate(const RunConfig& config, std::string* table_text = nullptr);

}  // namespace gpecm
