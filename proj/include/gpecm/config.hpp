#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpecm/dataio.hpp"
#include "gpecm/hyperopt.hpp"
#include "gpecm/simulator.hpp"

namespace gpecm {

inline constexpr int kSchemaVersion = 1;

/// Multiplier 1 + linear * zeta + quadratic * zeta^2 on a truth parameter.
struct DriftPoly {
  double linear = 0.0;
  double quadratic = 0.0;
};

struct SimulateConfig {
  std::string out_dir = "data";
  int cells = 2;
  AgingPlan plan;
  std::uint64_t cell_seed_stride = 1000;  ///< seed offset between cells
  double sigma_v = 0.005;
  double sigma_t = 0.1;
  DriftPoly drift_q_inv{3e-4, 0.0};
  DriftPoly drift_alpha;
  DriftPoly drift_beta;
  DriftPoly drift_r0{1e-3, 0.0};
  bool checkups = true;
  CheckupProtocol protocol;
};

struct DataConfig {
  std::vector<std::string> cells;  ///< one CSV per cell
  LoadOptions load;
  SegmentRules rules;
  int select_every = 1;
  std::vector<std::string> checkups;  ///< checkup JSON per cell, for validation
};

struct FitConfig {
  std::string out_dir = "fit";
  std::uint64_t seed = 42;
  int n_random = 1000;
  int n_refine = 25;
  int stage1_cycles = 1;  ///< leading cycles per cell used by stage 1
  int holdout = 0;        ///< trailing cycles per cell excluded from fitting
  OptimizerOptions optimizer;
  Box box = Box::defaults();
  HyperParams start = HyperParams::defaults();
  std::array<std::vector<double>, 4> stage2_grid = Stage2Options{}.grid;
  bool auto_ranges = true;  ///< grid ranges from the data
};

struct EstimateConfig {
  std::string out_dir = "results";
  std::vector<double> z_points{0.2, 0.5, 0.8};
  std::vector<double> i_points{-2.0, 0.0, 2.0};
  std::vector<double> zeta_star;   ///< forecast locations (Ah)
  double forecast_step = 10.0;     ///< used when zeta_star is empty
  int forecast_count = 8;
  int holdout = 8;                 ///< checkpoints left out by validate
  double r0_pulse_current = 2.0;   ///< |I| at which resistance is reported
};

struct RunConfig {
  ModelSetup model;
  std::string ocv_csv;  ///< optional OCV table replacing the polynomial
  SimulateConfig simulate;
  DataConfig data;
  FitConfig fit;
  EstimateConfig estimate;
  nlohmann::json source;  ///< resolved JSON, recorded in manifests
};

nlohmann::json default_config_json();

/// Applies "a.b.c=value"; value is parsed as JSON, falling back to a string.
/// Unknown keys are a ConfigError.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Parses and validates; throws ConfigError.
RunConfig parse_config(const nlohmann::json& config);

/// Reads a file (or defaults when path is empty) then applies overrides.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

GroundTruth truth_from_config(const SimulateConfig& sim);

std::string read_text_file(const std::string& path);
/// Writes via a temporary file and rename so readers never see a partial file.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gpecm
