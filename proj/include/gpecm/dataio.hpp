#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpecm/segment.hpp"
#include "gpecm/simulator.hpp"

namespace gpecm {

/// Header names of the interchange CSV. `label` and `zeta` are optional.
struct ColumnMap {
  std::string t = "t_s";
  std::string i = "i_A";
  std::string v = "v_V";
  std::string temp = "temp_C";
  std::string t_amb = "t_amb_C";
  std::string label = "label";
  std::string zeta = "zeta_Ah";
};

struct LoadOptions {
  ColumnMap columns;
  /// Set when the file logs discharge current as positive; the loader flips
  /// it so that charging is positive.
  bool discharge_positive = false;
  /// Used when the file has no ambient column (or to replace it).
  std::optional<double> t_amb_override;
};

struct LoadReport {
  size_t rows = 0;
  size_t dropped_nan_rows = 0;
};

/// Parses a CSV into a time series. Throws DataError on missing columns,
/// parse failures and non-increasing time (naming the line).
RawTimeseries load_timeseries(const std::string& path, const LoadOptions& options = {},
                              LoadReport* report = nullptr);

/// Writes `t_s,i_A,v_V,temp_C,t_amb_C` plus `label` / `zeta_Ah` when present.
/// Values are written in shortest round-trip form.
void write_timeseries(const std::string& path, const RawTimeseries& raw);

RawTimeseries segment_to_timeseries(const CycleSegment& seg);
void write_segment(const std::string& path, const CycleSegment& seg);
/// Reads a uniformly sampled file back into a segment (zeta from the
/// `zeta_Ah` column when present).
CycleSegment read_segment(const std::string& path, int cycle_index = 0, const LoadOptions& options = {});

/// Half-open sample range [begin, end) of a RawTimeseries.
struct Span {
  size_t begin = 0;
  size_t end = 0;
  size_t size() const { return end - begin; }
};

struct SegmentRules {
  double rest_current = 0.05;   ///< A; |i| below this counts as rest
  double rest_gap_s = 300.0;    ///< a rest at least this long separates cycles
  double min_span_s = 60.0;     ///< shorter spans are discarded
  double lead_in_s = 30.0;      ///< rest kept before each span for initialisation
  bool use_label = false;       ///< split on changes of the label column instead; labels <= 0 are rests
};

/// Ordered cycle spans. Throws DataError when none are found.
std::vector<Span> segment_cycles(const RawTimeseries& raw, const SegmentRules& rules = {});

/// Last span of each complete block of k. Throws DataError when the result is
/// empty.
std::vector<Span> select_every(std::span<const Span> spans, int k = 30);

/// Cumulative charge throughput in Ah, one value per sample.
std::vector<double> accumulate_zeta(const RawTimeseries& raw);

/// PCHIP resampling of a span onto whole seconds. zeta is taken from the
/// series' zeta column when present, otherwise from accumulate_zeta.
CycleSegment resample_1hz(const RawTimeseries& raw, const Span& span, int cycle_index = 0);

/// segment_cycles, select_every and resample_1hz in sequence.
std::vector<CycleSegment> prepare_segments(const RawTimeseries& raw, const SegmentRules& rules = {}, int k = 30);

struct CheckupRecord {
  double zeta = 0.0;
  double capacity_ah = 0.0;
  std::map<double, double> pulse_r0_ohm;  ///< SOC set point -> resistance
  std::vector<std::string> warnings;
};

/// Locates the constant-current capacity discharges and the pulse pairs that
/// follow each one. Throws DataError when no capacity discharge is found.
std::vector<CheckupRecord> extract_checkups(const RawTimeseries& raw, const CheckupProtocol& protocol = {},
                                            double zeta_offset = 0.0);

struct ThermalFit {
  double r_c = 0.0;
  double delta_t0 = 0.0;
  double tau = 0.0;
  double rmse = 0.0;
};

/// Least-squares fit of temp = t_amb + dT0 exp(-t / (r_c c_c)) over a rest
/// span. Throws DataError for fewer than 30 samples or a non-decaying span.
ThermalFit fit_thermal_resistance(std::span<const double> t, std::span<const double> temp, double t_amb,
                                  double c_c);

std::string checkups_to_json(const std::vector<CheckupRecord>& records);
std::vector<CheckupRecord> checkups_from_json(const std::string& text);
std::string segments_summary_json(const std::vector<CycleSegment>& segments);

}  // namespace gpecm
