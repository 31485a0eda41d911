#pragma once

#include <cstddef>
#include <vector>

namespace gpecm {

/// One down-selected cycle sampled uniformly at 1 Hz. Current is positive for
/// charging.
struct CycleSegment {
  double t0 = 0.0;     ///< time of the first sample, s
  double dt = 1.0;     ///< sample spacing, s
  double zeta = 0.0;   ///< lifetime coordinate at the first sample, Ah throughput
  int cycle_index = 0;
  std::vector<double> i;      ///< A
  std::vector<double> v;      ///< V
  std::vector<double> temp;   ///< cell temperature
  std::vector<double> t_amb;  ///< ambient temperature

  size_t size() const { return i.size(); }
};

/// Noise-free states recorded by the simulator alongside a segment.
struct LatentTrace {
  std::vector<double> z;
  std::vector<double> v1;
  std::vector<double> tc;
  std::vector<double> v_clean;
  std::vector<double> temp_clean;
};

}  // namespace gpecm
