#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "bslice/chart.hpp"

namespace bslice {

// Deterministic random stream. Distinct tags under the same seed give
// independent, reproducible streams; doubles are derived from raw bits so
// sequences are identical across platforms.
class RngStream {
 public:
  explicit RngStream(uint64_t seed, std::string_view tag = "");

  uint64_t next_u64() { return eng_(); }
  double uniform01();                       // [0, 1)
  double uniform(double lo, double hi);
  long long uniform_int(long long lo, long long hi_inclusive);

 private:
  std::mt19937_64 eng_;
};

// Draws a point inside the chart's sampling window: Angle in [0, period),
// Real clipped to a tame window, Defining away from 0 unless `on_critical`
// pins it to exactly 0.
Point sample_point(const Chart& chart, RngStream& rng, bool on_critical = false);

// Box sample of given radius around a center point; the defining coordinate
// (if any) is set to exactly 0 when `on_critical`.
Point sample_box(const Chart& chart, const Point& center, double radius, RngStream& rng,
                 bool on_critical = false);

}  // namespace bslice
