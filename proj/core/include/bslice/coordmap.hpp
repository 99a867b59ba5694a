#pragma once

#include <vector>

#include "bslice/chart.hpp"
#include "bslice/expr.hpp"

namespace bslice {

// Smooth map between charts, one symbolic component per target coordinate,
// written in the source chart's coordinate names.
class CoordinateMap {
 public:
  CoordinateMap() = default;
  CoordinateMap(Chart source, Chart target, std::vector<ScalarExpr> components);

  static CoordinateMap identity(const Chart& chart);

  const Chart& source() const { return source_; }
  const Chart& target() const { return target_; }
  const std::vector<ScalarExpr>& components() const { return components_; }
  const ScalarExpr& component(int i) const { return components_.at(i); }
  // Partial derivative of component i in source coordinate j.
  const ScalarExpr& partial(int i, int j) const { return partials_.at(i).at(j); }

  // Evaluates the map; target Angle coordinates are reduced mod period.
  Point apply(const Point& p) const;
  // Evaluates without angle reduction (for winding-number bookkeeping).
  Point apply_raw(const Point& p) const;

  std::vector<std::vector<double>> jacobian(const Point& p) const;

  // Composition: first this map, then `next` (requires next.source ~ target).
  CoordinateMap then(const CoordinateMap& next) const;
  // n-fold self-composition, n >= 0 (requires source ~ target).
  CoordinateMap power(int n) const;

  // Pulls a scalar on the target back along the map: f o phi.
  ScalarExpr pull_scalar(const ScalarExpr& f) const;

 private:
  Chart source_, target_;
  std::vector<ScalarExpr> components_;
  std::vector<std::vector<ScalarExpr>> partials_;
};

}  // namespace bslice
