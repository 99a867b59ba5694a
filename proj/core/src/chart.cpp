#include "bslice/chart.hpp"

#include <cmath>

namespace bslice {

Coordinate Coordinate::angle(std::string name, Rational period) {
  Coordinate c;
  c.name = std::move(name);
  c.kind = Kind::Angle;
  if (!(Rational(0) < period)) throw ValidationError("angle period must be positive");
  c.period = period;
  c.lo = 0.0;
  c.hi = period.to_double();
  return c;
}

Coordinate Coordinate::real(std::string name, double lo, double hi) {
  Coordinate c;
  c.name = std::move(name);
  c.kind = Kind::Real;
  if (!(lo < hi)) throw ValidationError("real coordinate needs lo < hi");
  c.lo = lo;
  c.hi = hi;
  return c;
}

Coordinate Coordinate::defining(std::string name, double halfwidth) {
  Coordinate c;
  c.name = std::move(name);
  c.kind = Kind::Defining;
  if (!(halfwidth > 0)) throw ValidationError("defining coordinate needs positive halfwidth");
  c.lo = -halfwidth;
  c.hi = halfwidth;
  return c;
}

Chart::Chart(std::string name, std::vector<Coordinate> coords)
    : name_(std::move(name)), coords_(std::move(coords)) {
  for (size_t i = 0; i < coords_.size(); ++i) {
    for (size_t j = i + 1; j < coords_.size(); ++j) {
      if (coords_[i].name == coords_[j].name) {
        throw ValidationError("chart '" + name_ + "' repeats coordinate '" + coords_[i].name + "'");
      }
    }
    if (coords_[i].kind == Coordinate::Kind::Defining) {
      if (defining_) throw ValidationError("chart '" + name_ + "' has two defining coordinates");
      defining_ = static_cast<int>(i);
    }
  }
}

int Chart::index_of(const std::string& coord_name) const {
  auto idx = find(coord_name);
  if (!idx) throw ValidationError("chart '" + name_ + "' has no coordinate '" + coord_name + "'");
  return *idx;
}

std::optional<int> Chart::find(const std::string& coord_name) const {
  for (size_t i = 0; i < coords_.size(); ++i) {
    if (coords_[i].name == coord_name) return static_cast<int>(i);
  }
  return std::nullopt;
}

Point Chart::reduce(Point p) const {
  for (size_t i = 0; i < coords_.size() && i < p.size(); ++i) {
    if (coords_[i].kind == Coordinate::Kind::Angle) {
      double per = coords_[i].period.to_double();
      p[i] -= per * std::floor(p[i] / per);
      if (p[i] >= per) p[i] = 0.0;  // guard against rounding at the seam
    }
  }
  return p;
}

double Chart::distance(const Point& p, const Point& q) const {
  double best = 0.0;
  for (size_t i = 0; i < coords_.size(); ++i) {
    double d = std::abs(p[i] - q[i]);
    if (coords_[i].kind == Coordinate::Kind::Angle) {
      double per = coords_[i].period.to_double();
      d = std::fmod(d, per);
      d = std::min(d, per - d);
    }
    best = std::max(best, d);
  }
  return best;
}

bool Chart::same_coords(const Chart& other) const {
  if (coords_.size() != other.coords_.size()) return false;
  for (size_t i = 0; i < coords_.size(); ++i) {
    if (coords_[i].name != other.coords_[i].name) return false;
    if (coords_[i].kind != other.coords_[i].kind) return false;
  }
  return true;
}

}  // namespace bslice
