#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bslice/rational.hpp"

namespace bslice {

using Point = std::vector<double>;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Coordinate kinds:
//   Angle    - periodic, values taken modulo the (rational) period
//   Real     - an open interval, possibly unbounded
//   Defining - transverse coordinate cutting out the critical hypersurface
//              {a = 0}; its differential enters forms only as da/a
struct Coordinate {
  enum class Kind { Angle, Real, Defining };

  std::string name;
  Kind kind = Kind::Real;
  Rational period{1};     // Angle only
  double lo = -10.0;      // Real / Defining interval
  double hi = 10.0;

  static Coordinate angle(std::string name, Rational period = Rational(1));
  static Coordinate real(std::string name, double lo = -10.0, double hi = 10.0);
  static Coordinate defining(std::string name, double halfwidth = 0.5);
};

class Chart {
 public:
  Chart() = default;
  Chart(std::string name, std::vector<Coordinate> coords);

  const std::string& name() const { return name_; }
  int dim() const { return static_cast<int>(coords_.size()); }
  const std::vector<Coordinate>& coords() const { return coords_; }
  const Coordinate& coord(int i) const { return coords_.at(i); }

  // Index of the unique Defining coordinate, if present.
  std::optional<int> defining_index() const { return defining_; }
  bool has_defining() const { return defining_.has_value(); }

  int index_of(const std::string& coord_name) const;         // throws
  std::optional<int> find(const std::string& coord_name) const;

  // Reduces Angle components into [0, period); other components unchanged.
  Point reduce(Point p) const;

  // Componentwise distance respecting angle wrap-around.
  double distance(const Point& p, const Point& q) const;

  bool same_coords(const Chart& other) const;

 private:
  std::string name_;
  std::vector<Coordinate> coords_;
  std::optional<int> defining_;
};

}  // namespace bslice
