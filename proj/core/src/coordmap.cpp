#include "bslice/coordmap.hpp"

namespace bslice {

CoordinateMap::CoordinateMap(Chart source, Chart target, std::vector<ScalarExpr> components)
    : source_(std::move(source)), target_(std::move(target)), components_(std::move(components)) {
  if (static_cast<int>(components_.size()) != target_.dim()) {
    throw ValidationError("map into chart '" + target_.name() + "' needs " +
                          std::to_string(target_.dim()) + " components, got " +
                          std::to_string(components_.size()));
  }
  for (const auto& c : components_) {
    for (const auto& v : c.free_vars()) {
      if (!source_.find(v)) {
        throw ValidationError("map component uses '" + v + "' which is not a coordinate of '" +
                              source_.name() + "'");
      }
    }
  }
  partials_.resize(components_.size());
  for (size_t i = 0; i < components_.size(); ++i) {
    partials_[i].reserve(source_.dim());
    for (int j = 0; j < source_.dim(); ++j) {
      partials_[i].push_back(components_[i].derivative(source_.coord(j).name));
    }
  }
}

CoordinateMap CoordinateMap::identity(const Chart& chart) {
  std::vector<ScalarExpr> comps;
  comps.reserve(chart.dim());
  for (const auto& c : chart.coords()) comps.push_back(ScalarExpr::var(c.name));
  return CoordinateMap(chart, chart, std::move(comps));
}

Point CoordinateMap::apply(const Point& p) const { return target_.reduce(apply_raw(p)); }

Point CoordinateMap::apply_raw(const Point& p) const {
  Point out(components_.size());
  for (size_t i = 0; i < components_.size(); ++i) out[i] = components_[i].evaluate(source_, p);
  return out;
}

std::vector<std::vector<double>> CoordinateMap::jacobian(const Point& p) const {
  std::vector<std::vector<double>> J(components_.size(), std::vector<double>(source_.dim()));
  for (size_t i = 0; i < components_.size(); ++i) {
    for (int j = 0; j < source_.dim(); ++j) J[i][j] = partials_[i][j].evaluate(source_, p);
  }
  return J;
}

CoordinateMap CoordinateMap::then(const CoordinateMap& next) const {
  if (!target_.same_coords(next.source())) {
    throw ValidationError("cannot compose: charts '" + target_.name() + "' and '" +
                          next.source().name() + "' differ");
  }
  std::map<std::string, ScalarExpr> repl;
  for (int i = 0; i < target_.dim(); ++i) {
    repl.emplace(next.source().coord(i).name, components_[i]);
  }
  std::vector<ScalarExpr> comps;
  comps.reserve(next.components().size());
  for (const auto& c : next.components()) comps.push_back(c.substitute(repl));
  return CoordinateMap(source_, next.target(), std::move(comps));
}

CoordinateMap CoordinateMap::power(int n) const {
  if (!source_.same_coords(target_)) {
    throw ValidationError("power needs an endomap of one chart");
  }
  if (n < 0) throw ValidationError("power needs a non-negative exponent");
  CoordinateMap acc = identity(source_);
  for (int i = 0; i < n; ++i) acc = acc.then(*this);
  return acc;
}

ScalarExpr CoordinateMap::pull_scalar(const ScalarExpr& f) const {
  std::map<std::string, ScalarExpr> repl;
  for (int i = 0; i < target_.dim(); ++i) repl.emplace(target_.coord(i).name, components_[i]);
  return f.substitute(repl);
}

}  // namespace bslice
