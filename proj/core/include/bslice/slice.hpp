#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bslice/actions.hpp"
#include "bslice/torus.hpp"

namespace bslice {

// Local model of a leaf transversal: Y carries the symplectic form the orbit
// machinery reduces to, split bookkeeping-wise into the coadjoint directions
// (m_star_dim) and the linear slice (V_dim, always the trailing coordinates
// of Y_chart).
struct MGSCatalogEntry {
  GroupDescriptor H;
  GroupDescriptor H_z;
  Chart Y_chart;
  BForm omega_MGS;
  int m_star_dim = 0;
  int V_dim = 0;
};

// Supported stabilizer pairs. Each constructor validates its form
// (closed, nondegenerate; stabilizer generators act symplectically on V).
MGSCatalogEntry mgs_trivial(int dim);          // Y = V with Darboux pairs
MGSCatalogEntry mgs_cotangent_torus(int n);    // Y = T*T^n, canonical form
MGSCatalogEntry mgs_torus_full(int n);         // open torus orbit: Y = T^n, invariant form
MGSCatalogEntry mgs_so3_so2();                 // bundle over S^2 with a 2-dim slice
MGSCatalogEntry mgs_so3_free();                // free rotation orbit, coisotropic

// Select the entry matching a decomposition; throws when the pair is outside
// the catalog or its dimensions cannot model the leaf.
MGSCatalogEntry catalog_entry_for(const GroupDescriptor& H, const GroupDescriptor& H_z,
                                  int leaf_dim);

// c dt ^ da/a on the two-dimensional singular chart (t: Angle(1), a: Defining).
BForm standard_b_form(const Rational& c);

// Assembled local normal form: the total space is presented as a mapping
// torus over the rescaled base circle with leaf Y and monodromy the deck
// generator, so the cover/quotient machinery certifies the period
// arithmetic. omega_tilde0 lives on cover.cover() (period c' = k c);
// omega_quotient on cover.base() (period c k / l).
struct SliceModel {
  Rational c;
  int k = 1;
  int l = 1;
  int variant = 1;  // 1: deck rotates the slice; 2: deck translates the group factor
  Rational c_prime;
  Rational model_period;
  MGSCatalogEntry Y;
  FiniteCover cover;
  BForm omega_tilde0;
  BForm omega_quotient;
  std::vector<CoordinateMap> deck_action;
  std::optional<AdjustedCircle> adjusted_circle;
  std::string structure_note;
};

SliceModel assemble_model(const Rational& c, int k, const IsotropyData& iso,
                          const MGSCatalogEntry& entry);

// Deferred comparison task: Moser's method should connect omega_scenario to
// omega_model on a box around `center`. When the scenario declares no chart
// transport onto the model, omega_scenario is absent and `note` says so.
struct MoserCertification {
  Chart chart;
  BForm omega_model;
  std::optional<BForm> omega_scenario;
  Point center;
  double radius = 0.1;
  std::string note;
};

struct OrbitModelResult {
  SliceModel model;
  MoserCertification plan;
};

// Full pipeline: validate (b-symplectic, invariance, transversality) ->
// cover -> decomposition -> isotropy -> catalog -> assemble. Failures
// propagate as ValidationError prefixed with the stage name. `transport`,
// when given, maps the model's cover chart onto the scenario's cover chart
// so the lifted scenario form can be pulled onto the model chart.
OrbitModelResult model_for_orbit(
    const GroupAction& action, const CollarModel& collar, const Point& z,
    const std::optional<std::vector<std::vector<Rational>>>& declared_sigma = {},
    const std::optional<CoordinateMap>& transport = {}, uint64_t seed = 2024);

}  // namespace bslice
