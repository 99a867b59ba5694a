#pragma once

#include <string>
#include <vector>

#include "bslice/scenario.hpp"

namespace bslice {

// Bundled example scenarios, stored in the scenario file format. Each one
// assembles cleanly and carries anchors whose transports pull the lifted
// collar form onto the orbit model exactly.
//
//   torus_example  four-fold twisted two-torus bundle; exceptional and
//                  regular circle orbits
//   curled_torus   plane leaf glued by the antipodal map; central fiber
//   s2xs2          product of two spheres swapped by the gluing, diagonal
//                  rotation action; free, diagonal and antidiagonal orbits
//   tstar_g        cotangent cylinder with a translation torus factor
std::vector<std::string> builtin_names();
bool is_builtin(const std::string& name);
const std::string& builtin_text(const std::string& name);  // throws on unknown
Scenario builtin(const std::string& name);                 // parsed form

}  // namespace bslice
