#include "bslice/builtins.hpp"

#include <array>

namespace bslice {

namespace {

// Two-torus leaf glued by a quarter rotation. The circle action winds four
// times around the base before the gluing returns, so the trivializing cover
// has four sheets and the exceptional fiber at the origin sees the full
// rotation as its deck group.
const std::string kTorusExample = R"(name torus_example

[chart] torus2
phi angle 1
psi angle 1

[chart] collar
t angle 1
phi angle 1
psi angle 1
a defining 0.5

[form] beta on torus2
dphi^dpsi : 1

[form] omega on collar
dt^dlog(a) : 1
dphi^dpsi : 1

[torus]
leaf torus2
beta beta
monodromy_matrix 0 -1 ; 1 0
period 1
order 4
simply_connected false
compact true

[collar]
form omega
epsilon 0.25

[action] quarter_twist
group circle s
base_degree 4
components t + 4*s, phi, psi, a

[anchor] exceptional
point 0, 0, 0, 0
sigma 0 -1 ; 1 0
transport t, x, y, a

[anchor] regular
point 0, 3/8, 5/8, 0
transport t, 3/8 + x, 5/8 + y, a

[task]
run check
anchor exceptional
steps 1000
seed 2024
tol_residual 1e-6
)";

// Plane leaf glued by the antipodal map. The total space is an open model of
// a twisted fibration whose central fiber inherits a two-element deck group.
const std::string kCurledTorus = R"(name curled_torus

[chart] plane
x real
y real

[chart] collar
t angle 1
x real
y real
a defining 0.5

[form] beta on plane
dx^dy : 1

[form] omega on collar
dt^dlog(a) : 1
dx^dy : 1

[torus]
leaf plane
beta beta
monodromy_matrix -1 0 ; 0 -1
period 1
order 2
simply_connected true
compact false

[collar]
form omega
epsilon 0.25

[action] half_twist
group circle s
base_degree 2
components t + 2*s, x, y, a

[anchor] central
point 0, 0, 0, 0
sigma -1 0 ; 0 -1
transport t, x, y, a

[anchor] regular
point 0, 3/10, 9/20, 0
transport t, 3/10 + x, 9/20 + y, a

[task]
run check
anchor central
steps 1000
seed 2024
tol_residual 1e-6
)";

// Two spheres in cylindrical charts (azimuth, height), swapped by the
// gluing. The rotation group acts diagonally while the circle advances the
// base with degree two. Orbits split into three types: generic pairs with
// trivial stabilizer, the diagonal with a residual circle stabilizer, and
// the antidiagonal where the sheet swap survives as a deck reflection.
const std::string kS2xS2 = R"(name s2xs2

[chart] spheres
qu angle 1
hu real -1 1
qv angle 1
hv real -1 1

[chart] collar
t angle 1
qu angle 1
hu real -1 1
qv angle 1
hv real -1 1
a defining 0.5

[form] beta on spheres
dqu^dhu : 2*pi
dqv^dhv : 2*pi

[form] omega on collar
dt^dlog(a) : 1
dqu^dhu : 2*pi
dqv^dhv : 2*pi

[torus]
leaf spheres
beta beta
monodromy qv, hv, qu, hu
period 1
order 2
simply_connected true
compact true

[collar]
form omega
epsilon 0.25

[action] rotate_both
group circle_x_so3 s A
base_degree 2
so3_diag qu hu qv hv
guard 0.05

[anchor] free
point 0, 0, 1/2, 1/4, 0, 0
transport t, x1/(2*pi), 1/2 + y1, 1/4 + x2/(2*pi), y2, a

[anchor] diagonal
point 0, 1/8, 1/2, 1/8, 1/2, 0
sigma -1 0 ; 0 -1
transport t, 1/8 + b1 + u/(4*pi), 1/2 + b2 + v, 1/8 + b1 - u/(4*pi), 1/2 + b2 - v, a

[anchor] antidiagonal
point 0, 1/8, 1/2, 5/8, -1/2, 0
sigma -1 0 ; 0 -1
transport t, 1/8 + 2*b1, 1/2 + b2, 5/8 + u/(2*pi), -1/2 + v, a

[task]
run check
anchor free
steps 1000
seed 2024
tol_residual 1e-6
)";

// Cotangent cylinder with an untwisted gluing and an extra translation
// factor. Every orbit looks the same; the model is the canonical cotangent
// form over a one-torus.
const std::string kTstarG = R"(name tstar_g

[chart] cylinder
q angle 1
y real

[chart] collar
t angle 1
q angle 1
y real
a defining 0.5

[form] beta on cylinder
dq^dy : 1

[form] omega on collar
dt^dlog(a) : 1
dq^dy : 1

[torus]
leaf cylinder
beta beta
period 1
order 1
simply_connected false
compact false

[collar]
form omega
epsilon 0.25

[action] translate
group circle_x_torus 1 s d
base_degree 1
components t + s, q + d1, y, a

[anchor] orbit
point 0, 1/4, 1/4, 0
transport t, 1/4 + q1, 1/4 + y1, a

[task]
run check
anchor orbit
steps 1000
seed 2024
tol_residual 1e-6
)";

const std::array<std::pair<const char*, const std::string*>, 4> kBuiltins = {{
    {"torus_example", &kTorusExample},
    {"curled_torus", &kCurledTorus},
    {"s2xs2", &kS2xS2},
    {"tstar_g", &kTstarG},
}};

}  // namespace

std::vector<std::string> builtin_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : kBuiltins) out.push_back(name);
  return out;
}

bool is_builtin(const std::string& name) {
  for (const auto& [n, text] : kBuiltins)
    if (name == n) return true;
  return false;
}

const std::string& builtin_text(const std::string& name) {
  for (const auto& [n, text] : kBuiltins)
    if (name == n) return *text;
  throw ValidationError("unknown builtin '" + name + "'");
}

Scenario builtin(const std::string& name) {
  return parse_scenario_text(builtin_text(name), "builtin:" + name);
}

}  // namespace bslice
