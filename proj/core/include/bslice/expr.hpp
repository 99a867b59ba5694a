#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bslice/chart.hpp"
#include "bslice/rational.hpp"

namespace bslice {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, size_t pos)
      : std::runtime_error(msg + " (at offset " + std::to_string(pos) + ")"), position(pos) {}
  size_t position;
};
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class NodeKind { Constant, Var, Sum, Product, Power, Sin, Cos, Exp, Log, Integral };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  NodeKind kind = NodeKind::Constant;
  Rational rat{0};          // Constant: value = rat * pi^pi_power
  int pi_power = 0;         // Constant only
  std::string name;         // Var: variable; Integral: dummy variable
  long long ipow = 1;       // Power exponent
  std::vector<ExprPtr> kids;  // Sum/Product children; Power [base];
                              // Sin/Cos/Exp/Log [arg]; Integral [integrand, upper]
};

class CompiledExpr;

// Immutable symbolic expression, kept in a canonical normal form: sums and
// products are flattened and sorted, rational constants (and exact rational
// multiples of pi) fold, repeated factors collect into integer powers, and
// like terms combine. Normalization is idempotent.
class ScalarExpr {
 public:
  ScalarExpr() : root_(zero_node()) {}

  static ScalarExpr constant(Rational r);
  static ScalarExpr constant(long long n) { return constant(Rational(n)); }
  static ScalarExpr pi();
  static ScalarExpr var(const std::string& name);
  static ScalarExpr sum(std::vector<ScalarExpr> terms);
  static ScalarExpr product(std::vector<ScalarExpr> factors);
  static ScalarExpr pow(const ScalarExpr& base, long long e);
  static ScalarExpr sin(const ScalarExpr& a);
  static ScalarExpr cos(const ScalarExpr& a);
  static ScalarExpr exp(const ScalarExpr& a);
  static ScalarExpr log(const ScalarExpr& a);
  // Definite integral of `integrand` in the dummy variable `dummy` from 0 to
  // `upper`. Used as an opaque fallback when no symbolic antiderivative is
  // found; evaluation runs fixed-node Gauss-Legendre quadrature.
  static ScalarExpr integral(const ScalarExpr& integrand, const std::string& dummy,
                             const ScalarExpr& upper);

  ScalarExpr operator+(const ScalarExpr& o) const { return sum({*this, o}); }
  ScalarExpr operator-(const ScalarExpr& o) const;
  ScalarExpr operator*(const ScalarExpr& o) const { return product({*this, o}); }
  ScalarExpr operator/(const ScalarExpr& o) const { return product({*this, pow(o, -1)}); }
  ScalarExpr operator-() const;

  bool is_zero() const;
  bool is_one() const;
  // Exact rational value if the expression is a plain rational constant.
  std::optional<Rational> rational_constant() const;

  ScalarExpr derivative(const std::string& var) const;
  ScalarExpr substitute(const std::map<std::string, ScalarExpr>& repl) const;
  double evaluate(const Chart& chart, const Point& p) const;
  std::string str() const;
  std::set<std::string> free_vars() const;

  // Structural identity of normal forms.
  static bool identical(const ScalarExpr& a, const ScalarExpr& b);

  CompiledExpr compile(const Chart& chart) const;

  const ExprPtr& root() const { return root_; }
  static ScalarExpr from_root(ExprPtr root);  // normalizes

 private:
  explicit ScalarExpr(ExprPtr root) : root_(std::move(root)) {}
  static const ExprPtr& zero_node();
  ExprPtr root_;
};

// Antiderivative in `var` when one exists within the supported fragment
// (polynomials in var; sin/cos/exp of expressions linear in var; products
// with a single var-dependent factor; sums of the above).
std::optional<ScalarExpr> antiderivative(const ScalarExpr& e, const std::string& var);

// Definite integral from `lo` to `hi` in `var`: symbolic when antiderivative
// succeeds, otherwise an opaque quadrature-backed Integral node.
ScalarExpr definite_integral(const ScalarExpr& e, const std::string& var, const ScalarExpr& lo,
                             const ScalarExpr& hi);

// Total order on expression trees; defines the canonical child ordering.
int expr_compare(const ExprPtr& a, const ExprPtr& b);

// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' integer)?
//   base   := number | 'pi' | ident | '(' expr ')'
//           | ('sin'|'cos'|'exp'|'log') '(' expr ')' | '-' factor
// Numbers are decimal rationals. If `allowed` is given, identifiers outside
// it raise ParseError.
ScalarExpr parse_expr(const std::string& text,
                      const std::set<std::string>* allowed = nullptr);

struct EquivOptions {
  int samples = 64;
  double tol = 1e-9;
  uint64_t seed = 2024;
  bool include_critical = true;  // sample some points with the defining coordinate = 0
};

// Probabilistic equality on a chart's domain: |e1 - e2| <= tol * (1 + |e1|)
// at `samples` admissible points. Points where evaluation hits a domain
// error are resampled (bounded budget); structural identity short-circuits.
bool equivalent(const ScalarExpr& e1, const ScalarExpr& e2, const Chart& chart,
                const EquivOptions& opts = {});
bool equivalent_zero(const ScalarExpr& e, const Chart& chart, const EquivOptions& opts = {});

// Numeric periodicity check in one Angle coordinate (32 sample pairs).
bool is_periodic_in(const ScalarExpr& e, const Chart& chart, int coord_index,
                    uint64_t seed = 2024);

// Flat postfix tape for fast repeated evaluation against a fixed chart.
class CompiledExpr {
 public:
  double evaluate(const double* env, int env_size) const;
  double evaluate(const Point& p) const { return evaluate(p.data(), static_cast<int>(p.size())); }

 private:
  friend class ScalarExpr;
  struct Op {
    enum Code : uint8_t { Const, Load, AddN, MulN, PowI, Sin, Cos, Exp, Log, Quad } code;
    double cval = 0.0;
    int arg = 0;
  };
  struct QuadBlock {
    std::shared_ptr<CompiledExpr> integrand;
    std::shared_ptr<CompiledExpr> upper;
    int dummy_slot = 0;
  };
  std::vector<Op> ops_;
  std::vector<QuadBlock> quads_;
  int max_stack_ = 0;
  int env_size_ = 0;
  std::string src_;  // for diagnostics
};

}  // namespace bslice
