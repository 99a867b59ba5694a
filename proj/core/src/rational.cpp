#include "bslice/rational.hpp"

#include <numeric>

namespace bslice {

namespace {

long long checked(__int128 v, const char* what) {
  if (v > INT64_MAX || v < INT64_MIN) {
    throw std::overflow_error(std::string("rational overflow in ") + what);
  }
  return static_cast<long long>(v);
}

}  // namespace

Rational::Rational(long long n, long long d) {
  if (d == 0) throw std::domain_error("rational with zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  long long g = std::gcd(n < 0 ? -n : n, d);
  if (g == 0) g = 1;
  num_ = n / g;
  den_ = d / g;
}

Rational Rational::from_decimal(const std::string& text) {
  auto dot = text.find('.');
  if (dot == std::string::npos) {
    return Rational(std::stoll(text));
  }
  std::string whole = text.substr(0, dot);
  std::string frac = text.substr(dot + 1);
  if (frac.size() > 18) throw std::invalid_argument("decimal literal too long: " + text);
  bool neg = !whole.empty() && whole[0] == '-';
  long long w = whole.empty() || whole == "-" ? 0 : std::stoll(whole);
  long long scale = 1;
  for (size_t i = 0; i < frac.size(); ++i) scale = checked(static_cast<__int128>(scale) * 10, "decimal");
  long long f = frac.empty() ? 0 : std::stoll(frac);
  __int128 n = static_cast<__int128>(w < 0 ? -w : w) * scale + f;
  if (neg || w < 0) n = -n;
  return Rational(checked(n, "decimal"), scale);
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational Rational::operator+(const Rational& o) const {
  __int128 n = static_cast<__int128>(num_) * o.den_ + static_cast<__int128>(o.num_) * den_;
  __int128 d = static_cast<__int128>(den_) * o.den_;
  // Reduce in 128 bits before narrowing.
  __int128 a = n < 0 ? -n : n, b = d;
  while (b != 0) {
    __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a == 0) a = 1;
  return Rational(checked(n / a, "+"), checked(d / a, "+"));
}

Rational Rational::operator-(const Rational& o) const { return *this + (-o); }

Rational Rational::operator*(const Rational& o) const {
  Rational x(num_, o.den_ == 0 ? 1 : o.den_);
  Rational y(o.num_, den_);
  __int128 n = static_cast<__int128>(x.num_) * y.num_;
  __int128 d = static_cast<__int128>(x.den_) * y.den_;
  return Rational(checked(n, "*"), checked(d, "*"));
}

Rational Rational::operator/(const Rational& o) const {
  if (o.num_ == 0) throw std::domain_error("rational division by zero");
  return *this * Rational(o.den_, o.num_);
}

bool Rational::operator<(const Rational& o) const {
  return static_cast<__int128>(num_) * o.den_ < static_cast<__int128>(o.num_) * den_;
}

Rational Rational::pow(long long e) const {
  if (e == 0) return Rational(1);
  if (num_ == 0 && e < 0) throw std::domain_error("zero to negative power");
  Rational base = e > 0 ? *this : Rational(den_, num_);
  long long n = e > 0 ? e : -e;
  Rational acc(1);
  for (long long i = 0; i < n; ++i) acc *= base;
  return acc;
}

}  // namespace bslice
