#include <doctest.h>

#include <stdexcept>

#include "bslice/rational.hpp"

using bslice::Rational;

TEST_CASE("rational normalization") {
  CHECK(Rational(2, 4) == Rational(1, 2));
  CHECK(Rational(-2, 4) == Rational(-1, 2));
  CHECK(Rational(2, -4) == Rational(-1, 2));
  CHECK(Rational(-2, -4) == Rational(1, 2));
  CHECK(Rational(0, 7) == Rational(0));
  CHECK(Rational(0, -7).den() == 1);
  CHECK(Rational(6, 3).is_integer());
  CHECK_THROWS_AS(Rational(1, 0), std::exception);
}

TEST_CASE("rational arithmetic is exact") {
  Rational third(1, 3);
  CHECK(third + third + third == Rational(1));
  CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
  CHECK(Rational(1, 2) - Rational(1, 3) == Rational(1, 6));
  CHECK(Rational(2, 3) * Rational(3, 4) == Rational(1, 2));
  CHECK(Rational(2, 3) / Rational(4, 9) == Rational(3, 2));
  CHECK(-Rational(5, 7) == Rational(-5, 7));
  CHECK_THROWS_AS(Rational(1) / Rational(0), std::exception);

  Rational acc(0);
  for (int i = 0; i < 100; ++i) acc += Rational(1, 100);
  CHECK(acc == Rational(1));
}

TEST_CASE("rational comparison and queries") {
  CHECK(Rational(1, 3) < Rational(1, 2));
  CHECK(Rational(-1, 2) < Rational(-1, 3));
  CHECK_FALSE(Rational(1, 2) < Rational(1, 2));
  CHECK(Rational(0).is_zero());
  CHECK_FALSE(Rational(1, 2).is_zero());
  CHECK(Rational(7, 2).to_double() == doctest::Approx(3.5));
}

TEST_CASE("rational pow") {
  CHECK(Rational(2, 3).pow(2) == Rational(4, 9));
  CHECK(Rational(2, 3).pow(0) == Rational(1));
  CHECK(Rational(2, 3).pow(-1) == Rational(3, 2));
  CHECK(Rational(2).pow(-3) == Rational(1, 8));
  CHECK(Rational(-1, 2).pow(3) == Rational(-1, 8));
  CHECK_THROWS_AS(Rational(0).pow(-1), std::exception);
}

TEST_CASE("rational from_decimal") {
  CHECK(Rational::from_decimal("0.25") == Rational(1, 4));
  CHECK(Rational::from_decimal("-1.5") == Rational(-3, 2));
  CHECK(Rational::from_decimal("3") == Rational(3));
  CHECK(Rational::from_decimal("0.125") == Rational(1, 8));
}

TEST_CASE("rational str") {
  CHECK(Rational(5, 6).str() == "5/6");
  CHECK(Rational(-5, 6).str() == "-5/6");
  CHECK(Rational(4).str() == "4");
  CHECK(Rational(0).str() == "0");
}
