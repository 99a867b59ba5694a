#include "bslice/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace bslice {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

RngStream::RngStream(uint64_t seed, std::string_view tag)
    : eng_(splitmix64(seed ^ splitmix64(fnv1a(tag)))) {}

double RngStream::uniform01() {
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

long long RngStream::uniform_int(long long lo, long long hi_inclusive) {
  uint64_t span = static_cast<uint64_t>(hi_inclusive - lo) + 1;
  return lo + static_cast<long long>(eng_() % span);
}

Point sample_point(const Chart& chart, RngStream& rng, bool on_critical) {
  Point p(chart.dim());
  for (int i = 0; i < chart.dim(); ++i) {
    const Coordinate& c = chart.coord(i);
    switch (c.kind) {
      case Coordinate::Kind::Angle:
        p[i] = rng.uniform(0.0, c.period.to_double());
        break;
      case Coordinate::Kind::Real: {
        double lo = std::max(c.lo, -3.0), hi = std::min(c.hi, 3.0);
        if (!(lo < hi)) {
          lo = c.lo;
          hi = c.hi;
        }
        p[i] = rng.uniform(lo, hi);
        break;
      }
      case Coordinate::Kind::Defining: {
        if (on_critical) {
          p[i] = 0.0;
        } else {
          double h = c.hi * 0.9;
          double v = rng.uniform(-h, h);
          double floor_v = 0.05 * c.hi;
          if (std::abs(v) < floor_v) v = (v >= 0 ? floor_v : -floor_v);
          p[i] = v;
        }
        break;
      }
    }
  }
  return p;
}

Point sample_box(const Chart& chart, const Point& center, double radius, RngStream& rng,
                 bool on_critical) {
  Point p(chart.dim());
  for (int i = 0; i < chart.dim(); ++i) {
    p[i] = center[i] + rng.uniform(-radius, radius);
    const Coordinate& c = chart.coord(i);
    if (c.kind == Coordinate::Kind::Defining) {
      if (on_critical) {
        p[i] = 0.0;
      } else {
        p[i] = std::clamp(p[i], c.lo * 0.95, c.hi * 0.95);
      }
    } else if (c.kind == Coordinate::Kind::Real) {
      p[i] = std::clamp(p[i], c.lo, c.hi);
    }
  }
  return p;
}

}  // namespace bslice
