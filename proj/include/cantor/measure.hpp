#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "cantor/errors.hpp"
#include "cantor/interval.hpp"
#include "cantor/power_measure.hpp"
#include "cantor/rational.hpp"
#include "cantor/scalar.hpp"

namespace cantor {

// Certified mass enclosure.
struct MassBounds {
  Rat lower, upper;

  MassBounds() : lower(0), upper(0) {}
  MassBounds(Rat lo, Rat up) : lower(std::move(lo)), upper(std::move(up)) {
    if (lower > upper) throw InvariantError("mass bounds with lower > upper");
    if (lower < 0) lower = 0;  // masses are nonnegative
  }

  static MassBounds from_scalar(const Scalar& s) { return {s.lower(), s.upper()}; }
  static MassBounds point(const Rat& v) { return {v, v}; }

  Rat width() const { return upper - lower; }
  Rat mid() const { return (lower + upper) / 2; }
  bool contains(const Rat& v) const { return lower <= v && v <= upper; }

  MassBounds& operator+=(const MassBounds& o) {
    lower += o.lower;
    upper += o.upper;
    return *this;
  }
  friend MassBounds operator+(MassBounds a, const MassBounds& b) { return a += b; }
};

// Uniform facade over the measures in this library: certified interval
// queries on a fixed domain.
struct MeasureOracle {
  IntervalR domain;
  std::function<MassBounds(const IntervalR&, const Rat& eps)> query;
  std::string name;

  MassBounds operator()(const IntervalR& q, const Rat& eps) const { return query(q, eps); }
};

inline MeasureOracle lebesgue_oracle(IntervalR domain) {
  return MeasureOracle{
      domain,
      [domain](const IntervalR& q, const Rat&) {
        const Rat lo = rat_max(q.lo, domain.lo);
        const Rat hi = rat_min(q.hi, domain.hi);
        return MassBounds::point(lo < hi ? Rat(hi - lo) : Rat(0));
      },
      "lebesgue"};
}

inline MeasureOracle power_measure_oracle(const PowerMeasure& pm) {
  return MeasureOracle{IntervalR::closed(Rat(0), Rat(1)),
                       [pm](const IntervalR& q, const Rat& eps) {
                         return MassBounds::from_scalar(pm.mass(q.lo, q.hi, eps));
                       },
                       "power_measure(p=" + rat_str(pm.p()) + ")"};
}

// Pointwise sum of two measures on the same domain.
inline MeasureOracle sum_oracle(const MeasureOracle& a, const MeasureOracle& b) {
  if (!(a.domain.lo == b.domain.lo && a.domain.hi == b.domain.hi))
    throw ArgumentError("summed oracles must share their domain");
  return MeasureOracle{a.domain,
                       [a, b](const IntervalR& q, const Rat& eps) {
                         const Rat half = eps / 2;
                         return a.query(q, half) + b.query(q, half);
                       },
                       a.name + "+" + b.name};
}

}  // namespace cantor
