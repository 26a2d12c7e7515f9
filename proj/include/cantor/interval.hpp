#pragma once

#include <string>

#include "cantor/errors.hpp"
#include "cantor/rational.hpp"

namespace cantor {

// Interval on the line with exact rational endpoints. Covering intervals are
// closed, gaps open; degenerate means lo == hi.
struct IntervalR {
  enum class Kind { Closed, Open, Degenerate };

  Rat lo, hi;
  Kind kind = Kind::Closed;

  IntervalR() : lo(0), hi(0), kind(Kind::Degenerate) {}
  IntervalR(Rat l, Rat h, Kind k = Kind::Closed) : lo(std::move(l)), hi(std::move(h)), kind(k) {
    if (lo > hi) throw ArgumentError("interval with lo > hi");
    if (lo == hi) kind = Kind::Degenerate;
    else if (kind == Kind::Degenerate) throw ArgumentError("degenerate kind on nondegenerate interval");
  }

  static IntervalR closed(Rat l, Rat h) { return IntervalR(std::move(l), std::move(h), Kind::Closed); }
  static IntervalR open(Rat l, Rat h) { return IntervalR(std::move(l), std::move(h), Kind::Open); }
  static IntervalR point(Rat x) { return IntervalR(x, x, Kind::Degenerate); }

  Rat length() const { return hi - lo; }
  Rat mid() const { return (lo + hi) / 2; }
  bool degenerate() const { return lo == hi; }

  bool contains(const Rat& x) const {
    if (kind == Kind::Open) return lo < x && x < hi;
    return lo <= x && x <= hi;
  }

  // Closed-hull relations; openness is tracked separately where it matters.
  bool hull_contains(const IntervalR& o) const { return lo <= o.lo && o.hi <= hi; }
  bool hull_intersects(const Rat& alo, const Rat& ahi) const { return lo <= ahi && alo <= hi; }

  // Positive-length overlap with [alo, ahi] (the right test for open sets).
  bool overlaps_open(const Rat& alo, const Rat& ahi) const { return lo < ahi && alo < hi; }

  std::string str() const {
    const char* l = kind == Kind::Open ? "(" : "[";
    const char* r = kind == Kind::Open ? ")" : "]";
    return std::string(l) + rat_str(lo) + ", " + rat_str(hi) + r;
  }

  friend bool operator==(const IntervalR& a, const IntervalR& b) {
    return a.lo == b.lo && a.hi == b.hi && a.kind == b.kind;
  }
};

}  // namespace cantor
