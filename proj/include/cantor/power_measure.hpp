#pragma once

#include <memory>

#include "cantor/errors.hpp"
#include "cantor/interval.hpp"
#include "cantor/rational.hpp"
#include "cantor/scalar.hpp"

namespace cantor {

// Explicit doubling measure on [0,1] with cdf(t) comparable to t^p on both
// sides. Breakpoints sit at 2^{-km} carrying mass 2^{-kmp}; the measure is
// uniform between consecutive breakpoints and on the middle block
// [2^{-m}, 1-2^{-m}]; symmetric about 1/2.
class PowerMeasure {
 public:
  static PowerMeasure make(const Rat& p) {
    if (p <= 0) throw ArgumentError("power measure requires p > 0");
    // smallest m with m p > 1, forced >= 2 so the middle block is nondegenerate
    const mpz_class e = p.get_num(), f = p.get_den();
    mpz_class q = f / e;  // floor
    long m = q.get_si() + 1;
    if (m < 2) m = 2;
    return PowerMeasure(p, m);
  }

  const Rat& p() const { return p_; }
  long m() const { return m_; }

  Rat breakpoint(long k) const { return pow2(-k * m_); }

  // mass of [0, 2^{-km}] = 2^{-kmp}; exact whenever kmp is an integer.
  Scalar breakpoint_mass(long k) const { return Scalar::pow(breakpoint(k), p_); }

  Scalar cdf(const Rat& t, const Rat& tolerance) const {
    if (t < 0 || t > 1) throw ArgumentError("cdf argument outside [0,1]");
    Scalar v = cdf_raw(t);
    return v.refined(tolerance);
  }

  Scalar mass(const Rat& a, const Rat& b, const Rat& tolerance) const {
    if (a > b) throw ArgumentError("mass requires a <= b");
    const Rat lo = rat_max(a, Rat(0));
    const Rat hi = rat_min(b, Rat(1));
    if (lo >= hi) return Scalar::exact(Rat(0));
    Scalar v = cdf_raw(hi) - cdf_raw(lo);
    return v.refined(tolerance);
  }

 private:
  PowerMeasure(Rat p, long m) : p_(std::move(p)), m_(m) {}

  Scalar cdf_raw(const Rat& t) const {
    if (t == 0) return Scalar::exact(Rat(0));
    if (t == 1) return Scalar::exact(Rat(1));
    if (2 * t > 1) return Scalar::exact(Rat(1)) - cdf_raw(Rat(1) - t);
    const Rat b1 = breakpoint(1);
    if (t >= b1) {
      // uniform middle block carrying 1 - 2^{-mp+1}
      Scalar m1 = breakpoint_mass(1);
      Scalar mid_mass = Scalar::exact(Rat(1)) - Scalar::exact(Rat(2)) * m1;
      Scalar density = mid_mass / Scalar::exact(Rat(1) - 2 * b1);
      return m1 + Scalar::exact(t - b1) * density;
    }
    // tail piece [2^{-km}, 2^{-(k-1)m}] with k >= 2 chosen lazily from t
    long k = 2;
    while (breakpoint(k) > t) ++k;
    Scalar mk = breakpoint_mass(k);
    Scalar mk1 = breakpoint_mass(k - 1);
    Scalar density = (mk1 - mk) / Scalar::exact(breakpoint(k - 1) - breakpoint(k));
    return mk + Scalar::exact(t - breakpoint(k)) * density;
  }

  Rat p_;
  long m_;
};

// Affine pushforward of a PowerMeasure onto an open interval G with a given
// total mass: queries scale as total * cdf((x - G.lo)/|G|).
class ScaledPowerMeasure {
 public:
  ScaledPowerMeasure(PowerMeasure base, IntervalR g, Scalar total)
      : base_(std::move(base)), g_(std::move(g)), total_(std::move(total)) {
    if (g_.degenerate()) throw ArgumentError("cannot scale onto a degenerate interval");
  }

  const IntervalR& support() const { return g_; }
  const Scalar& total() const { return total_; }

  // mass of (a, b) within G, clipped.
  Scalar mass(const Rat& a, const Rat& b, const Rat& tolerance) const {
    if (a > b) throw ArgumentError("mass requires a <= b");
    const Rat lo = rat_max(a, g_.lo);
    const Rat hi = rat_min(b, g_.hi);
    if (lo >= hi) return Scalar::exact(Rat(0));
    const Rat u = (lo - g_.lo) / g_.length();
    const Rat v = (hi - g_.lo) / g_.length();
    Scalar frac = base_.cdf(v, tolerance) - base_.cdf(u, tolerance);
    Scalar out = total_ * frac;
    return out.refined(tolerance);
  }

 private:
  PowerMeasure base_;
  IntervalR g_;
  Scalar total_;
};

inline ScaledPowerMeasure scaled_onto(const PowerMeasure& pm, const IntervalR& g,
                                      const Scalar& total) {
  return ScaledPowerMeasure(pm, g, total);
}

}  // namespace cantor
