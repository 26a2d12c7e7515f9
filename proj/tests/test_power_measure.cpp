#include <catch2/catch_amalgamated.hpp>

#include "cantor/measure.hpp"
#include "cantor/power_measure.hpp"

using namespace cantor;

TEST_CASE("schedule parameters") {
  CHECK(PowerMeasure::make(Rat(1)).m() == 2);
  CHECK(PowerMeasure::make(Rat(2)).m() == 2);
  CHECK(PowerMeasure::make(Rat(3)).m() == 2);
  CHECK(PowerMeasure::make(rat(1, 2)).m() == 3);  // smallest m with m/2 > 1
  CHECK(PowerMeasure::make(rat(1, 5)).m() == 6);
  CHECK_THROWS_AS(PowerMeasure::make(Rat(0)), ArgumentError);
}

TEST_CASE("breakpoint masses") {
  auto p1 = PowerMeasure::make(Rat(1));
  auto v = p1.cdf(rat(1, 4), pow2(-40));
  REQUIRE(v.is_exact());
  CHECK(v.exact_value() == rat(1, 4));

  auto p2 = PowerMeasure::make(Rat(2));
  CHECK(p2.cdf(rat(1, 4), pow2(-40)).exact_value() == rat(1, 16));
  CHECK(p2.cdf(rat(1, 16), pow2(-40)).exact_value() == rat(1, 256));

  auto ph = PowerMeasure::make(rat(1, 2));
  // mu[0, 1/8] = 2^{-3/2}, irrational: a genuine enclosure
  auto w = ph.cdf(rat(1, 8), pow2(-80));
  CHECK_FALSE(w.is_exact());
  CHECK(w.width() <= pow2(-80));
  Scalar oracle = Scalar::pow(rat(1, 8), rat(1, 2));
  CHECK(w.lower() <= oracle.upper());
  CHECK(w.upper() >= oracle.lower());
}

TEST_CASE("p = 1 gives the identity cdf exactly") {
  auto pm = PowerMeasure::make(Rat(1));
  for (long num = 0; num <= 64; ++num) {
    Rat t(num, 64);
    t.canonicalize();
    auto v = pm.cdf(t, pow2(-60));
    REQUIRE(v.is_exact());
    CHECK(v.exact_value() == t);
  }
  // non-dyadic rationals too
  CHECK(pm.cdf(rat(1, 3), pow2(-60)).exact_value() == rat(1, 3));
  CHECK(pm.cdf(rat(5, 7), pow2(-60)).exact_value() == rat(5, 7));
}

TEST_CASE("cdf hand values for p = 2") {
  auto pm = PowerMeasure::make(Rat(2));
  // middle block [1/4,3/4] uniform with mass 7/8; cdf(3/8) = 1/16 + (7/8)(1/4)
  CHECK(pm.cdf(rat(3, 8), pow2(-40)).exact_value() == rat(9, 32));
  CHECK(pm.cdf(rat(1, 2), pow2(-40)).exact_value() == rat(1, 2));  // symmetry
  // symmetric side
  CHECK(pm.cdf(rat(3, 4), pow2(-40)).exact_value() == Rat(1) - rat(1, 16));
}

TEST_CASE("mass is a cdf difference") {
  auto p1 = PowerMeasure::make(Rat(1));
  CHECK(p1.mass(rat(1, 5), rat(7, 10), pow2(-40)).exact_value() == rat(1, 2));
  auto p2 = PowerMeasure::make(Rat(2));
  CHECK(p2.mass(Rat(0), Rat(1), pow2(-40)).exact_value() == Rat(1));
  CHECK(p2.mass(rat(1, 16), rat(1, 4), pow2(-40)).exact_value() == rat(1, 16) - rat(1, 256));
  CHECK_THROWS_AS(p2.mass(rat(1, 2), rat(1, 4), pow2(-40)), ArgumentError);
  CHECK_THROWS_AS(p2.cdf(Rat(2), Rat(1)), ArgumentError);
}

TEST_CASE("power-law envelope on the tail") {
  // for all t <= 2^{-m}: 2^{-mp} <= cdf(t)/t^p <= 2^{mp}
  for (const Rat& p : {rat(1, 2), Rat(2)}) {
    auto pm = PowerMeasure::make(p);
    const long m = pm.m();
    Scalar lo_env = Scalar::pow(pow2(-m), p);
    Scalar hi_env = Scalar::pow(pow2(m), p);
    for (long k = 1; k <= 6; ++k) {
      for (long j = 1; j <= 8; ++j) {
        // dyadic points crossing each tail piece
        Rat t = pm.breakpoint(k) * (Rat(1) + Rat(j) / 8 * (pow2(m) - 1));
        t.canonicalize();
        if (t > pm.breakpoint(1)) continue;
        Scalar ratio = pm.cdf(t, pow2(-90)) / Scalar::pow(t, p);
        CHECK(Scalar::certify_le(lo_env, ratio).value_or(false));
        CHECK(Scalar::certify_le(ratio, hi_env).value_or(false));
      }
    }
  }
}

TEST_CASE("doubling at breakpoints with the envelope constant") {
  for (const Rat& p : {rat(1, 2), Rat(1), Rat(2)}) {
    auto pm = PowerMeasure::make(p);
    const long m = pm.m();
    Scalar bound = Scalar::pow(pow2(2 * m), p) * Scalar::exact(Rat(2));  // 2^{2mp+1}
    // centers: 0 and breakpoints; dyadic radii
    std::vector<Rat> centers = {Rat(0)};
    for (long k = 1; k <= 4; ++k) centers.push_back(pm.breakpoint(k));
    for (const Rat& x : centers) {
      for (long j = 2; j <= 10; ++j) {
        const Rat r = pow2(-j);
        auto m1 = pm.mass(x - r, x + r, pow2(-70));
        auto m2 = pm.mass(x - 2 * r, x + 2 * r, pow2(-70));
        Scalar lhs = m2;
        Scalar rhs = bound * m1;
        CHECK(Scalar::certify_le(lhs, rhs).value_or(false));
      }
    }
  }
}

TEST_CASE("adjacent pair ratio at breakpoints, p = 2") {
  // mu[r,2r]/mu[0,r] at r = 2^{-2k}: cdf(2^{-2k+1}) = 6 * 2^{-4k}, so the
  // oriented ratio is exactly 5 (cdf arithmetic on the schedule).
  auto pm = PowerMeasure::make(Rat(2));
  for (long k = 2; k <= 5; ++k) {
    const Rat r = pow2(-2 * k);
    auto a = pm.mass(Rat(0), r, pow2(-60));
    auto b = pm.mass(r, 2 * r, pow2(-60));
    REQUIRE(a.is_exact());
    REQUIRE(b.is_exact());
    CHECK(b.exact_value() / a.exact_value() == Rat(5));
  }
}

TEST_CASE("scaled pushforward onto a gap") {
  auto p1 = PowerMeasure::make(Rat(1));
  // G = (0,1), total 1: identical to the base measure
  auto id = scaled_onto(p1, IntervalR::open(Rat(0), Rat(1)), Scalar::exact(Rat(1)));
  CHECK(id.mass(rat(1, 5), rat(7, 10), pow2(-40)).exact_value() == rat(1, 2));

  // G = (1/3, 2/3), total 1/2, p = 1: mass of (1/3, 1/2] = 1/4
  auto half = scaled_onto(p1, IntervalR::open(rat(1, 3), rat(2, 3)), Scalar::exact(rat(1, 2)));
  CHECK(half.mass(rat(1, 3), rat(1, 2), pow2(-40)).exact_value() == rat(1, 4));

  // G = (0, 1/2), total 1, p = 2: mass of (0, 1/8] = cdf(1/4) = 1/16
  auto p2 = PowerMeasure::make(Rat(2));
  auto sc = scaled_onto(p2, IntervalR::open(Rat(0), rat(1, 2)), Scalar::exact(Rat(1)));
  CHECK(sc.mass(Rat(0), rat(1, 8), pow2(-40)).exact_value() == rat(1, 16));

  CHECK_THROWS_AS(scaled_onto(p2, IntervalR::point(rat(1, 2)), Scalar::exact(Rat(1))),
                  ArgumentError);
}

TEST_CASE("symmetry identities at dyadic points") {
  for (const Rat& p : {rat(1, 2), Rat(2), Rat(3)}) {
    auto pm = PowerMeasure::make(p);
    for (long j = 1; j < 32; ++j) {
      Rat t(j, 32);
      t.canonicalize();
      Scalar left = pm.cdf(t, pow2(-80));
      Scalar right = Scalar::exact(Rat(1)) - pm.cdf(Rat(1) - t, pow2(-80));
      Scalar diff = left - right;
      CHECK(diff.contains(Rat(0)));
      CHECK(diff.width() <= pow2(-75));
    }
  }
}

TEST_CASE("oracle facades") {
  auto leb = lebesgue_oracle(IntervalR::closed(Rat(0), Rat(1)));
  CHECK(leb(IntervalR::closed(rat(1, 4), rat(3, 4)), pow2(-20)).lower == rat(1, 2));

  auto pm = power_measure_oracle(PowerMeasure::make(Rat(2)));
  auto b = pm(IntervalR::closed(Rat(0), rat(1, 4)), pow2(-20));
  CHECK(b.contains(rat(1, 16)));

  auto s = sum_oracle(leb, pm);
  auto t = s(IntervalR::closed(Rat(0), rat(1, 4)), pow2(-20));
  CHECK(t.contains(rat(1, 4) + rat(1, 16)));

  auto other = lebesgue_oracle(IntervalR::closed(Rat(0), rat(1, 2)));
  CHECK_THROWS_AS(sum_oracle(leb, other), ArgumentError);
}
