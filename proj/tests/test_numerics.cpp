#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <thread>
#include <vector>

#include "cantor/rational.hpp"
#include "cantor/scalar.hpp"

using namespace cantor;

TEST_CASE("rational parsing and formatting") {
  CHECK(parse_rat("1/3") == rat(1, 3));
  CHECK(parse_rat("-7/14") == rat(-1, 2));
  CHECK(parse_rat("5") == Rat(5));
  CHECK(parse_rat("2^-4") == rat(1, 16));
  CHECK(parse_rat("2^3") == Rat(8));
  CHECK(rat_str(rat(2, 4)) == "1/2");
  CHECK_THROWS_AS(parse_rat("1/0"), ParseError);
  CHECK_THROWS_AS(parse_rat("abc"), ParseError);
  CHECK_THROWS_AS(parse_rat(""), ParseError);
}

TEST_CASE("exact rational powers") {
  CHECK(*rat_pow_exact(rat(1, 4), rat(1, 2)) == rat(1, 2));
  CHECK(*rat_pow_exact(rat(8, 27), rat(1, 3)) == rat(2, 3));
  CHECK(*rat_pow_exact(rat(1, 3), Rat(2)) == rat(1, 9));
  CHECK_FALSE(rat_pow_exact(rat(1, 3), rat(1, 2)).has_value());
  CHECK(*rat_pow_exact(rat(1, 64), rat(1, 2)) == rat(1, 8));
  CHECK(*exact_log2(rat(1, 8)) == -3);
  CHECK(*exact_log2(Rat(16)) == 4);
  CHECK_FALSE(exact_log2(rat(3, 4)).has_value());
}

TEST_CASE("pow_bounds identity and exact roots") {
  // (1/4)^1 is exactly 1/4
  Scalar a = pow_bounds(rat(1, 4), Rat(1), rat(1, 1000));
  REQUIRE(a.is_exact());
  CHECK(a.exact_value() == rat(1, 4));
  // (1/4)^{1/2} is exactly 1/2
  Scalar b = pow_bounds(rat(1, 4), rat(1, 2), rat(1, 1000));
  REQUIRE(b.is_exact());
  CHECK(b.exact_value() == rat(1, 2));
}

TEST_CASE("pow_bounds encloses the Newton oracle for sqrt(1/3)") {
  // Frozen before the build: 200 Newton steps on x^2 = 1/3 give
  // 0.57735026918962576450914878050195745564760175127013 (50 digits).
  const Rat oracle = parse_rat(
      "57735026918962576450914878050195745564760175127013/"
      "100000000000000000000000000000000000000000000000000");
  const Rat tol = pow2(-70);  // well below 1e-20
  Scalar s = pow_bounds(rat(1, 3), rat(1, 2), tol);
  CHECK_FALSE(s.is_exact());
  CHECK(s.width() <= tol);
  CHECK(s.lower() <= oracle);
  // The frozen decimal is truncated, so the true value is within 1e-50 above.
  CHECK(oracle + parse_rat("1/100000000000000000000000000000000000000000000000")
        >= s.lower());
  CHECK(s.upper() >= oracle);
}

TEST_CASE("pow_bounds argument validation") {
  CHECK_THROWS_AS(pow_bounds(rat(1, 3), rat(1, 2), Rat(0)), ArgumentError);
  CHECK_THROWS_AS(pow_bounds(rat(1, 3), rat(1, 2), Rat(-1)), ArgumentError);
  CHECK_THROWS_AS(pow_bounds(Rat(2), Rat(1), Rat(1)), ArgumentError);
  CHECK_THROWS_AS(pow_bounds(Rat(0), Rat(1), Rat(1)), ArgumentError);
  CHECK_THROWS_AS(pow_bounds(rat(1, 2), Rat(0), Rat(1)), ArgumentError);
}

TEST_CASE("refine contracts") {
  // already exact: unchanged
  Scalar half = Scalar::exact(rat(1, 2));
  Scalar r = refine(half, pow2(-30));
  CHECK(r.is_exact());
  CHECK(r.exact_value() == rat(1, 2));

  // coarse pow refined much tighter
  Scalar s = Scalar::pow(rat(1, 3), rat(1, 2));
  Scalar t = refine(s, pow2(-66));
  CHECK(t.width() <= pow2(-66));
  CHECK(t.lower() >= s.lower());
  CHECK(t.upper() <= s.upper());

  // a recipe-less leaf cannot be refined
  Scalar leaf = Scalar::from_bounds(rat(1, 4), rat(1, 2));
  CHECK_THROWS_AS(refine(leaf, pow2(-10)), RefineError);
}

TEST_CASE("sum of one hundred scalars refines to tolerance") {
  std::vector<Scalar> xs;
  for (int i = 1; i <= 100; ++i) xs.push_back(Scalar::pow(rat(1, i + 2), rat(1, 2)));
  Scalar s = Scalar::sum(xs);
  const Rat tol = pow2(-90);
  Scalar r = refine(s, tol);
  CHECK(r.width() <= tol);
  // Exhaustive recomputation at a much higher precision must land inside.
  Scalar hi = s.refined_to_prec(1024);
  CHECK(hi.lower() >= r.lower() - tol);
  CHECK(hi.upper() <= r.upper() + tol);
  CHECK(r.lower() <= hi.upper());
  CHECK(r.upper() >= hi.lower());
}

TEST_CASE("enclosure property on randomized pow inputs") {
  std::mt19937_64 rng(20240817);
  for (int it = 0; it < 60; ++it) {
    const long bn = 1 + static_cast<long>(rng() % 200);
    const long bd = bn + 1 + static_cast<long>(rng() % 200);
    const long en = 1 + static_cast<long>(rng() % 9);
    const long ed = 1 + static_cast<long>(rng() % 9);
    const Rat base = rat(bn, bd);
    const Rat expo = rat(en, ed);
    Scalar s = Scalar::pow(base, expo);
    Scalar fine = s.refined_to_prec(512);  // high precision oracle
    CHECK(s.lower() <= fine.lower());
    CHECK(s.upper() >= fine.upper());
    // monotone refinement
    Scalar mid = s.refined_to_prec(256);
    CHECK(mid.lower() >= s.lower());
    CHECK(mid.upper() <= s.upper());
    CHECK(mid.lower() <= fine.lower());
    CHECK(mid.upper() >= fine.upper());
  }
}

TEST_CASE("integer exponents on dyadics stay exact through arithmetic") {
  Scalar a = Scalar::pow(rat(3, 8), Rat(3));
  REQUIRE(a.is_exact());
  CHECK(a.exact_value() == rat(27, 512));
  Scalar b = a * Scalar::exact(rat(2, 3)) + Scalar::exact(rat(1, 7));
  REQUIRE(b.is_exact());
  CHECK(b.exact_value() == rat(27, 512) * rat(2, 3) + rat(1, 7));
}

TEST_CASE("interval arithmetic is outward and certified comparisons work") {
  Scalar x = Scalar::pow(rat(1, 3), rat(1, 2));  // irrational
  Scalar y = x * x;                              // should enclose 1/3
  CHECK(y.contains(rat(1, 3)));
  Scalar z = y - Scalar::exact(rat(1, 3));
  CHECK(z.contains(Rat(0)));

  CHECK(*Scalar::certify_lt(Scalar::exact(rat(1, 3)), x) == true);
  CHECK(*Scalar::certify_le(x, Scalar::exact(rat(3, 5))) == true);
  CHECK(*Scalar::certify_le(Scalar::exact(rat(3, 5)), x) == false);
  CHECK(*Scalar::certify_le(Scalar::exact(rat(1, 2)), Scalar::exact(rat(1, 2))) == true);
}

TEST_CASE("log2 exactness and enclosure") {
  Scalar a = Scalar::log2(Scalar::exact(rat(1, 8)));
  REQUIRE(a.is_exact());
  CHECK(a.exact_value() == Rat(-3));
  Scalar b = Scalar::log2(Scalar::exact(Rat(3)));
  CHECK(b.lower() < parse_rat("1585/1000"));
  CHECK(b.upper() > parse_rat("1584/1000"));
  CHECK_THROWS_AS(Scalar::log2(Scalar::exact(Rat(0))), ArgumentError);
}

TEST_CASE("scalars are safe to share across threads") {
  Scalar s = Scalar::pow(rat(2, 7), rat(3, 5));
  std::vector<std::thread> ts;
  std::vector<Rat> widths(8);
  for (int i = 0; i < 8; ++i)
    ts.emplace_back([&, i] {
      Scalar r = s.refined(pow2(-200 - i));
      widths[i] = r.width();
    });
  for (auto& t : ts) t.join();
  for (int i = 0; i < 8; ++i) CHECK(widths[i] <= pow2(-200 - i));
}

TEST_CASE("division guards") {
  Scalar z = Scalar::pow(rat(1, 3), rat(1, 2)) - Scalar::pow(rat(1, 3), rat(1, 2));
  CHECK_THROWS_AS(Scalar::exact(Rat(1)) / z, ArgumentError);
  CHECK_THROWS_AS(Scalar::exact(Rat(1)) / Scalar::exact(Rat(0)), ArgumentError);
  Scalar fine = Scalar::exact(Rat(1)) / Scalar::pow(rat(1, 3), rat(1, 2));
  // sqrt(3) = 1.7320508075688772935274...
  CHECK(fine.lower() >= parse_rat("17320508075688772935/10000000000000000000"));
  CHECK(fine.upper() <= parse_rat("17320508075688772936/10000000000000000000"));
}
