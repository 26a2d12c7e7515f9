#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cantor/tree_measure.hpp"

using namespace cantor;

namespace {
std::shared_ptr<Construction> thirds() { return middle_interval(AlphaSeq::constant(rat(1, 3))); }
}  // namespace

TEST_CASE("build preconditions") {
  auto tm = TreeMeasure::build(thirds(), Rat(1));
  CHECK(tm->eta() == rat(1, 8));  // (1/2) 4^{-1} exactly

  CHECK_THROWS_AS(TreeMeasure::build(thirds(), Rat(0)), ArgumentError);

  // degenerate gaps are rejected
  auto degen = [](const IntervalR& iv, int) {
    NodeExpansion e;
    e.gap = IntervalR::point(iv.mid());
    e.children = {iv};
    return e;
  };
  auto cd = std::make_shared<Construction>(
      std::vector<IntervalR>{IntervalR::closed(Rat(0), Rat(1))}, degen, "degen");
  CHECK_THROWS_AS(TreeMeasure::build(cd, Rat(1)), PreconditionError);

  // user-supplied eta must satisfy eta^p < 1/4
  CHECK_THROWS_AS(TreeMeasure::build(thirds(), Rat(1), rat(1, 3)), PreconditionError);
  CHECK_NOTHROW(TreeMeasure::build(thirds(), Rat(1), rat(1, 5)));
}

TEST_CASE("total mass and zero-length queries") {
  auto tm = TreeMeasure::build(thirds(), Rat(1));
  auto whole = tm->measure_of(IntervalR::closed(Rat(0), Rat(1)), pow2(-40));
  CHECK(whole.lower == Rat(1));
  CHECK(whole.upper == Rat(1));
  auto pt = tm->measure_of(IntervalR::point(rat(1, 2)), pow2(-40));
  CHECK(pt.upper == Rat(0));
}

TEST_CASE("worked level-one distribution at eta = 1/10") {
  // With p = 1 and eta = 1/10 on middle thirds: the edge gap is (1/27, 2/27)
  // because (1/9, 2/9) sits at distance 1/9 > 1/10; the left chain interval
  // [0, 1/27] carries exactly (1/27)^1.
  auto tm = TreeMeasure::build(thirds(), Rat(1), rat(1, 10));
  auto cells = tm->root_cells();
  REQUIRE_FALSE(cells.empty());
  const auto& tail = cells.front();
  CHECK(tail.type == TreeMeasure::CellView::Type::LeftTail);
  CHECK(tail.lo == Rat(0));
  CHECK(tail.hi == rat(1, 27));
  CHECK(tail.mass.lower == rat(1, 27));
  CHECK(tail.mass.upper == rat(1, 27));
  const auto& gl = cells[1];
  CHECK(gl.type == TreeMeasure::CellView::Type::Gap);
  CHECK(gl.lo == rat(1, 27));
  CHECK(gl.hi == rat(2, 27));
  // symmetric right side
  const auto& tr = cells.back();
  CHECK(tr.type == TreeMeasure::CellView::Type::RightTail);
  CHECK(tr.lo == rat(26, 27));
  CHECK(tr.mass.lower == rat(1, 27));
}

TEST_CASE("p = 1 reproduces Lebesgue exactly") {
  // With p = 1 every gamma is exactly 1, so the measure collapses to length.
  auto tm = TreeMeasure::build(thirds(), Rat(1));
  std::mt19937_64 rng(7);
  for (int it = 0; it < 25; ++it) {
    const long den = 1 + static_cast<long>(rng() % 500);
    const long n1 = static_cast<long>(rng() % (den + 1));
    const long n2 = static_cast<long>(rng() % (den + 1));
    Rat x(std::min(n1, n2), den), y(std::max(n1, n2), den);
    x.canonicalize();
    y.canonicalize();
    auto b = tm->measure_of(IntervalR::closed(x, y), pow2(-70));
    CHECK(b.contains(y - x));
    CHECK(b.width() <= pow2(-69));
  }
  auto ledger = tm->gamma_ledger();
  CHECK(ledger.any);
  CHECK(ledger.min_lower == Rat(1));
  CHECK(ledger.max_upper == Rat(1));
  CHECK(tm->conservation().max_rel_residual == Rat(0));
}

TEST_CASE("root boundary chain carries exact power masses") {
  // mass(K_l^j) = |K_l^j|^p at the root, for every materialized step
  auto tm = TreeMeasure::build(thirds(), rat(1, 2));
  // force several chain extensions with queries near the endpoint
  tm->measure_of(IntervalR::closed(Rat(0), pow2(-16)), pow2(-40));
  auto cells = tm->root_cells();
  REQUIRE(cells.front().type == TreeMeasure::CellView::Type::LeftTail);
  const Rat d = cells.front().hi;
  Scalar expect = Scalar::pow(d, rat(1, 2));
  CHECK(cells.front().mass.lower <= expect.upper());
  CHECK(cells.front().mass.upper >= expect.lower());
  CHECK(cells.front().mass.width() <= pow2(-100));
}

TEST_CASE("conservation holds at every expanded node") {
  for (const Rat& p : {rat(1, 2), Rat(2)}) {
    auto tm = TreeMeasure::build(thirds(), p);
    // stir the tree
    tm->measure_of(IntervalR::closed(rat(1, 10), rat(9, 10)), pow2(-30));
    tm->measure_of(IntervalR::closed(Rat(0), rat(1, 5)), pow2(-35));
    tm->ratio_report(5);
    auto cons = tm->conservation();
    CHECK(cons.nodes_checked > 0);
    CHECK(cons.max_rel_residual <= pow2(-60));
  }
}

TEST_CASE("additivity across disjoint intervals") {
  auto tm = TreeMeasure::build(thirds(), Rat(2));
  const Rat eps = pow2(-40);
  auto ab = tm->measure_of(IntervalR::closed(rat(1, 10), rat(2, 5)), eps);
  auto bc = tm->measure_of(IntervalR::closed(rat(2, 5), rat(7, 10)), eps);
  auto ac = tm->measure_of(IntervalR::closed(rat(1, 10), rat(7, 10)), eps);
  CHECK(ac.lower <= ab.upper + bc.upper);
  CHECK(ac.upper >= ab.lower + bc.lower);
  CHECK(ac.width() <= eps);
}

TEST_CASE("cdf samples are monotone with pinned ends") {
  auto tm = TreeMeasure::build(thirds(), rat(1, 2));
  std::vector<Rat> grid;
  for (int j = 0; j <= 16; ++j) grid.push_back(rat(j, 16));
  auto rows = tm->cdf_samples(grid, pow2(-30));
  CHECK(rows.front().second.upper == Rat(0));
  CHECK(rows.back().second.lower == Rat(1));
  for (size_t i = 1; i < rows.size(); ++i)
    CHECK(rows[i].second.upper >= rows[i - 1].second.lower);
}

TEST_CASE("gap family of the root matches hand geometry") {
  auto tm = TreeMeasure::build(thirds(), Rat(1));
  auto fam = tm->gaps_of_root(5);
  auto has = [&](const Rat& lo, const Rat& hi) {
    for (const auto& g : fam)
      if (g.gap.lo == lo && g.gap.hi == hi) return true;
    return false;
  };
  // annulus [1/8,1/4] and [1/16,1/8] both select (1/9, 2/9); deduplicated
  CHECK(has(rat(1, 9), rat(2, 9)));
  CHECK(has(rat(1, 3), rat(2, 3)));
  CHECK(has(rat(7, 9), rat(8, 9)));
  size_t count19 = 0;
  for (const auto& g : fam)
    if (g.gap.lo == rat(1, 9)) ++count19;
  CHECK(count19 == 1);
}

TEST_CASE("ratio report is exactly one for p = 1") {
  auto tm = TreeMeasure::build(thirds(), Rat(1));
  auto rep = tm->ratio_report(6);
  CHECK(rep.rows.size() == 63);
  CHECK(rep.min_lower == Rat(1));
  CHECK(rep.max_upper == Rat(1));
}

TEST_CASE("ratio report stays within a bounded band for p = 2") {
  auto tm = TreeMeasure::build(thirds(), Rat(2));
  auto rep = tm->ratio_report(6);
  CHECK(rep.min_lower > 0);
  CHECK(rep.max_upper < Rat(1000));
  // single-node sanity: recompute the root gap ratio directly from masses
  const auto& row = rep.rows.front();
  auto mu_gap = tm->measure_of(row.gap, pow2(-50));
  auto mu_cov = tm->measure_of(row.cover, pow2(-50));
  CHECK(mu_gap.lower >= row.mu_gap.lower - pow2(-40));
  CHECK(mu_gap.upper <= row.mu_gap.upper + pow2(-40));
  CHECK(mu_cov.contains(Rat(1)));
}

TEST_CASE("level gap masses and the mass profile: p = 1 closed form") {
  auto tm = TreeMeasure::build(thirds(), Rat(1));
  auto profile = tm->cantor_mass_profile(7);
  REQUIRE(profile.size() == 7);
  // mu(C_n) = (2/3)^{n-1} for Lebesgue on middle thirds
  for (int n = 1; n <= 7; ++n) {
    Rat expect = rat_pow_int(rat(2, 3), n - 1);
    CHECK(profile[n - 1].contains(expect));
    CHECK(profile[n - 1].width() <= pow2(-60));
  }
}

TEST_CASE("mass profile decreases and stays positive for p = 2") {
  auto tm = TreeMeasure::build(thirds(), Rat(2));
  auto profile = tm->cantor_mass_profile(7);
  for (size_t i = 1; i < profile.size(); ++i)
    CHECK(profile[i].upper <= profile[i - 1].upper + pow2(-50));
  CHECK(profile.back().lower >= 0);
  CHECK(tm->conservation().max_rel_residual <= pow2(-60));
}

TEST_CASE("gamma ledger and center gap counts stay controlled") {
  auto tm = TreeMeasure::build(thirds(), Rat(2));
  tm->ratio_report(6);
  auto ledger = tm->gamma_ledger();
  REQUIRE(ledger.any);
  CHECK(ledger.min_lower > 0);
  CHECK(ledger.max_upper < Rat(100));
  // lemma-of-few-gaps proxy: center families hold O(log 1/eta) gaps
  const double log_inv_eta =
      std::log2(tm->eta().get_den().get_d() / tm->eta().get_num().get_d());
  CHECK(tm->max_center_gap_count() <= static_cast<size_t>(8 * log_inv_eta + 8));
}

TEST_CASE("node budget exhaustion raises a budget error") {
  TreeMeasureOptions opt;
  opt.node_budget = 3;
  auto tm = TreeMeasure::build(thirds(), Rat(1), std::nullopt, opt);
  CHECK_THROWS_AS(tm->measure_of(IntervalR::closed(rat(1, 100), rat(3, 100)), pow2(-60)),
                  BudgetError);
}

TEST_CASE("geometric construction profile for p = 1 equals Lebesgue tails") {
  // alpha_n = 4^{-n}: mu(C_{n+1}) = prod_{k<=n} (1 - 4^{-k}) under Lebesgue
  auto c = middle_interval(AlphaSeq::geometric(rat(1, 4)));
  auto tm = TreeMeasure::build(c, Rat(1));
  auto profile = tm->cantor_mass_profile(5);
  Rat expect(1);
  for (int n = 2; n <= 5; ++n) {
    expect *= Rat(1) - rat_pow_int(rat(1, 4), n - 1);
    CHECK(profile[n - 1].contains(expect));
  }
}
