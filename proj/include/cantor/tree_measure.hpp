#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cantor/construction.hpp"
#include "cantor/errors.hpp"
#include "cantor/interval.hpp"
#include "cantor/measure.hpp"
#include "cantor/power_measure.hpp"
#include "cantor/rational.hpp"
#include "cantor/scalar.hpp"

namespace cantor {

// Budget error that still carries the bounds accumulated so far.
struct MeasureBudgetError : BudgetError {
  MassBounds partial;
  MeasureBudgetError(const std::string& msg, MassBounds p)
      : BudgetError(msg), partial(std::move(p)) {}
};

// Expansion and search budgets for the measure tree.
struct TreeMeasureOptions {
  int nice_probe_depth = 8;
  size_t search_budget = 1u << 18;
  size_t node_budget = 1u << 22;
  int max_chain_steps = 1 << 12;
  int max_walk_level = 1 << 16;
};

// The mass-distribution doubling measure on a nice Cantor construction:
// mu(J)/mu(I) is comparable to (|J|/|I|)^p across all covering pairs. The
// measure tree is a lazily expanded, internally synchronized cache; queries
// return certified enclosures.
class TreeMeasure {
 public:
  struct GammaLedger {
    bool any = false;
    Rat min_lower, max_upper;
    size_t count = 0;
  };

  struct ConservationStats {
    Rat max_rel_residual{0};
    size_t nodes_checked = 0;
  };

  struct GapInfo {
    IntervalR gap;
    int level = 0;
    std::string source;
  };

  struct RatioRow {
    int level = 0;
    IntervalR cover, gap;
    MassBounds mu_cover, mu_gap;
    Rat ratio_lower, ratio_upper;  // [mu(J)/mu(I)] / (|J|/|I|)^p
  };

  struct RatioReport {
    std::vector<RatioRow> rows;
    Rat min_lower, max_upper;  // extremes over rows
  };

  static std::shared_ptr<TreeMeasure> build(std::shared_ptr<Construction> c, const Rat& p,
                                            std::optional<Rat> eta = std::nullopt,
                                            TreeMeasureOptions opt = {}) {
    if (p <= 0) throw ArgumentError("measure exponent p must be positive");
    if (!c->hull_connected())
      throw PreconditionError("construction roots must tile an interval");
    // niceness certificate at probing depth; degenerate gaps surface here
    Scalar nice = c->check_nice(opt.nice_probe_depth);
    if (!(nice.exact_value() < 1))
      throw PreconditionError("construction is not nice at probing depth (c = " +
                              rat_str(nice.exact_value()) + ")");
    Rat eta_v;
    if (eta) {
      eta_v = *eta;
      if (!(eta_v > 0 && 2 * eta_v <= 1))
        throw PreconditionError("eta must lie in (0, 1/2]");
      auto ok = Scalar::certify_lt(Scalar::pow(eta_v, p), Scalar::exact(rat(1, 4)));
      if (!ok.value_or(false)) throw PreconditionError("eta^p < 1/4 not certified");
    } else {
      // rational lower bound of (1/2) 4^{-1/p}; any smaller eta still has
      // eta^p < (1/4) 2^{-p} < 1/4
      Scalar target = Scalar::exact(rat(1, 2)) * Scalar::pow(rat(1, 4), Rat(1) / p);
      eta_v = target.lower();
      if (eta_v <= 0) throw InvariantError("default eta underflow");
    }
    return std::shared_ptr<TreeMeasure>(new TreeMeasure(std::move(c), p, eta_v, opt));
  }

  const Rat& p() const { return p_; }
  const Rat& eta() const { return eta_; }
  const std::shared_ptr<Construction>& construction() const { return c_; }
  static std::string selection_policy() { return "largest gap overlapping annulus, tie leftmost"; }

  GammaLedger gamma_ledger() const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    return gamma_;
  }
  ConservationStats conservation() const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    return conservation_;
  }
  size_t max_center_gap_count() const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    return max_center_gaps_;
  }

  // Certified mass of a subinterval of the hull.
  MassBounds measure_of(const IntervalR& query, const Rat& eps) const {
    if (eps <= 0) throw ArgumentError("eps must be positive");
    std::lock_guard<std::recursive_mutex> lk(mu_);
    const Rat x = rat_max(query.lo, root_->lo);
    const Rat y = rat_min(query.hi, root_->hi);
    if (x >= y) return MassBounds::point(Rat(0));
    MassBounds acc;
    eval_in(*root_, x, y, eps, acc);
    return acc;
  }

  std::vector<std::pair<Rat, MassBounds>> cdf_samples(const std::vector<Rat>& grid,
                                                      const Rat& eps) const {
    std::vector<std::pair<Rat, MassBounds>> out;
    out.reserve(grid.size());
    for (const Rat& t : grid)
      out.emplace_back(t, measure_of(IntervalR::closed(c_->hull_lo(), rat_max(t, c_->hull_lo())),
                                     eps));
    return out;
  }

  // Per covering node (I, J): certified [mu(J)/mu(I)] / (|J|/|I|)^p.
  RatioReport ratio_report(int depth) const {
    // lock order is TreeMeasure, then Construction
    std::lock_guard<std::recursive_mutex> lk(mu_);
    RatioReport rep;
    bool first = true;
    c_->visit(depth, [&](const Construction::Node& n) {
      if (n.iv.degenerate() || n.gap.degenerate()) return;
      RatioRow row;
      row.level = n.level;
      row.cover = n.iv;
      row.gap = n.gap;
      row.mu_cover = adaptive_mass(n.iv);
      row.mu_gap = adaptive_mass(n.gap);
      Scalar geom = Scalar::pow(n.gap.length() / n.iv.length(), p_);
      row.ratio_lower = row.mu_gap.lower / row.mu_cover.upper / geom.upper();
      row.ratio_upper = row.mu_gap.upper / row.mu_cover.lower / geom.lower();
      if (first || row.ratio_lower < rep.min_lower) rep.min_lower = row.ratio_lower;
      if (first || row.ratio_upper > rep.max_upper) rep.max_upper = row.ratio_upper;
      first = false;
      rep.rows.push_back(std::move(row));
    });
    if (first) throw NotApplicableError("no covering nodes with gaps to report");
    return rep;
  }

  // Total measure removed by the level-n gaps, n = 1..max_level, computed by
  // a streaming depth-first sweep that frees measure nodes as it ascends.
  std::vector<MassBounds> level_gap_masses(int max_level) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    std::vector<MassBounds> tally(static_cast<size_t>(max_level) + 1);
    CNode local;
    local.lo = root_->lo;
    local.hi = root_->hi;
    local.mass = root_->mass;
    profile_dfs(local, max_level, tally);
    tally.erase(tally.begin());  // 1-based levels
    return tally;
  }

  // mu(C_n) for n = 1..levels, where C_n is the union of level-n coverings.
  std::vector<MassBounds> cantor_mass_profile(int levels) const {
    auto tally = level_gap_masses(levels - 1 >= 1 ? levels - 1 : 1);
    std::vector<MassBounds> out;
    Rat lo(1), hi(1);
    out.push_back(MassBounds(lo, hi));
    for (int n = 1; n < levels; ++n) {
      lo -= tally[n - 1].upper;
      hi -= tally[n - 1].lower;
      out.push_back(MassBounds(rat_max(lo, Rat(0)), hi));
    }
    return out;
  }

  // The enumerated gap family of the root to the given annulus budget
  // (boundary gaps discovered down to matching covering scale).
  std::vector<GapInfo> gaps_of_root(int annulus_budget) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    std::vector<GapInfo> out;
    auto add = [&](const GapHit& h, const std::string& src) {
      for (auto& g : out)
        if (g.gap == h.gap) return;  // deduplicated
      out.push_back({h.gap, h.level, src});
    };
    const Rat L = root_->hi - root_->lo;
    for (int k = 2; k <= annulus_budget; ++k) {
      add(annulus_pick(*root_, /*left=*/true, k), "annulus left k=" + std::to_string(k));
      add(annulus_pick(*root_, /*left=*/false, k), "annulus right k=" + std::to_string(k));
    }
    const Rat floor_len = pow2(-annulus_budget) * L;
    boundary_walk(*root_, /*left=*/true, floor_len, [&](const GapHit& h) {
      add(h, "boundary left");
    });
    boundary_walk(*root_, /*left=*/false, floor_len, [&](const GapHit& h) {
      add(h, "boundary right");
    });
    std::sort(out.begin(), out.end(),
              [](const GapInfo& a, const GapInfo& b) { return a.gap.lo < b.gap.lo; });
    return out;
  }

  // Test/report hook: walk the cached cells of the root node.
  struct CellView {
    enum class Type { Gap, Child, LeftTail, RightTail } type;
    Rat lo, hi;
    MassBounds mass;
    int gap_level = 0;
  };
  std::vector<CellView> root_cells() const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    ensure_expanded(*root_);
    std::vector<CellView> out;
    for (const auto& c : root_->cells) {
      CellView v;
      v.type = static_cast<CellView::Type>(static_cast<int>(c.type));
      v.lo = c.lo;
      v.hi = c.hi;
      v.mass = MassBounds::from_scalar(c.mass);
      v.gap_level = c.gap_level;
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  struct CNode;

  struct Cell {
    enum class Type { Gap, Child, LeftTail, RightTail } type;
    Rat lo, hi;
    Scalar mass;
    int gap_level = 0;
    int chain_step = 0;
    std::unique_ptr<CNode> child;
    std::shared_ptr<ScaledPowerMeasure> interior;
  };

  struct CNode {
    Rat lo, hi;
    Scalar mass;
    bool expanded = false;
    const Construction::Node* anchor = nullptr;
    std::vector<Cell> cells;
    std::map<std::pair<bool, int>, GapHit> annulus_memo;
  };

  void ensure_anchor(CNode& n) const {
    if (!n.anchor && n.lo < n.hi) n.anchor = c_->anchor_for(nullptr, n.lo, n.hi);
  }

  TreeMeasure(std::shared_ptr<Construction> c, Rat p, Rat eta, TreeMeasureOptions opt)
      : c_(std::move(c)), p_(std::move(p)), eta_(std::move(eta)), opt_(opt),
        pm_(PowerMeasure::make(p_)) {
    root_ = std::make_unique<CNode>();
    root_->lo = c_->hull_lo();
    root_->hi = c_->hull_hi();
    root_->mass = Scalar::exact(Rat(1));
  }

  // ---- gap family machinery -------------------------------------------

  GapHit annulus_pick(CNode& n, bool left, int k) const {
    auto it = n.annulus_memo.find({left, k});
    if (it != n.annulus_memo.end()) return it->second;
    const Rat L = n.hi - n.lo;
    Rat alo, ahi;
    if (left) {
      alo = n.lo + pow2(-k) * L;
      ahi = n.lo + pow2(-k + 1) * L;
    } else {
      alo = n.hi - pow2(-k + 1) * L;
      ahi = n.hi - pow2(-k) * L;
    }
    ensure_anchor(n);
    std::optional<GapHit> hit;
    size_t budget = opt_.search_budget;
    for (int attempt = 0; attempt < 3; ++attempt) {
      try {
        hit = c_->largest_gap_overlapping(alo, ahi, budget, n.anchor);
        break;
      } catch (const BudgetError&) {
        if (attempt == 2) throw;
        budget *= 4;
      }
    }
    if (!hit)
      throw InvariantError("no construction gap meets annulus [" + rat_str(alo) + ", " +
                           rat_str(ahi) + "]");
    n.annulus_memo.emplace(std::make_pair(left, k), *hit);
    return *hit;
  }

  // Visit the gaps of covering nodes that contain the chosen endpoint of n,
  // descending while the covering interval is longer than stop_len.
  template <class F>
  void boundary_walk(CNode& n, bool left, const Rat& stop_len, F&& fn) const {
    ensure_anchor(n);
    const Rat x = left ? n.lo : n.hi;
    c_->visit_containing(x, opt_.max_walk_level, [&](const Construction::Node& nd) {
      if (!nd.gap.degenerate()) fn(GapHit{nd.gap, nd.level});
      return nd.iv.length() > stop_len;
    }, n.anchor);
  }

  // Rightmost family gap g with g inside [n.lo, region_hi] and
  // g.lo - n.lo < theta. include_far_side enables the opposite-side annulus
  // scan (needed only when the region is the whole node).
  GapHit rightmost_low_gap(CNode& n, const Rat& region_hi, const Rat& theta,
                              bool include_far_side) const {
    const Rat a = n.lo;
    const Rat L = n.hi - n.lo;
    std::optional<GapHit> best;
    auto consider = [&](const IntervalR& g, int lvl) {
      if (g.degenerate()) return;
      if (g.lo < a || g.hi > region_hi) return;
      if (!(g.lo - a < theta)) return;
      if (!best || g.lo > best->gap.lo) best = GapHit{g, lvl};
    };
    // boundary walk at a with a dynamic stop
    ensure_anchor(n);
    c_->visit_containing(a, opt_.max_walk_level, [&](const Construction::Node& nd) {
      if (!nd.gap.degenerate()) consider(nd.gap, nd.level);
      if (!best) return true;
      return nd.iv.length() > best->gap.hi - a;
    }, n.anchor);
    if (!best)
      throw InvariantError("no family gap within threshold near " + rat_str(a));
    // left annulus scan, stopping when annuli sit inside [a, best.hi]
    for (int k = 2;; ++k) {
      if (best && pow2(-k + 1) * L <= best->gap.hi - a) break;
      if (k > opt_.max_walk_level) throw BudgetError("annulus scan exhausted");
      GapHit h = annulus_pick(n, /*left=*/true, k);
      consider(h.gap, h.level);
    }
    if (include_far_side) {
      // only a gap chosen for a shallow far-side annulus can reach this side
      for (int k = 2;; ++k) {
        if (pow2(-k + 1) <= eta_) break;
        GapHit h = annulus_pick(n, /*left=*/false, k);
        consider(h.gap, h.level);
      }
      boundary_walk(n, /*left=*/false, L - theta, [&](const GapHit& h) {
        consider(h.gap, h.level);
      });
    }
    return *best;
  }

  // Mirror image: leftmost family gap with g inside [region_lo, n.hi] and
  // n.hi - g.hi < theta.
  GapHit leftmost_high_gap(CNode& n, const Rat& region_lo, const Rat& theta,
                              bool include_far_side) const {
    const Rat b = n.hi;
    const Rat L = n.hi - n.lo;
    std::optional<GapHit> best;
    auto consider = [&](const IntervalR& g, int lvl) {
      if (g.degenerate()) return;
      if (g.lo < region_lo || g.hi > b) return;
      if (!(b - g.hi < theta)) return;
      if (!best || g.hi < best->gap.hi) best = GapHit{g, lvl};
    };
    ensure_anchor(n);
    c_->visit_containing(b, opt_.max_walk_level, [&](const Construction::Node& nd) {
      if (!nd.gap.degenerate()) consider(nd.gap, nd.level);
      if (!best) return true;
      return nd.iv.length() > b - best->gap.lo;
    }, n.anchor);
    if (!best)
      throw InvariantError("no family gap within threshold near " + rat_str(b));
    for (int k = 2;; ++k) {
      if (best && pow2(-k + 1) * L <= b - best->gap.lo) break;
      if (k > opt_.max_walk_level) throw BudgetError("annulus scan exhausted");
      GapHit h = annulus_pick(n, /*left=*/false, k);
      consider(h.gap, h.level);
    }
    if (include_far_side) {
      for (int k = 2;; ++k) {
        if (pow2(-k + 1) <= eta_) break;
        GapHit h = annulus_pick(n, /*left=*/true, k);
        consider(h.gap, h.level);
      }
      boundary_walk(n, /*left=*/true, L - theta, [&](const GapHit& h) {
        consider(h.gap, h.level);
      });
    }
    return *best;
  }

  // Every family gap contained in [from, to] of node n, sorted by position.
  std::vector<GapHit> family_members_in(CNode& n, const Rat& from, const Rat& to) const {
    const Rat a = n.lo, b = n.hi;
    const Rat L = b - a;
    std::vector<GapHit> hits;
    auto consider = [&](const IntervalR& g, int lvl) {
      if (g.degenerate()) return;
      if (g.lo < from || g.hi > to) return;
      for (const auto& h : hits)
        if (h.gap == g) return;
      hits.push_back({g, lvl});
    };
    const Rat floor_left = from - a;
    const Rat floor_right = b - to;
    boundary_walk(n, /*left=*/true, floor_left, [&](const GapHit& h) {
      consider(h.gap, h.level);
    });
    boundary_walk(n, /*left=*/false, floor_right, [&](const GapHit& h) {
      consider(h.gap, h.level);
    });
    if (floor_left > 0)
      for (int k = 2; pow2(-k + 1) * L > floor_left; ++k)
        { GapHit h = annulus_pick(n, true, k); consider(h.gap, h.level); }
    if (floor_right > 0)
      for (int k = 2; pow2(-k + 1) * L > floor_right; ++k)
        { GapHit h = annulus_pick(n, false, k); consider(h.gap, h.level); }
    std::sort(hits.begin(), hits.end(),
              [](const GapHit& x, const GapHit& y) { return x.gap.lo < y.gap.lo; });
    return hits;
  }

  // ---- mass distribution -----------------------------------------------

  Scalar relative_power(const CNode& n, const Rat& len) const {
    if (len == 0) return Scalar::exact(Rat(0));
    return Scalar::pow(len / (n.hi - n.lo), p_);
  }

  void note_gamma(const Scalar& g) const {
    if (!gamma_.any) {
      gamma_.min_lower = g.lower();
      gamma_.max_upper = g.upper();
      gamma_.any = true;
    } else {
      if (g.lower() < gamma_.min_lower) gamma_.min_lower = g.lower();
      if (g.upper() > gamma_.max_upper) gamma_.max_upper = g.upper();
    }
    gamma_.count++;
  }

  void note_conservation(const CNode& n) const {
    std::vector<Scalar> parts;
    parts.reserve(n.cells.size());
    for (const auto& c : n.cells) parts.push_back(c.mass);
    Scalar residual = Scalar::sum(parts) - n.mass;
    const Rat mag = rat_max(rat_abs(residual.lower()), rat_abs(residual.upper()));
    Rat denom = n.mass.lower() > 0 ? n.mass.lower() : n.mass.upper();
    if (denom <= 0) return;
    const Rat rel = mag / denom;
    if (rel > conservation_.max_rel_residual) conservation_.max_rel_residual = rel;
    conservation_.nodes_checked++;
  }

  Cell make_gap_cell(const GapHit& h, Scalar mass) const {
    Cell c;
    c.type = Cell::Type::Gap;
    c.lo = h.gap.lo;
    c.hi = h.gap.hi;
    c.mass = std::move(mass);
    c.gap_level = h.level;
    return c;
  }

  Cell make_child_cell(const CNode& parent, const Rat& lo, const Rat& hi, Scalar mass) const {
    Cell c;
    c.type = Cell::Type::Child;
    c.lo = lo;
    c.hi = hi;
    c.mass = mass;
    c.child = std::make_unique<CNode>();
    c.child->lo = lo;
    c.child->hi = hi;
    c.child->mass = std::move(mass);
    if (lo < hi) c.child->anchor = c_->anchor_for(parent.anchor, lo, hi);
    return c;
  }

  // Gaps plus the complementary spans of [from, to], given the sorted gaps
  // strictly inside; returns the gamma-family cells (masses unset).
  std::vector<Cell> layout_between(const CNode& parent, const Rat& from, const Rat& to,
                                   const std::vector<GapHit>& mids) const {
    std::vector<Cell> cells;
    Rat cursor = from;
    for (const auto& h : mids) {
      if (h.gap.lo > cursor) {
        Cell c;
        c.type = Cell::Type::Child;
        c.lo = cursor;
        c.hi = h.gap.lo;
        cells.push_back(std::move(c));
      }
      Cell g;
      g.type = Cell::Type::Gap;
      g.lo = h.gap.lo;
      g.hi = h.gap.hi;
      g.gap_level = h.level;
      cells.push_back(std::move(g));
      cursor = h.gap.hi;
    }
    if (to > cursor) {
      Cell c;
      c.type = Cell::Type::Child;
      c.lo = cursor;
      c.hi = to;
      cells.push_back(std::move(c));
    }
    return cells;
  }

  // Assign gamma-normalized masses to the family cells so they sum to the
  // given remainder of node n; ledger the gamma.
  void assign_gamma_masses(CNode& n, std::vector<Cell>& cells, const Scalar& remainder) const {
    std::vector<Scalar> weights;
    weights.reserve(cells.size());
    for (const auto& c : cells) weights.push_back(relative_power(n, c.hi - c.lo));
    Scalar total_weight = Scalar::sum(weights) * n.mass;
    Scalar gamma = remainder / total_weight;
    note_gamma(gamma);
    for (size_t i = 0; i < cells.size(); ++i) {
      Scalar m = gamma * weights[i] * n.mass;
      if (cells[i].type == Cell::Type::Child) {
        Cell full = make_child_cell(n, cells[i].lo, cells[i].hi, m);
        cells[i] = std::move(full);
      } else {
        cells[i].mass = std::move(m);
      }
    }
  }

  void ensure_expanded(CNode& n) const {
    if (n.expanded) return;
    if (++expansions_ > opt_.node_budget)
      throw BudgetError("measure tree node budget exhausted");
    const Rat a = n.lo, b = n.hi;
    const Rat L = b - a;
    if (L == 0) {
      n.expanded = true;
      return;
    }
    ensure_anchor(n);
    const Rat theta = eta_ * L;
    GapHit gl = rightmost_low_gap(n, b, theta, /*include_far_side=*/true);
    GapHit gr = leftmost_high_gap(n, a, theta, /*include_far_side=*/true);
    std::vector<Cell> cells;
    if (gl.gap == gr.gap) {
      // single huge middle gap takes the whole remainder
      Scalar ml = relative_power(n, gl.gap.lo - a) * n.mass;
      Scalar mr = relative_power(n, b - gl.gap.hi) * n.mass;
      if (gl.gap.lo > a) {
        Cell t;
        t.type = Cell::Type::LeftTail;
        t.lo = a;
        t.hi = gl.gap.lo;
        t.mass = ml;
        t.chain_step = 1;
        cells.push_back(std::move(t));
      }
      Cell g = make_gap_cell(gl, n.mass - ml - mr);
      cells.push_back(std::move(g));
      if (gl.gap.hi < b) {
        Cell t;
        t.type = Cell::Type::RightTail;
        t.lo = gl.gap.hi;
        t.hi = b;
        t.mass = mr;
        t.chain_step = 1;
        cells.push_back(std::move(t));
      }
    } else {
      if (!(gl.gap.hi <= gr.gap.lo))
        throw InvariantError("edge gaps out of order at node [" + rat_str(a) + ", " +
                             rat_str(b) + "]");
      Scalar ml = relative_power(n, gl.gap.lo - a) * n.mass;
      Scalar mr = relative_power(n, b - gr.gap.hi) * n.mass;
      auto mids = family_members_in(n, gl.gap.hi, gr.gap.lo);
      if (mids.size() > max_center_gaps_) max_center_gaps_ = mids.size();
      // gamma family: G_l, G_r, the middle gaps, and the complementary spans
      std::vector<Cell> family;
      {
        Cell g = make_gap_cell(gl, Scalar::exact(Rat(0)));
        family.push_back(std::move(g));
      }
      auto middle = layout_between(n, gl.gap.hi, gr.gap.lo, mids);
      for (auto& c : middle) family.push_back(std::move(c));
      {
        Cell g = make_gap_cell(gr, Scalar::exact(Rat(0)));
        family.push_back(std::move(g));
      }
      Scalar remainder = n.mass - ml - mr;
      assign_gamma_masses(n, family, remainder);
      if (gl.gap.lo > a) {
        Cell t;
        t.type = Cell::Type::LeftTail;
        t.lo = a;
        t.hi = gl.gap.lo;
        t.mass = ml;
        t.chain_step = 1;
        cells.push_back(std::move(t));
      }
      for (auto& c : family) cells.push_back(std::move(c));
      if (gr.gap.hi < b) {
        Cell t;
        t.type = Cell::Type::RightTail;
        t.lo = gr.gap.hi;
        t.hi = b;
        t.mass = mr;
        t.chain_step = 1;
        cells.push_back(std::move(t));
      }
    }
    n.cells = std::move(cells);
    n.expanded = true;
    note_conservation(n);
  }

  // One boundary-chain step on the left tail: the tail [a, d] splits into a
  // smaller pinned tail, the chain gap, and a gamma-normalized family.
  void extend_left(CNode& n) const {
    ensure_expanded(n);
    if (n.cells.empty() || n.cells.front().type != Cell::Type::LeftTail)
      throw InvariantError("left chain already exhausted");
    Cell tail = std::move(n.cells.front());
    n.cells.erase(n.cells.begin());
    if (tail.chain_step > opt_.max_chain_steps)
      throw BudgetError("left boundary chain budget exhausted");
    if (++expansions_ > opt_.node_budget)
      throw BudgetError("measure tree node budget exhausted");
    const Rat a = tail.lo, d = tail.hi;
    const Rat theta = eta_ * (d - a);
    GapHit g = rightmost_low_gap(n, d, theta, /*include_far_side=*/false);
    Scalar m_new = relative_power(n, g.gap.lo - a) * n.mass;
    std::vector<Cell> family;
    {
      Cell gc = make_gap_cell(g, Scalar::exact(Rat(0)));
      family.push_back(std::move(gc));
    }
    auto mids = family_members_in(n, g.gap.hi, d);
    if (mids.size() > max_center_gaps_) max_center_gaps_ = mids.size();
    auto middle = layout_between(n, g.gap.hi, d, mids);
    for (auto& c : middle) family.push_back(std::move(c));
    Scalar remainder = tail.mass - m_new;
    assign_gamma_masses(n, family, remainder);
    std::vector<Cell> prefix;
    if (g.gap.lo > a) {
      Cell t;
      t.type = Cell::Type::LeftTail;
      t.lo = a;
      t.hi = g.gap.lo;
      t.mass = m_new;
      t.chain_step = tail.chain_step + 1;
      prefix.push_back(std::move(t));
    }
    for (auto& c : family) prefix.push_back(std::move(c));
    n.cells.insert(n.cells.begin(), std::make_move_iterator(prefix.begin()),
                   std::make_move_iterator(prefix.end()));
    note_conservation(n);
  }

  void extend_right(CNode& n) const {
    ensure_expanded(n);
    if (n.cells.empty() || n.cells.back().type != Cell::Type::RightTail)
      throw InvariantError("right chain already exhausted");
    Cell tail = std::move(n.cells.back());
    n.cells.pop_back();
    if (tail.chain_step > opt_.max_chain_steps)
      throw BudgetError("right boundary chain budget exhausted");
    if (++expansions_ > opt_.node_budget)
      throw BudgetError("measure tree node budget exhausted");
    const Rat d = tail.lo, b = tail.hi;
    const Rat theta = eta_ * (b - d);
    GapHit g = leftmost_high_gap(n, d, theta, /*include_far_side=*/false);
    Scalar m_new = relative_power(n, b - g.gap.hi) * n.mass;
    std::vector<Cell> family;
    auto mids = family_members_in(n, d, g.gap.lo);
    if (mids.size() > max_center_gaps_) max_center_gaps_ = mids.size();
    auto middle = layout_between(n, d, g.gap.lo, mids);
    for (auto& c : middle) family.push_back(std::move(c));
    {
      Cell gc = make_gap_cell(g, Scalar::exact(Rat(0)));
      family.push_back(std::move(gc));
    }
    Scalar remainder = tail.mass - m_new;
    assign_gamma_masses(n, family, remainder);
    for (auto& c : family) n.cells.push_back(std::move(c));
    if (g.gap.hi < b) {
      Cell t;
      t.type = Cell::Type::RightTail;
      t.lo = g.gap.hi;
      t.hi = b;
      t.mass = m_new;
      t.chain_step = tail.chain_step + 1;
      n.cells.push_back(std::move(t));
    }
    note_conservation(n);
  }

  const ScaledPowerMeasure& gap_interior(Cell& c) const {
    if (!c.interior)
      c.interior = std::make_shared<ScaledPowerMeasure>(
          pm_, IntervalR::open(c.lo, c.hi), c.mass);
    return *c.interior;
  }

  // ---- evaluation --------------------------------------------------------

  void eval_in(CNode& n, const Rat& x, const Rat& y, const Rat& eps, MassBounds& acc) const {
    if (x <= n.lo && n.hi <= y) {
      acc += MassBounds::from_scalar(n.mass);
      return;
    }
    ensure_expanded(n);
    const Rat cut = eps / 4;
    // shrink straddled tails until their mass is negligible or they clear
    for (;;) {
      bool again = false;
      if (!n.cells.empty() && n.cells.front().type == Cell::Type::LeftTail) {
        const Cell& t = n.cells.front();
        const bool partial = t.lo < y && x < t.hi && !(x <= t.lo && t.hi <= y);
        if (partial && t.mass.upper() > cut) {
          extend_left(n);
          again = true;
        }
      }
      if (!again && !n.cells.empty() && n.cells.back().type == Cell::Type::RightTail) {
        const Cell& t = n.cells.back();
        const bool partial = t.lo < y && x < t.hi && !(x <= t.lo && t.hi <= y);
        if (partial && t.mass.upper() > cut) {
          extend_right(n);
          again = true;
        }
      }
      if (!again) break;
    }
    for (auto& c : n.cells) {
      if (!(c.lo < y && x < c.hi)) continue;  // no positive-length overlap
      const bool full = x <= c.lo && c.hi <= y;
      if (full) {
        acc += MassBounds::from_scalar(c.mass);
        continue;
      }
      switch (c.type) {
        case Cell::Type::Gap: {
          Scalar part = gap_interior(c).mass(rat_max(x, c.lo), rat_min(y, c.hi), eps / 8);
          acc += MassBounds::from_scalar(part);
          break;
        }
        case Cell::Type::Child: {
          if (c.mass.upper() <= cut) {
            acc += MassBounds(Rat(0), c.mass.upper());
          } else {
            eval_in(*c.child, x, y, eps, acc);
          }
          break;
        }
        case Cell::Type::LeftTail:
        case Cell::Type::RightTail: {
          acc += MassBounds(Rat(0), c.mass.upper());
          break;
        }
      }
    }
  }

  MassBounds adaptive_mass(const IntervalR& q) const {
    Rat eps = pow2(-30);
    for (int round = 0; round < 8; ++round) {
      MassBounds b = measure_of(q, eps);
      if (b.lower > 0) return b;
      eps /= pow2(12);
    }
    throw BudgetError("could not certify a positive mass for " + q.str());
  }

  // Streaming sweep for level profiles: expands a detached node, tallies gap
  // cells by construction level, recurses, and frees children.
  void profile_dfs(CNode& n, int max_level, std::vector<MassBounds>& tally) const {
    ensure_anchor(n);
    if (!c_->any_gap_overlapping(n.lo, n.hi, max_level, n.anchor)) return;
    ensure_expanded(n);
    // resolve tails containing relevant gaps
    for (;;) {
      bool again = false;
      if (!n.cells.empty() && n.cells.front().type == Cell::Type::LeftTail) {
        const Cell& t = n.cells.front();
        if (c_->any_gap_overlapping(t.lo, t.hi, max_level, n.anchor)) {
          extend_left(n);
          again = true;
        }
      }
      if (!again && !n.cells.empty() && n.cells.back().type == Cell::Type::RightTail) {
        const Cell& t = n.cells.back();
        if (c_->any_gap_overlapping(t.lo, t.hi, max_level, n.anchor)) {
          extend_right(n);
          again = true;
        }
      }
      if (!again) break;
    }
    for (auto& c : n.cells) {
      if (c.type == Cell::Type::Gap) {
        if (c.gap_level <= max_level)
          tally[c.gap_level] += MassBounds::from_scalar(c.mass);
      } else if (c.type == Cell::Type::Child) {
        profile_dfs(*c.child, max_level, tally);
        c.child->cells.clear();
        c.child->cells.shrink_to_fit();
        c.child->annulus_memo.clear();
        c.child->expanded = false;
      }
    }
  }

  std::shared_ptr<Construction> c_;
  Rat p_;
  Rat eta_;
  TreeMeasureOptions opt_;
  PowerMeasure pm_;
  mutable std::unique_ptr<CNode> root_;
  mutable std::recursive_mutex mu_;
  mutable GammaLedger gamma_;
  mutable ConservationStats conservation_;
  mutable size_t max_center_gaps_ = 0;
  mutable size_t expansions_ = 0;
};

inline MeasureOracle tree_measure_oracle(std::shared_ptr<const TreeMeasure> tm) {
  IntervalR dom = IntervalR::closed(tm->construction()->hull_lo(),
                                    tm->construction()->hull_hi());
  return MeasureOracle{dom,
                       [tm](const IntervalR& q, const Rat& eps) {
                         return tm->measure_of(q, eps);
                       },
                       "tree_measure(p=" + rat_str(tm->p()) + ")"};
}

}  // namespace cantor
