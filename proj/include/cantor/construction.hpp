#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cantor/alpha_seq.hpp"
#include "cantor/errors.hpp"
#include "cantor/interval.hpp"
#include "cantor/rational.hpp"
#include "cantor/scalar.hpp"

namespace cantor {

// One expansion step: the removed open gap (possibly degenerate) and the
// closed children tiling interval \ gap.
struct NodeExpansion {
  IntervalR gap;
  std::vector<IntervalR> children;
};

struct GapHit {
  IntervalR gap;
  int level = 0;
};

struct PropertyVerdict {
  bool ok = true;
  std::string counterexample;  // empty when ok
};

struct LevelStat {
  int level = 0;
  size_t count = 0;
  Rat max_length;
};

struct ExpandReport {
  std::vector<LevelStat> levels;
  bool max_lengths_nonincreasing = true;
};

// A Cantor construction: an immutable expansion rule plus a lazily
// materialized, internally synchronized node cache. Expansion is idempotent,
// so concurrent expand/check calls are safe.
class Construction {
 public:
  using Generator = std::function<NodeExpansion(const IntervalR&, int)>;
  // Certified upper bound on the length of any gap inside a level-`level`
  // node of the given length (descendants included). Used to prune gap
  // searches; the trivial bound is the node length itself.
  using GapBound = std::function<Rat(int level, const Rat& length)>;

  struct Node {
    IntervalR iv;
    int level = 1;
    IntervalR gap;
    std::vector<std::unique_ptr<Node>> kids;
    bool expanded = false;
  };

  Construction(std::vector<IntervalR> roots, Generator gen, std::string description,
               GapBound gap_bound = nullptr)
      : gen_(std::move(gen)), description_(std::move(description)),
        gap_bound_(std::move(gap_bound)) {
    if (roots.empty()) throw ArgumentError("construction needs at least one root");
    std::sort(roots.begin(), roots.end(),
              [](const IntervalR& a, const IntervalR& b) { return a.lo < b.lo; });
    for (auto& r : roots) {
      auto n = std::make_unique<Node>();
      n->iv = r;
      n->level = 1;
      roots_.push_back(std::move(n));
    }
  }

  const std::string& description() const { return description_; }

  Rat hull_lo() const { return roots_.front()->iv.lo; }
  Rat hull_hi() const { return roots_.back()->iv.hi; }

  bool hull_connected() const {
    for (size_t i = 0; i + 1 < roots_.size(); ++i)
      if (roots_[i]->iv.hi != roots_[i + 1]->iv.lo) return false;
    return true;
  }

  size_t root_count() const { return roots_.size(); }

  // Materializes all nodes of level <= depth, validating invariants.
  void materialize(int depth) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    for (auto& r : roots_) materialize_rec(*r, depth);
  }

  ExpandReport expand_report(int depth) const {
    if (depth < 1) throw ArgumentError("depth must be >= 1");
    std::lock_guard<std::recursive_mutex> lk(mu_);
    materialize(depth);
    ExpandReport rep;
    rep.levels.resize(depth);
    for (int l = 0; l < depth; ++l) rep.levels[l].level = l + 1;
    visit(depth, [&](const Node& n) {
      auto& st = rep.levels[n.level - 1];
      st.count++;
      if (n.iv.length() > st.max_length) st.max_length = n.iv.length();
    });
    for (int l = 1; l < depth; ++l)
      if (rep.levels[l].max_length > rep.levels[l - 1].max_length)
        rep.max_lengths_nonincreasing = false;
    return rep;
  }

  // Pre-order visit of materialized-or-materializable nodes to level <= depth.
  template <class F>
  void visit(int depth, F&& fn) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    for (auto& r : roots_) visit_rec(*r, depth, fn);
  }

  template <class F>
  void for_each_gap(int depth, F&& fn) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    for (auto& r : roots_) gap_walk(*r, depth, fn);
  }

  // Deepest covering node whose closed interval contains [lo, hi], starting
  // from `from` (or the containing root when null). Gaps of its ancestors are
  // disjoint from its interior, so searches restricted to [lo, hi] may start
  // here.
  const Node* anchor_for(const Node* from, const Rat& lo, const Rat& hi) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    const Node* cur = from;
    if (!cur) {
      for (auto& r : roots_)
        if (r->iv.lo <= lo && hi <= r->iv.hi) { cur = r.get(); break; }
      if (!cur) return nullptr;
    }
    for (;;) {
      ensure_children(*const_cast<Node*>(cur));
      const Node* next = nullptr;
      for (auto& k : cur->kids)
        if (!k->iv.degenerate() && k->iv.lo <= lo && hi <= k->iv.hi) { next = k.get(); break; }
      if (!next) return cur;
      cur = next;
    }
  }

  // Visits every node whose closed interval contains x, level by level.
  // fn returns false to stop descending below that node.
  template <class F>
  void visit_containing(const Rat& x, int max_level, F&& fn,
                        const Node* anchor = nullptr) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    std::vector<Node*> frontier;
    if (anchor) {
      if (anchor->iv.contains(x)) frontier.push_back(const_cast<Node*>(anchor));
    } else {
      for (auto& r : roots_)
        if (r->iv.contains(x)) frontier.push_back(r.get());
    }
    while (!frontier.empty()) {
      std::vector<Node*> next;
      for (Node* n : frontier) {
        ensure_children(*n);  // a node's gap is produced by its expansion
        const bool descend = fn(static_cast<const Node&>(*n));
        if (!descend || n->level >= max_level) continue;
        for (auto& k : n->kids)
          if (!k->iv.degenerate() && k->iv.contains(x)) next.push_back(k.get());
      }
      frontier = std::move(next);
    }
  }

  // Largest construction gap with positive-length overlap with [alo, ahi];
  // ties resolved leftmost. Searches lazily, expanding only covering nodes
  // that could still hide a better gap.
  std::optional<GapHit> largest_gap_overlapping(const Rat& alo, const Rat& ahi,
                                                size_t budget,
                                                const Node* anchor = nullptr) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    std::vector<Node*> frontier;
    if (anchor) {
      if (anchor->iv.overlaps_open(alo, ahi)) frontier.push_back(const_cast<Node*>(anchor));
    } else {
      for (auto& r : roots_)
        if (r->iv.overlaps_open(alo, ahi)) frontier.push_back(r.get());
    }
    std::optional<GapHit> best;
    size_t spent = 0;
    auto better = [&](const IntervalR& g) {
      if (!best) return true;
      if (g.length() != best->gap.length()) return g.length() > best->gap.length();
      return g.lo < best->gap.lo;
    };
    auto node_bound = [&](const Node* n) {
      Rat b = n->iv.length();
      if (gap_bound_) b = rat_min(b, gap_bound_(n->level, n->iv.length()));
      return b;
    };
    auto could_beat = [&](const Node* n) {
      if (!best) return true;
      const Rat b = node_bound(n);
      if (b > best->gap.length()) return true;
      if (b == best->gap.length() && n->iv.lo < best->gap.lo) return true;
      return false;
    };
    while (!frontier.empty()) {
      // Pick the frontier node with the largest interval (tie: leftmost).
      size_t pick = 0;
      for (size_t i = 1; i < frontier.size(); ++i) {
        const auto& a = frontier[i]->iv;
        const auto& b = frontier[pick]->iv;
        if (a.length() > b.length() || (a.length() == b.length() && a.lo < b.lo)) pick = i;
      }
      Node* n = frontier[pick];
      frontier.erase(frontier.begin() + pick);
      if (!could_beat(n)) {
        // Nothing left can improve: frontier is processed best-first.
        bool any = false;
        for (Node* m : frontier)
          if (could_beat(m)) { any = true; break; }
        if (!any) break;
        continue;
      }
      if (++spent > budget) throw BudgetError("gap search budget exhausted");
      ensure_children(*n);
      if (!n->gap.degenerate() && n->gap.overlaps_open(alo, ahi) && better(n->gap))
        best = GapHit{n->gap, n->level};
      for (auto& k : n->kids)
        if (!k->iv.degenerate() && k->iv.overlaps_open(alo, ahi)) frontier.push_back(k.get());
    }
    return best;
  }

  struct Locate {
    enum class Kind { InGap, CPoint, CApprox, Outside } kind;
    std::optional<GapHit> gap;  // InGap
    Rat cover_len;              // CApprox: length of deepest certified cover
    int depth = 0;
  };

  // Classifies a point against the construction: inside a removed gap,
  // provably in C (persistent covering endpoint), or in C up to a nested
  // cover of the reported length.
  Locate locate(const Rat& x, int max_depth) const {
    std::lock_guard<std::recursive_mutex> lk(mu_);
    if (x < hull_lo() || x > hull_hi()) return {Locate::Kind::Outside, std::nullopt, Rat(0), 0};
    if (hull_connected() == false) {
      bool inside = false;
      for (auto& r : roots_)
        if (r->iv.contains(x)) inside = true;
      if (!inside) return {Locate::Kind::Outside, std::nullopt, Rat(0), 0};
    }
    Locate out{Locate::Kind::CApprox, std::nullopt, hull_hi() - hull_lo(), 0};
    bool done = false;
    visit_containing(x, max_depth, [&](const Node& n) {
      if (done) return false;
      if (x == n.iv.lo || x == n.iv.hi) {
        out = {Locate::Kind::CPoint, std::nullopt, Rat(0), n.level};
        done = true;
        return false;
      }
      if (!n.gap.degenerate() && n.gap.contains(x)) {
        out = {Locate::Kind::InGap, GapHit{n.gap, n.level}, Rat(0), n.level};
        done = true;
        return false;
      }
      if (n.iv.length() < out.cover_len) {
        out.cover_len = n.iv.length();
        out.depth = n.level;
      }
      return true;
    });
    return out;
  }

  // Does any gap of level <= max_level overlap the open interval (x, y)?
  bool any_gap_overlapping(const Rat& x, const Rat& y, int max_level,
                           const Node* anchor = nullptr) const {
    if (!(x < y)) return false;
    std::lock_guard<std::recursive_mutex> lk(mu_);
    std::vector<Node*> frontier;
    if (anchor && anchor->level <= max_level) {
      if (anchor->iv.overlaps_open(x, y)) frontier.push_back(const_cast<Node*>(anchor));
    } else if (!anchor) {
      for (auto& r : roots_)
        if (r->iv.overlaps_open(x, y)) frontier.push_back(r.get());
    }
    while (!frontier.empty()) {
      Node* n = frontier.back();
      frontier.pop_back();
      ensure_children(*n);
      if (!n->gap.degenerate() && n->gap.overlaps_open(x, y)) return true;
      if (n->level < max_level)
        for (auto& k : n->kids)
          if (!k->iv.degenerate() && k->iv.overlaps_open(x, y)) frontier.push_back(k.get());
    }
    return false;
  }

  // --- structural checks -----------------------------------------------

  // Smallest admissible niceness constant over materialized nodes: the sup of
  // 2 dist(center I, closure J)/|I|. A value < 1 certifies niceness at this
  // depth. Degenerate bookkeeping nodes are skipped; a degenerate gap on a
  // real interval makes the notion inapplicable.
  Scalar check_nice(int depth) const {
    materialize(depth);
    Rat sup(0);
    visit(depth, [&](const Node& n) {
      if (n.iv.degenerate()) return;
      if (n.gap.degenerate())
        throw NotApplicableError("degenerate gap at level " + std::to_string(n.level) +
                                 " node " + n.iv.str());
      const Rat c = n.iv.mid();
      Rat d(0);
      if (c < n.gap.lo) d = n.gap.lo - c;
      else if (c > n.gap.hi) d = c - n.gap.hi;
      const Rat v = 2 * d / n.iv.length();
      if (v > sup) sup = v;
    });
    return Scalar::exact(sup);
  }

  PropertyVerdict check_porous(const AlphaSeq& seq, int depth) const {
    return check_ratio(seq, depth, /*porous=*/true);
  }
  PropertyVerdict check_thick(const AlphaSeq& seq, int depth) const {
    return check_ratio(seq, depth, /*porous=*/false);
  }

  // (lambda, Lambda): extremes of |J| / (alpha_n |I|) over real nodes.
  std::pair<Rat, Rat> check_regular(const AlphaSeq& seq, int depth) const {
    materialize(depth);
    bool first = true;
    Rat lam(0), Lam(0);
    visit(depth, [&](const Node& n) {
      if (n.iv.degenerate()) return;
      const Rat denom = seq.at(n.level) * n.iv.length();
      const Rat r = n.gap.length() / denom;
      if (first) {
        lam = Lam = r;
        first = false;
      } else {
        if (r < lam) lam = r;
        if (r > Lam) Lam = r;
      }
    });
    if (first) throw NotApplicableError("no nodes materialized");
    return {lam, Lam};
  }

  // Strict smallness: |J| < (1-c)/3 |I| at every real node.
  PropertyVerdict check_small_gaps(const Rat& c_nice, int depth) const {
    materialize(depth);
    PropertyVerdict v;
    visit(depth, [&](const Node& n) {
      if (!v.ok || n.iv.degenerate()) return;
      if (!(n.gap.length() < (Rat(1) - c_nice) / 3 * n.iv.length())) {
        v.ok = false;
        v.counterexample = "level " + std::to_string(n.level) + " node " + n.iv.str() +
                           " gap " + n.gap.str();
      }
    });
    return v;
  }

  // min over adjacent nondegenerate gap pairs of |K| / min(|J|, |J'|).
  Rat gap_separation(int depth) const {
    materialize(depth);
    std::vector<IntervalR> gaps;
    for_each_gap(depth, [&](const IntervalR& g, int) { gaps.push_back(g); });
    if (gaps.size() < 2) throw NotApplicableError("fewer than two gaps materialized");
    std::sort(gaps.begin(), gaps.end(),
              [](const IntervalR& a, const IntervalR& b) { return a.lo < b.lo; });
    bool first = true;
    Rat best(0);
    for (size_t i = 0; i + 1 < gaps.size(); ++i) {
      const Rat k = gaps[i + 1].lo - gaps[i].hi;
      const Rat r = k / rat_min(gaps[i].length(), gaps[i + 1].length());
      if (first || r < best) {
        best = r;
        first = false;
      }
    }
    return best;
  }

 private:
  PropertyVerdict check_ratio(const AlphaSeq& seq, int depth, bool porous) const {
    materialize(depth);
    PropertyVerdict v;
    visit(depth, [&](const Node& n) {
      if (!v.ok) return;
      const Rat lhs = n.gap.length();
      const Rat rhs = seq.at(n.level) * n.iv.length();
      const bool ok = porous ? lhs >= rhs : lhs <= rhs;
      if (!ok) {
        v.ok = false;
        v.counterexample = "level " + std::to_string(n.level) + " node " + n.iv.str() +
                           " gap " + n.gap.str() + " vs alpha_n |I| = " + rat_str(rhs);
      }
    });
    return v;
  }

  template <class F>
  void gap_walk(Node& n, int depth, F& fn) const {
    if (n.level > depth) return;
    ensure_children(n);
    if (!n.gap.degenerate()) fn(static_cast<const IntervalR&>(n.gap), n.level);
    if (n.level < depth)
      for (auto& k : n.kids) gap_walk(*k, depth, fn);
  }

  template <class F>
  void visit_rec(Node& n, int depth, F& fn) const {
    if (n.level > depth) return;
    ensure_children(n);
    fn(static_cast<const Node&>(n));
    if (n.level < depth)
      for (auto& k : n.kids) visit_rec(*k, depth, fn);
  }

  void materialize_rec(Node& n, int depth) const {
    if (n.level >= depth) return;
    ensure_children(n);
    for (auto& k : n.kids) materialize_rec(*k, depth);
  }

  void ensure_children(Node& n) const {
    if (n.expanded) return;
    NodeExpansion e;
    if (n.iv.degenerate()) {
      // Bookkeeping point: persists with an empty hole.
      e.gap = IntervalR::point(n.iv.lo);
      e.children = {n.iv};
    } else {
      e = gen_(n.iv, n.level);
    }
    validate_expansion(n, e);
    n.gap = e.gap;
    for (auto& c : e.children) {
      auto k = std::make_unique<Node>();
      k->iv = c;
      k->level = n.level + 1;
      n.kids.push_back(std::move(k));
    }
    n.expanded = true;
  }

  void validate_expansion(const Node& n, const NodeExpansion& e) const {
    auto fail = [&](const std::string& why) {
      throw InvariantError("structural invariant violated at level " +
                           std::to_string(n.level) + " node " + n.iv.str() + ": " + why);
    };
    if (e.gap.lo < n.iv.lo || e.gap.hi > n.iv.hi) fail("gap " + e.gap.str() + " escapes node");
    // children + gap must tile the node exactly
    std::vector<IntervalR> pieces = e.children;
    if (!e.gap.degenerate()) pieces.push_back(e.gap);
    std::sort(pieces.begin(), pieces.end(),
              [](const IntervalR& a, const IntervalR& b) {
                return a.lo != b.lo ? a.lo < b.lo : a.hi < b.hi;
              });
    if (pieces.empty()) fail("no children");
    if (pieces.front().lo != n.iv.lo) fail("tiling does not start at node.lo");
    for (size_t i = 0; i + 1 < pieces.size(); ++i)
      if (pieces[i].hi != pieces[i + 1].lo)
        fail("pieces " + pieces[i].str() + " and " + pieces[i + 1].str() + " do not abut");
    if (pieces.back().hi != n.iv.hi) fail("tiling does not end at node.hi");
    if (!e.gap.degenerate()) {
      for (const auto& c : e.children)
        if (c.length() >= n.iv.length()) fail("child not shorter than parent");
      for (const auto& c : e.children)
        if (c.overlaps_open(e.gap.lo, e.gap.hi)) fail("child overlaps gap");
    }
  }

  std::vector<std::unique_ptr<Node>> roots_;
  Generator gen_;
  std::string description_;
  GapBound gap_bound_;
  mutable std::recursive_mutex mu_;
};

// Middle-interval construction: root [0,1]; a level-k node [a,b] loses a
// centered open interval of length alpha_k (b-a) and splits into two equal
// closed halves.
inline std::shared_ptr<Construction> middle_interval(const AlphaSeq& seq) {
  auto gen = [seq](const IntervalR& iv, int level) {
    const Rat a = seq.at(level);
    const Rat g = a * iv.length();
    const Rat c = iv.mid();
    NodeExpansion e;
    e.gap = IntervalR::open(c - g / 2, c + g / 2);
    e.children = {IntervalR::closed(iv.lo, e.gap.lo), IntervalR::closed(e.gap.hi, iv.hi)};
    return e;
  };
  Construction::GapBound bound = nullptr;
  if (seq.tail_sup_bound(1)) {
    bound = [seq](int level, const Rat& len) -> Rat {
      auto sup = seq.tail_sup_bound(level);
      return sup ? Rat(*sup * len) : len;
    };
  }
  return std::make_shared<Construction>(
      std::vector<IntervalR>{IntervalR::closed(Rat(0), Rat(1))}, gen,
      "middle_interval(" + seq.tag() + ")", std::move(bound));
}

}  // namespace cantor
