#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cantor/alpha_seq.hpp"
#include "cantor/construction.hpp"
#include "cantor/errors.hpp"
#include "cantor/interval.hpp"
#include "cantor/rational.hpp"
#include "cantor/scalar.hpp"

namespace cantor {

// Oracle describing a nowhere dense avoidance set E: yields admissible free
// intervals and answers intersection probes.
class AvoidanceOracle {
 public:
  virtual ~AvoidanceOracle() = default;
  // An admissible open G inside `within`, disjoint from E, meeting the middle
  // half of `within`, with |G| <= |within|/2.
  virtual std::optional<IntervalR> free_interval(const IntervalR& within) const = 0;
  // Does E intersect [lo,hi] (open=false) resp. (lo,hi) (open=true)?
  virtual bool meets(const Rat& lo, const Rat& hi, bool open) const = 0;
};

// Finite unions of points and closed intervals. free_interval returns the
// largest open interval inside the middle half of the query minus E,
// tie-break leftmost.
class FiniteUnionAvoider final : public AvoidanceOracle {
 public:
  FiniteUnionAvoider(const std::vector<Rat>& points,
                     const std::vector<std::pair<Rat, Rat>>& intervals) {
    for (const auto& p : points) parts_.emplace_back(p, p);
    for (const auto& iv : intervals) {
      if (iv.first > iv.second) throw ArgumentError("avoidance interval with lo > hi");
      parts_.push_back(iv);
    }
    std::sort(parts_.begin(), parts_.end());
    // merge overlaps
    std::vector<std::pair<Rat, Rat>> merged;
    for (const auto& p : parts_) {
      if (!merged.empty() && p.first <= merged.back().second)
        merged.back().second = rat_max(merged.back().second, p.second);
      else
        merged.push_back(p);
    }
    parts_ = std::move(merged);
  }

  bool meets(const Rat& lo, const Rat& hi, bool open) const override {
    for (const auto& p : parts_) {
      if (open ? (p.first < hi && lo < p.second) || (p.first == p.second && lo < p.first && p.first < hi)
               : (p.first <= hi && lo <= p.second))
        return true;
    }
    return false;
  }

  std::optional<IntervalR> free_interval(const IntervalR& within) const override {
    const Rat len = within.length();
    if (len == 0) return std::nullopt;
    const Rat mlo = within.lo + len / 4;
    const Rat mhi = within.lo + 3 * len / 4;
    // free segments of [mlo, mhi] \ E
    std::vector<std::pair<Rat, Rat>> free;
    Rat cur = mlo;
    for (const auto& p : parts_) {
      if (p.second < cur) continue;
      if (p.first > mhi) break;
      const Rat s = rat_max(p.first, cur);
      if (s > cur) free.emplace_back(cur, s);
      cur = rat_max(cur, p.second);
      if (cur >= mhi) break;
    }
    if (cur < mhi) free.emplace_back(cur, mhi);
    std::optional<std::pair<Rat, Rat>> best;
    for (const auto& f : free) {
      if (f.second <= f.first) continue;
      if (!best || f.second - f.first > best->second - best->first) best = f;
    }
    if (!best) return std::nullopt;
    return IntervalR::open(best->first, best->second);
  }

 private:
  std::vector<std::pair<Rat, Rat>> parts_;
};

struct EmbedBlock {
  int index = 0;        // 1-based
  int first_level = 0;  // alpha indices first_level .. first_level+levels-1
  int levels = 0;       // M_j
  Rat rho_star;         // smallest relative free-interval length of the step
  Rat alpha;            // rho_star / (2 M_j)
  Scalar block_sum;     // M_j * alpha^p
  bool sum_ge_1 = false;
};

struct EmbedCertificate {
  Rat p;
  std::vector<EmbedBlock> blocks;
  Scalar cumulative_sum;
  bool cumulative_ge_blocks = false;
  bool has_degenerate_nodes = false;
  bool gaps_avoid_e = false;
  int total_levels = 0;
  std::string policy = "largest free interval in middle half, tie leftmost";
};

struct EmbedResult {
  std::shared_ptr<Construction> construction;
  AlphaSeq seq;
  EmbedCertificate certificate;
};

namespace detail {

struct EmbedState {
  std::recursive_mutex mu;
  std::shared_ptr<const AvoidanceOracle> oracle;
  Rat p;
  std::vector<Rat> alphas;
  std::vector<EmbedBlock> blocks;
  int levels_planned = 0;  // plans complete for levels 1..levels_planned
  // key: (level, interval lo) -> expansion
  std::map<std::pair<int, Rat>, NodeExpansion> plans;
  // remains awaiting the next block's split, and their pending flank gaps
  struct Pending {
    IntervalR flank;     // the last-level flank node
    IntervalR gap;       // its gap
    IntervalR remain;    // flank minus gap minus point
    Rat point;           // degenerate leftover
    bool point_on_right; // leftover sits right of remain
  };
  std::vector<Pending> pending;        // last-level plans not yet written
  std::vector<IntervalR> frontier;     // intervals the next block carves
  bool has_degenerate = false;
  Rat first_centre;                    // centre of the first chosen interval
};

// Exact integer test of M^{1-p} (rho/2)^p >= 1 for p = e/f in (0,1):
// equivalent to M^{f-e} u^e >= (2v)^e with rho = u/v.
inline bool block_inequality_holds(long M, const Rat& rho, const Rat& p) {
  const unsigned long ei = p.get_num().get_ui();
  const unsigned long fe = mpz_class(p.get_den() - p.get_num()).get_ui();
  mpz_class ue, rhs, mp;
  mpz_pow_ui(ue.get_mpz_t(), rho.get_num().get_mpz_t(), ei);
  mpz_class twov = 2 * rho.get_den();
  mpz_pow_ui(rhs.get_mpz_t(), twov.get_mpz_t(), ei);
  mpz_class mz(M);
  mpz_pow_ui(mp.get_mpz_t(), mz.get_mpz_t(), fe);
  return mp * ue >= rhs;
}

// Smallest integer M >= 1 with M^{1-p} (rho/2)^p >= 1, exactly.
inline long smallest_block_size(const Rat& rho, const Rat& p) {
  const mpz_class e = p.get_num();
  const mpz_class f = p.get_den();
  if (!(e > 0 && e < f)) throw ArgumentError("exponent p must lie in (0,1)");
  const unsigned long ei = e.get_ui();
  const unsigned long fe = mpz_class(f - e).get_ui();
  mpz_class ue, rhs;
  mpz_pow_ui(ue.get_mpz_t(), rho.get_num().get_mpz_t(), ei);
  mpz_class twov = 2 * rho.get_den();
  mpz_pow_ui(rhs.get_mpz_t(), twov.get_mpz_t(), ei);
  mpz_class ratio = rhs / ue;  // floor
  mpz_class est;
  mpz_root(est.get_mpz_t(), ratio.get_mpz_t(), fe);
  long m = std::max(1L, est.get_si() - 2);
  while (!block_inequality_holds(m, rho, p)) ++m;
  while (m > 1 && block_inequality_holds(m - 1, rho, p)) --m;
  return m;
}

inline void embed_materialize_block(EmbedState& st) {
  std::lock_guard<std::recursive_mutex> lk(st.mu);
  const int block_index = static_cast<int>(st.blocks.size()) + 1;
  if (st.frontier.empty()) throw InvariantError("embed frontier empty");

  struct Choice {
    IntervalR F, G;
    Rat a, r;
  };
  std::vector<Choice> choices;
  std::optional<Rat> rho_star;
  for (const auto& F : st.frontier) {
    auto G = st.oracle->free_interval(F);
    if (!G || G->degenerate())
      throw PreconditionError("avoidance oracle yields no admissible interval inside " + F.str());
    if (G->lo < F.lo || G->hi > F.hi)
      throw PreconditionError("oracle interval " + G->str() + " escapes " + F.str());
    if (2 * G->length() > F.length())
      throw PreconditionError("oracle interval longer than half of " + F.str());
    const Rat mlo = F.lo + F.length() / 4, mhi = F.lo + 3 * F.length() / 4;
    if (!(G->lo < mhi && mlo < G->hi))
      throw PreconditionError("oracle interval misses middle half of " + F.str());
    if (st.oracle->meets(G->lo, G->hi, /*open=*/true))
      throw PreconditionError("oracle interval meets E inside " + F.str());
    Choice c{F, *G, G->mid(), G->length()};
    const Rat rho = c.r / F.length();
    if (!rho_star || rho < *rho_star) rho_star = rho;
    choices.push_back(std::move(c));
  }

  const long M = smallest_block_size(*rho_star, st.p);
  const Rat alpha = *rho_star / (2 * M);

  EmbedBlock blk;
  blk.index = block_index;
  blk.first_level = st.levels_planned + 1;
  blk.levels = static_cast<int>(M);
  blk.rho_star = *rho_star;
  blk.alpha = alpha;
  blk.block_sum = Scalar::exact(Rat(M)) * Scalar::pow(alpha, st.p);
  blk.sum_ge_1 = block_inequality_holds(M, *rho_star, st.p);
  for (int t = 0; t < M; ++t) st.alphas.push_back(alpha);

  const int L0 = st.levels_planned;     // last planned level so far
  const int Lend = L0 + static_cast<int>(M);

  // Write the deferred plans of the previous block's last level: each pending
  // flank splits its remain at the new centre.
  if (block_index == 1) {
    // Roots are the split of [0,1] at the (single) chosen centre.
    if (choices.size() != 1) throw InvariantError("first block must start from one interval");
    st.first_centre = choices[0].a;
  } else {
    for (const auto& pen : st.pending) {
      // find the choice for this remain
      const Choice* ch = nullptr;
      for (const auto& c : choices)
        if (c.F == pen.remain) { ch = &c; break; }
      if (!ch) throw InvariantError("no oracle choice for remain " + pen.remain.str());
      NodeExpansion e;
      e.gap = pen.gap;
      std::vector<IntervalR> kids;
      kids.push_back(IntervalR::closed(pen.remain.lo, ch->a));
      kids.push_back(IntervalR::closed(ch->a, pen.remain.hi));
      kids.push_back(IntervalR::point(pen.point));
      e.children = std::move(kids);
      st.plans[{L0, pen.flank.lo}] = std::move(e);
      st.has_degenerate = true;
    }
    st.pending.clear();
  }

  // Flank plans for levels L0+1 .. Lend-1; the last level is deferred.
  std::vector<EmbedState::Pending> next_pending;
  std::vector<IntervalR> next_frontier;
  for (const auto& c : choices) {
    const Rat delta = c.r / (2 * M);
    // Two flank chains: left [F.lo, a], right [a, F.hi] at level L0+1.
    for (int side = 0; side < 2; ++side) {
      for (long t = 1; t <= M; ++t) {
        IntervalR flank, gap;
        Rat point;
        IntervalR remain;
        if (side == 0) {
          flank = IntervalR::closed(c.F.lo, c.a - (t - 1) * delta);
          gap = IntervalR::open(c.a - t * delta, c.a - (t - 1) * delta);
          remain = IntervalR::closed(c.F.lo, c.a - t * delta);
          point = c.a - (t - 1) * delta;
        } else {
          flank = IntervalR::closed(c.a + (t - 1) * delta, c.F.hi);
          gap = IntervalR::open(c.a + (t - 1) * delta, c.a + t * delta);
          remain = IntervalR::closed(c.a + t * delta, c.F.hi);
          point = c.a + (t - 1) * delta;
        }
        const int level = L0 + static_cast<int>(t);
        if (t < M) {
          NodeExpansion e;
          e.gap = gap;
          if (side == 0)
            e.children = {remain, IntervalR::point(point)};
          else
            e.children = {IntervalR::point(point), remain};
          st.plans[{level, flank.lo}] = std::move(e);
          st.has_degenerate = true;
        } else {
          next_pending.push_back({flank, gap, remain, point, side == 0});
          next_frontier.push_back(remain);
        }
      }
    }
  }
  st.pending = std::move(next_pending);
  st.frontier = std::move(next_frontier);
  st.levels_planned = Lend;
  st.blocks.push_back(std::move(blk));
}

}  // namespace detail

// The porous-embedding construction: produces a Cantor construction whose
// gaps avoid E, together with its ratio sequence and a per-block certificate
// that the partial porosity sums reach 1 per block.
inline EmbedResult embed_porous(std::shared_ptr<const AvoidanceOracle> oracle,
                                const Rat& p, int blocks) {
  if (!(p > 0 && p < 1)) throw ArgumentError("embedding requires 0 < p < 1");
  if (blocks < 1) throw ArgumentError("need at least one block");

  auto st = std::make_shared<detail::EmbedState>();
  st->oracle = std::move(oracle);
  st->p = p;
  st->frontier = {IntervalR::closed(Rat(0), Rat(1))};
  detail::embed_materialize_block(*st);

  // Roots: [0,1] split at the first block's centre.
  const Rat centre = st->first_centre;

  auto gen = [st](const IntervalR& iv, int level) -> NodeExpansion {
    std::lock_guard<std::recursive_mutex> lk(st->mu);
    while (st->levels_planned < level + 1) detail::embed_materialize_block(*st);
    auto it = st->plans.find({level, iv.lo});
    if (it == st->plans.end())
      throw InvariantError("no embed plan for level " + std::to_string(level) + " node " +
                           iv.str());
    return it->second;
  };

  std::vector<IntervalR> roots = {IntervalR::closed(Rat(0), centre),
                                  IntervalR::closed(centre, Rat(1))};
  auto cons = std::make_shared<Construction>(std::move(roots), gen, "porous_embedding");

  AlphaSeq seq(
      [st](int n) -> Rat {
        std::lock_guard<std::recursive_mutex> lk(st->mu);
        while (static_cast<int>(st->alphas.size()) < n) detail::embed_materialize_block(*st);
        return st->alphas[n - 1];
      },
      "embedded");

  // Materialize the requested number of blocks and assemble the certificate.
  {
    std::lock_guard<std::recursive_mutex> lk(st->mu);
    while (static_cast<int>(st->blocks.size()) < blocks) detail::embed_materialize_block(*st);
  }
  EmbedCertificate cert;
  cert.p = p;
  {
    std::lock_guard<std::recursive_mutex> lk(st->mu);
    cert.blocks.assign(st->blocks.begin(), st->blocks.begin() + blocks);
    cert.total_levels = 0;
    for (const auto& b : cert.blocks) cert.total_levels += b.levels;
    cert.has_degenerate_nodes = true;  // singleton bookkeeping points by design
  }
  std::vector<Scalar> sums;
  bool all_ge_1 = true;
  for (const auto& b : cert.blocks) {
    sums.push_back(b.block_sum);
    all_ge_1 = all_ge_1 && b.sum_ge_1;
  }
  cert.cumulative_sum = Scalar::sum(sums);
  cert.cumulative_ge_blocks =
      all_ge_1 &&
      Scalar::certify_le(Scalar::exact(Rat(blocks)), cert.cumulative_sum).value_or(false);

  // Gap avoidance probes: endpoints and midpoint of every materialized gap,
  // plus the open-interval query.
  cons->materialize(cert.total_levels);
  bool avoid = true;
  cons->for_each_gap(cert.total_levels, [&](const IntervalR& g, int) {
    if (!avoid) return;
    const auto& orc = *st->oracle;
    if (orc.meets(g.lo, g.hi, /*open=*/true)) avoid = false;
    if (orc.meets(g.mid(), g.mid(), /*open=*/false)) avoid = false;
  });
  cert.gaps_avoid_e = avoid;

  return EmbedResult{std::move(cons), std::move(seq), std::move(cert)};
}

}  // namespace cantor
