#pragma once

#include <mpfr.h>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cantor/errors.hpp"
#include "cantor/rational.hpp"

namespace cantor {

inline constexpr int kDefaultPrec = 128;
inline constexpr int kMaxPrec = 1 << 16;
// Exact rationals whose size passes this cap stay symbolic; beyond it the
// result is demoted to a directed-rounding enclosure (still refinable).
inline constexpr size_t kExactBitCap = 8192;

namespace detail {

struct Mpf {
  mpfr_t v;
  explicit Mpf(int prec) { mpfr_init2(v, prec); }
  Mpf(const Mpf&) = delete;
  Mpf& operator=(const Mpf&) = delete;
  ~Mpf() { mpfr_clear(v); }
};

inline Rat mpfr_to_rat(const mpfr_t m) {
  if (mpfr_zero_p(m)) return Rat(0);
  if (!mpfr_number_p(m)) throw InvariantError("non-finite enclosure bound");
  mpz_class z;
  const mp_exp_t e = mpfr_get_z_2exp(z.get_mpz_t(), m);
  Rat r(z);
  if (e >= 0) {
    mpz_class p;
    mpz_pow_ui(p.get_mpz_t(), mpz_class(2).get_mpz_t(), static_cast<unsigned long>(e));
    r *= Rat(p);
  } else {
    mpz_class p;
    mpz_pow_ui(p.get_mpz_t(), mpz_class(2).get_mpz_t(), static_cast<unsigned long>(-e));
    r /= Rat(p);
  }
  return r;
}

inline void rat_to_mpfr(mpfr_t out, const Rat& q, mpfr_rnd_t rnd) {
  mpfr_set_q(out, q.get_mpq_t(), rnd);
}

// Enclosure of base^exponent over positive rational base.
inline std::pair<Rat, Rat> corner_pow(const Rat& base, const Rat& exponent, int prec) {
  if (base <= 0) throw ArgumentError("pow requires positive base");
  Mpf blo(prec), bup(prec), elo(prec), eup(prec), t(prec), lo(prec), up(prec);
  rat_to_mpfr(blo.v, base, MPFR_RNDD);
  rat_to_mpfr(bup.v, base, MPFR_RNDU);
  rat_to_mpfr(elo.v, exponent, MPFR_RNDD);
  rat_to_mpfr(eup.v, exponent, MPFR_RNDU);
  bool first = true;
  for (const mpfr_t* b : {&blo.v, &bup.v}) {
    for (const mpfr_t* e : {&elo.v, &eup.v}) {
      mpfr_pow(t.v, *b, *e, MPFR_RNDD);
      if (first || mpfr_cmp(t.v, lo.v) < 0) mpfr_set(lo.v, t.v, MPFR_RNDD);
      mpfr_pow(t.v, *b, *e, MPFR_RNDU);
      if (first || mpfr_cmp(t.v, up.v) > 0) mpfr_set(up.v, t.v, MPFR_RNDU);
      first = false;
    }
  }
  return {mpfr_to_rat(lo.v), mpfr_to_rat(up.v)};
}

struct RealNode;
using NodePtr = std::shared_ptr<const RealNode>;

struct RealNode {
  enum Kind { kExact, kLeaf, kPow, kAdd, kSub, kMul, kDiv, kLog2 };
  Kind kind;
  Rat a, b;  // kExact: value in a; kPow: base a, exponent b; kLeaf: bounds [a,b]
  NodePtr x, y;
  int prec = 0;   // precision of the cached bounds (0 = exact/raw)
  Rat lo, up;     // cached enclosure (dyadic unless exact)

  bool exact() const { return kind == kExact; }
  Rat lower() const { return exact() ? a : lo; }
  Rat upper() const { return exact() ? a : up; }
  Rat width() const { return exact() ? Rat(0) : Rat(up - lo); }
};

inline NodePtr make_exact(const Rat& v) {
  auto n = std::make_shared<RealNode>();
  n->kind = RealNode::kExact;
  n->a = v;
  return n;
}

inline NodePtr make_leaf(const Rat& lo, const Rat& up) {
  if (lo > up) throw ArgumentError("leaf enclosure with lower > upper");
  auto n = std::make_shared<RealNode>();
  n->kind = RealNode::kLeaf;
  n->a = lo;
  n->b = up;
  n->lo = lo;
  n->up = up;
  return n;
}

// Combines the children's current bounds at the given precision.
inline void combine_bounds(RealNode& n, int prec) {
  n.prec = prec;
  switch (n.kind) {
    case RealNode::kExact:
      return;
    case RealNode::kLeaf:
      n.lo = n.a;
      n.up = n.b;
      return;
    case RealNode::kPow: {
      auto [l, u] = corner_pow(n.a, n.b, prec);
      n.lo = l;
      n.up = u;
      return;
    }
    case RealNode::kLog2: {
      if (n.x->lower() <= 0) throw ArgumentError("log2 of nonpositive enclosure");
      Mpf in(prec), out(prec);
      rat_to_mpfr(in.v, n.x->lower(), MPFR_RNDD);
      mpfr_log2(out.v, in.v, MPFR_RNDD);
      n.lo = mpfr_to_rat(out.v);
      rat_to_mpfr(in.v, n.x->upper(), MPFR_RNDU);
      mpfr_log2(out.v, in.v, MPFR_RNDU);
      n.up = mpfr_to_rat(out.v);
      return;
    }
    default:
      break;
  }
  const Rat xl = n.x->lower(), xu = n.x->upper();
  const Rat yl = n.y->lower(), yu = n.y->upper();
  switch (n.kind) {
    case RealNode::kAdd:
      n.lo = xl + yl;
      n.up = xu + yu;
      break;
    case RealNode::kSub:
      n.lo = xl - yu;
      n.up = xu - yl;
      break;
    case RealNode::kMul: {
      Rat c1 = xl * yl, c2 = xl * yu, c3 = xu * yl, c4 = xu * yu;
      n.lo = rat_min(rat_min(c1, c2), rat_min(c3, c4));
      n.up = rat_max(rat_max(c1, c2), rat_max(c3, c4));
      break;
    }
    case RealNode::kDiv: {
      if ((yl <= 0 && yu >= 0)) throw ArgumentError("division by enclosure containing zero");
      Rat c1 = xl / yl, c2 = xl / yu, c3 = xu / yl, c4 = xu / yu;
      n.lo = rat_min(rat_min(c1, c2), rat_min(c3, c4));
      n.up = rat_max(rat_max(c1, c2), rat_max(c3, c4));
      break;
    }
    default:
      throw InvariantError("unhandled node kind");
  }
  // Exact rational interval endpoints from +,-,*,/ stay exact; round them
  // outward only to keep representation sizes bounded.
  if (rat_bits(n.lo) > 4 * kExactBitCap || rat_bits(n.up) > 4 * kExactBitCap) {
    Mpf t(prec);
    rat_to_mpfr(t.v, n.lo, MPFR_RNDD);
    n.lo = mpfr_to_rat(t.v);
    rat_to_mpfr(t.v, n.up, MPFR_RNDU);
    n.up = mpfr_to_rat(t.v);
  }
}

// Rebuilds the DAG with bounds evaluated at `prec`, sharing refined subtrees.
inline NodePtr refined_clone(const NodePtr& n, int prec,
                             std::map<const RealNode*, NodePtr>& memo) {
  if (n->exact()) return n;
  if (n->kind == RealNode::kLeaf) return n;
  if (n->prec >= prec) return n;
  auto it = memo.find(n.get());
  if (it != memo.end()) return it->second;
  auto m = std::make_shared<RealNode>(*n);
  if (n->x) m->x = refined_clone(n->x, prec, memo);
  if (n->y) m->y = refined_clone(n->y, prec, memo);
  combine_bounds(*m, prec);
  memo[n.get()] = m;
  return m;
}

}  // namespace detail

// Certified real scalar: a directed-rounding enclosure carrying its own
// re-evaluation recipe. Values are immutable; refinement returns a new value.
class Scalar {
 public:
  Scalar() : node_(detail::make_exact(Rat(0))) {}
  /* implicit */ Scalar(const Rat& v) : node_(detail::make_exact(v)) {}
  /* implicit */ Scalar(long v) : node_(detail::make_exact(Rat(v))) {}

  static Scalar exact(const Rat& v) { return Scalar(detail::make_exact(v)); }

  // Raw enclosure without a recipe (deserialized values).
  static Scalar from_bounds(const Rat& lo, const Rat& up) {
    return Scalar(detail::make_leaf(lo, up));
  }

  // base^exponent over positive rational base; collapses to an exact rational
  // whenever one exists (dyadic roots, integer exponents, ...).
  static Scalar pow(const Rat& base, const Rat& exponent, int prec = kDefaultPrec) {
    if (base <= 0) throw ArgumentError("pow requires positive base");
    if (auto ex = rat_pow_exact(base, exponent)) {
      if (rat_bits(*ex) <= kExactBitCap) return exact(*ex);
    }
    auto n = std::make_shared<detail::RealNode>();
    n->kind = detail::RealNode::kPow;
    n->a = base;
    n->b = exponent;
    detail::combine_bounds(*n, prec);
    return Scalar(std::move(n));
  }

  static Scalar log2(const Scalar& x) {
    if (x.is_exact()) {
      if (auto e = exact_log2(x.exact_value())) return exact(Rat(*e));
    }
    Scalar xp = x;
    int prec = kDefaultPrec;
    while (xp.lower() <= 0) {
      if (xp.upper() <= 0) throw ArgumentError("log2 of nonpositive value");
      if (prec > kMaxPrec) throw ArgumentError("log2 enclosure straddles zero");
      xp = xp.refined_to_prec(prec *= 2);
    }
    auto n = std::make_shared<detail::RealNode>();
    n->kind = detail::RealNode::kLog2;
    n->x = xp.node_;
    detail::combine_bounds(*n, std::max(kDefaultPrec, xp.precision()));
    return Scalar(std::move(n));
  }

  bool is_exact() const { return node_->exact(); }
  Rat exact_value() const {
    if (!is_exact()) throw PreconditionError("value is not exact");
    return node_->a;
  }
  Rat lower() const { return node_->lower(); }
  Rat upper() const { return node_->upper(); }
  Rat width() const { return node_->width(); }
  int precision() const { return node_->exact() ? kMaxPrec : node_->prec; }

  bool contains(const Rat& v) const { return lower() <= v && v <= upper(); }

  // Same value, width <= tol. Throws RefineError for recipe-less leaves.
  Scalar refined(const Rat& tol) const {
    if (tol <= 0) throw ArgumentError("tolerance must be positive");
    if (width() <= tol) return *this;
    int prec = std::max(kDefaultPrec, node_->prec);
    Scalar cur = *this;
    while (cur.width() > tol) {
      prec *= 2;
      if (prec > kMaxPrec)
        throw RefineError("cannot refine enclosure to requested tolerance");
      Scalar next = cur.refined_to_prec(prec);
      if (next.width() >= cur.width() && next.width() > tol)
        throw RefineError("value cannot be refined (no recipe)");
      cur = next;
    }
    return cur;
  }

  Scalar refined_to_prec(int prec) const {
    std::map<const detail::RealNode*, detail::NodePtr> memo;
    return Scalar(detail::refined_clone(node_, prec, memo));
  }

  friend Scalar operator+(const Scalar& a, const Scalar& b) { return op(detail::RealNode::kAdd, a, b); }
  friend Scalar operator-(const Scalar& a, const Scalar& b) { return op(detail::RealNode::kSub, a, b); }
  friend Scalar operator*(const Scalar& a, const Scalar& b) { return op(detail::RealNode::kMul, a, b); }
  friend Scalar operator/(const Scalar& a, const Scalar& b) {
    if (!b.is_exact() && b.lower() <= 0 && b.upper() >= 0) {
      // Try to separate the denominator from zero before giving up.
      Scalar bb = b;
      int prec = std::max(kDefaultPrec, b.precision());
      while (bb.lower() <= 0 && bb.upper() >= 0 && prec <= kMaxPrec)
        bb = bb.refined_to_prec(prec *= 2);
      return op(detail::RealNode::kDiv, a, bb);
    }
    return op(detail::RealNode::kDiv, a, b);
  }

  // Balanced sum keeps refinement DAGs shallow.
  static Scalar sum(const std::vector<Scalar>& xs) {
    if (xs.empty()) return Scalar(Rat(0));
    std::vector<Scalar> cur = xs;
    while (cur.size() > 1) {
      std::vector<Scalar> next;
      next.reserve((cur.size() + 1) / 2);
      for (size_t i = 0; i + 1 < cur.size(); i += 2) next.push_back(cur[i] + cur[i + 1]);
      if (cur.size() % 2) next.push_back(cur.back());
      cur = std::move(next);
    }
    return cur[0];
  }

  enum class Cmp { Less, Equal, Greater, Unknown };
  static Cmp compare(const Scalar& a, const Scalar& b) {
    if (a.is_exact() && b.is_exact()) {
      const int c = cmp(a.exact_value(), b.exact_value());
      return c < 0 ? Cmp::Less : (c > 0 ? Cmp::Greater : Cmp::Equal);
    }
    if (a.upper() < b.lower()) return Cmp::Less;
    if (a.lower() > b.upper()) return Cmp::Greater;
    return Cmp::Unknown;
  }

  // Certified a <= b / a < b, refining as needed; nullopt when undecidable.
  static std::optional<bool> certify_le(const Scalar& a, const Scalar& b,
                                        int max_prec = kMaxPrec) {
    Scalar x = a, y = b;
    int prec = kDefaultPrec;
    for (;;) {
      if (x.is_exact() && y.is_exact()) return x.exact_value() <= y.exact_value();
      if (x.upper() <= y.lower()) return true;
      if (x.lower() > y.upper()) return false;
      prec *= 2;
      if (prec > max_prec) return std::nullopt;
      x = x.refined_to_prec(prec);
      y = y.refined_to_prec(prec);
    }
  }
  static std::optional<bool> certify_lt(const Scalar& a, const Scalar& b,
                                        int max_prec = kMaxPrec) {
    Scalar x = a, y = b;
    int prec = kDefaultPrec;
    for (;;) {
      if (x.is_exact() && y.is_exact()) return x.exact_value() < y.exact_value();
      if (x.upper() < y.lower()) return true;
      if (x.lower() >= y.upper()) return false;
      prec *= 2;
      if (prec > max_prec) return std::nullopt;
      x = x.refined_to_prec(prec);
      y = y.refined_to_prec(prec);
    }
  }

  // Decimal rendering of a bound, rounded in the sound direction.
  std::string decimal(bool upper_bound, int digits = 40) const {
    const Rat v = upper_bound ? upper() : lower();
    detail::Mpf t(std::max(precision() == kMaxPrec ? kDefaultPrec : precision(), kDefaultPrec));
    detail::rat_to_mpfr(t.v, v, upper_bound ? MPFR_RNDU : MPFR_RNDD);
    char* s = nullptr;
    mpfr_asprintf(&s, "%.*R*e", digits, upper_bound ? MPFR_RNDU : MPFR_RNDD, t.v);
    std::string out(s);
    mpfr_free_str(s);
    return out;
  }

 private:
  explicit Scalar(detail::NodePtr n) : node_(std::move(n)) {}

  static Scalar op(detail::RealNode::Kind k, const Scalar& a, const Scalar& b) {
    if (a.is_exact() && b.is_exact()) {
      const Rat& x = a.node_->a;
      const Rat& y = b.node_->a;
      Rat r;
      bool ok = true;
      switch (k) {
        case detail::RealNode::kAdd: r = x + y; break;
        case detail::RealNode::kSub: r = x - y; break;
        case detail::RealNode::kMul: r = x * y; break;
        case detail::RealNode::kDiv:
          if (y == 0) throw ArgumentError("division by zero");
          r = x / y;
          break;
        default: ok = false;
      }
      if (ok && rat_bits(r) <= kExactBitCap) return exact(r);
    }
    auto n = std::make_shared<detail::RealNode>();
    n->kind = k;
    n->x = a.node_;
    n->y = b.node_;
    detail::combine_bounds(*n, std::max({kDefaultPrec,
                                         a.is_exact() ? 0 : a.node_->prec,
                                         b.is_exact() ? 0 : b.node_->prec}));
    return Scalar(std::move(n));
  }

  detail::NodePtr node_;
};

// Spec-surface helpers.
inline Scalar pow_bounds(const Rat& base, const Rat& exponent, const Rat& tolerance) {
  if (tolerance <= 0) throw ArgumentError("tolerance must be positive");
  if (!(base > 0 && base <= 1)) throw ArgumentError("base must lie in (0,1]");
  if (exponent <= 0) throw ArgumentError("exponent must be positive");
  return Scalar::pow(base, exponent).refined(tolerance);
}

inline Scalar refine(const Scalar& x, const Rat& tolerance) { return x.refined(tolerance); }

}  // namespace cantor
