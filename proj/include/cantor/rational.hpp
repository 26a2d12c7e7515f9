#pragma once

#include <gmpxx.h>

#include <optional>
#include <string>
#include <utility>

#include "cantor/errors.hpp"

namespace cantor {

// Exact rational scalar. All interval geometry lives here; canonical form
// (gcd 1, positive denominator) is maintained by mpq_class.
using Rat = mpq_class;

inline Rat rat(long num, long den = 1) {
  if (den == 0) throw ArgumentError("rational with zero denominator");
  Rat q(num, den);
  q.canonicalize();
  return q;
}

// Accepts "num/den", plain integers, and "2^k" / "2^-k" powers of two.
inline Rat parse_rat(const std::string& s) {
  if (s.empty()) throw ParseError("empty rational literal");
  if (auto caret = s.find('^'); caret != std::string::npos) {
    const std::string base = s.substr(0, caret);
    const std::string exp = s.substr(caret + 1);
    if (base != "2") throw ParseError("only base-2 powers supported: " + s);
    long e = 0;
    try {
      e = std::stol(exp);
    } catch (...) {
      throw ParseError("bad exponent in: " + s);
    }
    Rat q(1);
    mpz_class two(2);
    mpz_class p;
    mpz_pow_ui(p.get_mpz_t(), two.get_mpz_t(), static_cast<unsigned long>(e < 0 ? -e : e));
    if (e >= 0) q = Rat(p);
    else q = Rat(1) / Rat(p);
    return q;
  }
  Rat q;
  if (q.set_str(s, 10) != 0) throw ParseError("bad rational literal: " + s);
  if (q.get_den() == 0) throw ParseError("zero denominator: " + s);
  q.canonicalize();
  return q;
}

inline std::string rat_str(const Rat& q) { return q.get_str(); }

inline Rat rat_abs(const Rat& q) { return q < 0 ? Rat(-q) : q; }

inline Rat rat_min(const Rat& a, const Rat& b) { return a < b ? a : b; }
inline Rat rat_max(const Rat& a, const Rat& b) { return a > b ? a : b; }

// q^e for integer e; exact.
inline Rat rat_pow_int(const Rat& q, long e) {
  if (e == 0) return Rat(1);
  const unsigned long ae = static_cast<unsigned long>(e < 0 ? -e : e);
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), q.get_num().get_mpz_t(), ae);
  mpz_pow_ui(den.get_mpz_t(), q.get_den().get_mpz_t(), ae);
  if (e < 0) {
    if (num == 0) throw ArgumentError("0 raised to negative power");
    std::swap(num, den);
  }
  Rat r(num, den);
  r.canonicalize();
  return r;
}

// Exact f-th root when it exists.
inline std::optional<mpz_class> exact_root(const mpz_class& n, unsigned long f) {
  if (n < 0) return std::nullopt;
  mpz_class r;
  const int exactp = mpz_root(r.get_mpz_t(), n.get_mpz_t(), f);
  if (exactp == 0) return std::nullopt;
  return r;
}

// base^(e/f) as an exact rational when base is a perfect f-th power of a
// rational; base > 0 required.
inline std::optional<Rat> rat_pow_exact(const Rat& base, const Rat& exponent) {
  if (base <= 0) return std::nullopt;
  const mpz_class& e = exponent.get_num();
  const mpz_class& f = exponent.get_den();
  if (!e.fits_slong_p() || !f.fits_ulong_p()) return std::nullopt;
  const long ei = e.get_si();
  const unsigned long fi = f.get_ui();
  Rat root;
  if (fi == 1) {
    root = base;
  } else {
    auto rn = exact_root(base.get_num(), fi);
    if (!rn) return std::nullopt;
    auto rd = exact_root(base.get_den(), fi);
    if (!rd) return std::nullopt;
    root = Rat(*rn, *rd);
    root.canonicalize();
  }
  // Guard against absurd blowup from huge integer exponents.
  const size_t bits = mpz_sizeinbase(root.get_num().get_mpz_t(), 2) +
                      mpz_sizeinbase(root.get_den().get_mpz_t(), 2);
  const unsigned long aei = static_cast<unsigned long>(ei < 0 ? -ei : ei);
  if (aei > 1 && bits * aei > 1u << 20) return std::nullopt;
  return rat_pow_int(root, ei);
}

// For q = 2^k returns k.
inline std::optional<long> exact_log2(const Rat& q) {
  if (q <= 0) return std::nullopt;
  const mpz_class& n = q.get_num();
  const mpz_class& d = q.get_den();
  auto pow2_exp = [](const mpz_class& z) -> std::optional<long> {
    if (z <= 0) return std::nullopt;
    const mp_bitcnt_t low = mpz_scan1(z.get_mpz_t(), 0);
    mpz_class shifted = z >> low;
    if (shifted != 1) return std::nullopt;
    return static_cast<long>(low);
  };
  auto en = pow2_exp(n);
  auto ed = pow2_exp(d);
  if (!en || !ed) return std::nullopt;
  return *en - *ed;
}

inline Rat pow2(long k) {
  mpz_class two(2), p;
  mpz_pow_ui(p.get_mpz_t(), two.get_mpz_t(), static_cast<unsigned long>(k < 0 ? -k : k));
  return k >= 0 ? Rat(p) : Rat(Rat(1) / Rat(p));
}

inline size_t rat_bits(const Rat& q) {
  return mpz_sizeinbase(q.get_num().get_mpz_t(), 2) +
         mpz_sizeinbase(q.get_den().get_mpz_t(), 2);
}

}  // namespace cantor
