#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cantor/errors.hpp"
#include "cantor/rational.hpp"

namespace cantor {

// Ratio sequence (alpha_n), 1-based, each value in (0,1). A sequence may know
// a closed-form upper bound for its tail sum; profiles that need certified
// lower bounds degrade gracefully without one.
class AlphaSeq {
 public:
  using Eval = std::function<Rat(int)>;
  using TailSum = std::function<std::optional<Rat>(int)>;  // bound on sum_{k>n} alpha_k
  using TailSup = std::function<std::optional<Rat>(int)>;  // bound on sup_{k>=n} alpha_k

  AlphaSeq() = default;
  AlphaSeq(Eval eval, std::string tag, TailSum tail = nullptr, TailSup sup = nullptr)
      : eval_(std::move(eval)), tag_(std::move(tag)), tail_(std::move(tail)),
        sup_(std::move(sup)) {}

  Rat at(int n) const {
    if (n < 1) throw ArgumentError("alpha sequence index must be >= 1");
    Rat a = eval_(n);
    if (!(a > 0 && a < 1))
      throw PreconditionError("alpha_" + std::to_string(n) + " = " + rat_str(a) +
                              " outside (0,1)");
    return a;
  }

  const std::string& tag() const { return tag_; }

  std::optional<Rat> tail_sum_bound(int n) const {
    if (!tail_) return std::nullopt;
    return tail_(n);
  }

  // Upper bound on sup_{k >= n} alpha_k, when known.
  std::optional<Rat> tail_sup_bound(int n) const {
    if (!sup_) return std::nullopt;
    return sup_(n);
  }

  static AlphaSeq constant(const Rat& r) {
    return AlphaSeq([r](int) { return r; }, "constant " + rat_str(r), nullptr,
                    [r](int) -> std::optional<Rat> { return r; });
  }

  // alpha_n = scale * r^n.
  static AlphaSeq geometric(const Rat& r, const Rat& scale = Rat(1)) {
    if (!(r > 0 && r < 1)) throw ArgumentError("geometric ratio must lie in (0,1)");
    std::string tag = "geometric " + rat_str(r);
    if (scale != 1) tag += " scale " + rat_str(scale);
    return AlphaSeq([r, scale](int n) { return Rat(scale * rat_pow_int(r, n)); }, tag,
                    [r, scale](int n) -> std::optional<Rat> {
                      // sum_{k>n} scale r^k = scale r^{n+1}/(1-r)
                      return Rat(scale * rat_pow_int(r, n + 1) / (Rat(1) - r));
                    },
                    [r, scale](int n) -> std::optional<Rat> {
                      return Rat(scale * rat_pow_int(r, n));
                    });
  }

  // alpha_n = 1/(n+1), so the first term is 1/2.
  static AlphaSeq harmonic() {
    return AlphaSeq([](int n) { return rat(1, n + 1); }, "harmonic", nullptr,
                    [](int n) -> std::optional<Rat> { return rat(1, n + 1); });
  }

  static AlphaSeq explicit_list(std::vector<Rat> values, bool repeat_last = false) {
    if (values.empty()) throw ArgumentError("empty alpha list");
    auto vals = std::make_shared<std::vector<Rat>>(std::move(values));
    auto suffix_max = std::make_shared<std::vector<Rat>>(*vals);
    for (size_t i = suffix_max->size(); i-- > 1;)
      (*suffix_max)[i - 1] = rat_max((*suffix_max)[i - 1], (*suffix_max)[i]);
    std::string tag = "list[" + std::to_string(vals->size()) + "]";
    return AlphaSeq(
        [vals, repeat_last](int n) -> Rat {
          if (n <= static_cast<int>(vals->size())) return (*vals)[n - 1];
          if (repeat_last) return vals->back();
          throw BudgetError("alpha list exhausted at n = " + std::to_string(n));
        },
        tag, nullptr,
        [vals, suffix_max, repeat_last](int n) -> std::optional<Rat> {
          if (n <= static_cast<int>(suffix_max->size())) return (*suffix_max)[n - 1];
          if (repeat_last) return vals->back();
          return std::nullopt;
        });
  }

 private:
  Eval eval_;
  std::string tag_;
  TailSum tail_;
  TailSup sup_;
};

}  // namespace cantor
