#pragma once

// Finite-difference gradient checking (test-only).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "dpnse/ops.hpp"
#include "dpnse/rng.hpp"
#include "dpnse/tensor.hpp"

namespace dpnse::testing {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates where some probe within +-h changed a ReLU sign or maxpool argmax.
  // The loss is not differentiable across such a step, so they are replaced
  // by fresh draws instead of being scored.
  std::size_t skipped = 0;
};

// |a - n| / max(|a|, |n|, floor): relative error, with an absolute floor so
// that coordinates whose true gradient is ~0 are judged on absolute error.
inline double rel_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Ridders' extrapolation of central differences: steps h, h/1.4, h/1.4^2, ...
/// with a Neville tableau, returning the entry whose estimated error is
/// smallest. `f` reports false when a probe cannot be used, which aborts
/// the estimate.
inline std::optional<double> ridders_derivative(const std::function<bool(double, double&)>& f,
                                                double x, double h) {
  constexpr int kTable = 10;
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  double table[kTable][kTable];
  auto central = [&](double step, double& out) {
    double plus = 0.0, minus = 0.0;
    if (!f(x + step, plus) || !f(x - step, minus)) return false;
    out = (plus - minus) / (2.0 * step);
    return true;
  };
  if (!central(h, table[0][0])) return std::nullopt;
  double best = table[0][0], best_err = std::numeric_limits<double>::infinity();
  for (int i = 1; i < kTable; ++i) {
    h /= kShrink;
    if (!central(h, table[0][i])) return std::nullopt;
    double fac = kShrink2;
    for (int j = 1; j <= i; ++j) {
      table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double err = std::max(std::abs(table[j][i] - table[j - 1][i]),
                                  std::abs(table[j][i] - table[j - 1][i - 1]));
      if (err <= best_err) {
        best_err = err;
        best = table[j][i];
      }
    }
    if (std::abs(table[i][i] - table[i - 1][i - 1]) >= kSafe * best_err) break;
  }
  return best;
}

/// Checks d loss / d input at `coords_per_input` random coordinates of every
/// input (all coordinates when the input is that small). loss_fn rebuilds
/// the graph from the current input values. A fixed-step stencil is not
/// enough for the full network: some random initializations make the loss
/// curved on a 1e-5 scale while other coordinates have exactly zero
/// gradient, so the numeric side uses Ridders' extrapolation starting at h.
inline GradcheckResult gradcheck(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                 std::size_t coords_per_input, std::uint64_t seed,
                                 double h = 1e-5) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  std::uint64_t base_branches = 0;
  {
    BranchRecorder rec;
    Tensor loss = loss_fn();
    base_branches = rec.digest();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  Rng rng(seed);
  GradcheckResult result;
  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto data = inputs[ti].data();
    const bool exhaustive = data.size() <= coords_per_input;
    const std::size_t max_attempts = exhaustive ? data.size() : 20 * coords_per_input;
    std::size_t scored = 0;
    for (std::size_t attempt = 0; attempt < max_attempts && scored < coords_per_input; ++attempt) {
      const std::size_t i = exhaustive ? attempt : rng.below(data.size());
      const double x = data[i];
      auto probe = [&](double value, double& loss) {
        data[i] = value;
        BranchRecorder rec;
        loss = loss_fn().item();
        data[i] = x;
        return rec.digest() == base_branches;
      };
      const std::optional<double> numeric = ridders_derivative(probe, x, h);
      if (!numeric) {
        ++result.skipped;
        continue;
      }
      result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[ti][i], *numeric));
      ++result.checked;
      ++scored;
    }
  }
  return result;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

/// Keeps values at least `margin` away from 0 (ReLU kink).
inline Tensor nudged_away_from_zero(Tensor t, double margin = 0.05) {
  for (auto& x : t.data()) {
    if (std::abs(x) < margin) x = x < 0 ? x - 2 * margin : x + 2 * margin;
  }
  return t;
}

}  // namespace dpnse::testing
