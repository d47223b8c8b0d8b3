#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ulmv/tape.hpp"

namespace ulmv {

struct GradCheckOptions {
  double step = 1e-3;
  int sample_count = 100;
  uint64_t seed = 0;
  // Coordinates where both analytic and numeric gradients are below this are
  // compared absolutely (relative error is meaningless at ~0).
  double zero_floor = 1e-8;
};

struct CoordinateCheck {
  std::string param;
  int64_t index = 0;
  double analytic = 0, numeric = 0, rel_error = 0, abs_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0, mean_rel_error = 0, max_abs_error = 0;
  int checked = 0;
  CoordinateCheck worst;

  bool pass(double rel_tol) const { return max_rel_error <= rel_tol; }
};

// Central-difference verification of analytic gradients. Run in 64-bit.
// Convention: the caller has already done one forward+backward so that each
// Parameter::grad holds the analytic gradient; `loss_fn` re-evaluates the
// scalar (no backward) at the current parameter values.
template <typename Fn>
GradCheckReport finite_difference_check(Fn&& loss_fn, std::span<Parameter<double>* const> params,
                                        GradCheckOptions opt = {}) {
  int64_t total = 0;
  for (const Parameter<double>* p : params) total += p->value.numel();
  if (total == 0) throw ConfigError("finite_difference_check: no parameters");

  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int64_t> pick(0, total - 1);

  GradCheckReport rep;
  double rel_sum = 0;
  const int n = std::min<int64_t>(opt.sample_count, total);
  for (int s = 0; s < n; ++s) {
    int64_t flat = pick(rng);
    size_t pi = 0;
    while (flat >= params[pi]->value.numel()) {
      flat -= params[pi]->value.numel();
      ++pi;
    }
    Parameter<double>* p = params[pi];
    double& coord = p->value.data[static_cast<size_t>(flat)];
    const double saved = coord;

    coord = saved + opt.step;
    const double up = loss_fn();
    coord = saved - opt.step;
    const double down = loss_fn();
    coord = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericFault("finite_difference_check: non-finite probe at " + p->name + "[" +
                         std::to_string(flat) + "]");

    const double numeric = (up - down) / (2.0 * opt.step);
    const double analytic = p->grad.data[static_cast<size_t>(flat)];
    const double denom = std::max(std::abs(numeric), std::abs(analytic));
    const double abs_err = std::abs(numeric - analytic);
    const double rel_err = denom < opt.zero_floor ? 0.0 : abs_err / denom;

    rel_sum += rel_err;
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
    if (rel_err >= rep.max_rel_error) {
      rep.max_rel_error = rel_err;
      rep.worst = {p->name, flat, analytic, numeric, rel_err, abs_err};
    }
    ++rep.checked;
  }
  rep.mean_rel_error = rep.checked ? rel_sum / rep.checked : 0.0;
  return rep;
}

}  // namespace ulmv
