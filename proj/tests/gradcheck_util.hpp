#pragma once

// Shared machinery for finite-difference gradient checks.
//
// Single precision at eps=1e-3 sits close to the f32 noise floor, so the
// checks here (a) reduce through a zero-centered probe loss
// sum(w ⊙ (layer(x) - layer(x0))), which keeps every partial sum tiny and
// removes the final-quantization term, and (b) sample points whose gradient
// has no near-zero elements (those make the relative-error denominator
// meaningless at f32 resolution). Rejected points are FD-hostile, not
// suspicious: the double-precision battery covers the same layers without
// any conditioning beyond kink margins.

#include <functional>
#include <vector>

#include "alba/gradcheck.hpp"
#include "alba/ops.hpp"

namespace gcu {

template <class T>
struct CheckSpec {
  // Draws one candidate set of inputs.
  std::function<std::vector<alba::Ten<T>>(alba::Rng&)> sample;
  // The layer under test; any output shape.
  std::function<alba::Ten<T>(const std::vector<alba::Ten<T>>&)> layer;
  // Optional extra rejection (kink margins, degenerate variance, ...).
  std::function<bool(const std::vector<alba::Ten<T>>&)> admissible;
  // Per-spec single-precision conditioning threshold; negative = use the
  // battery default. Specs with many checked elements need a looser bound.
  double f32_min_grad_frac = -1.0;
  // Double-precision conditioning; truncation error also blows up the
  // relative-error formula at cancellation-driven near-zero elements.
  // 0 for specs whose zero gradients are structural and FD-exact.
  double f64_min_grad_frac = -1.0;
  // FD steps per precision. Deep normalized stacks need a smaller step:
  // central-difference truncation grows as eps^2. Both stay within
  // grad_check's [1e-5, 1e-2] contract.
  double f64_eps = 1e-3;
  double f32_eps = 1e-3;
};

// Max relative FD error over `points` conditioned random points.
template <class T>
double conditioned_grad_check(const CheckSpec<T>& spec, std::uint64_t seed, double eps,
                              double min_grad_frac, int points, int max_attempts = 400) {
  using namespace alba;
  Rng rng(seed);
  double worst = 0.0;
  int accepted = 0;
  for (int attempt = 0; attempt < max_attempts && accepted < points; ++attempt) {
    std::vector<Ten<T>> inputs = spec.sample(rng);
    if (spec.admissible && !spec.admissible(inputs)) continue;

    Ten<T> y0;
    {
      NoGrad ng;
      y0 = spec.layer(inputs).clone();
    }
    Ten<T> w = Ten<T>::uniform(y0.shape(), rng, T(0.3), T(1.0));
    for (auto& s : w.data())
      if (rng.next_double() < 0.5) s = -s;
    auto loss = [&spec, w, y0](const std::vector<Ten<T>>& in) {
      return sum_all(mul(w, sub(spec.layer(in), y0)));
    };

    if (min_grad_frac > 0.0) {
      for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.drop_grad();
      }
      Ten<T> l = loss(inputs);
      if (!l.requires_grad()) continue;
      backward(l);
      double gmin = 1e300, gmax = 0.0;
      std::size_t n_elems = 0;
      for (auto& in : inputs) {
        n_elems += in.numel();
        if (!in.has_grad()) {
          gmin = 0.0;
          continue;
        }
        for (T g : in.grad()) {
          double a = std::fabs(static_cast<double>(g));
          gmin = std::min(gmin, a);
          gmax = std::max(gmax, a);
        }
      }
      // single checked element (directional form): the threshold is an
      // absolute floor on the derivative magnitude
      double bar = n_elems == 1 ? min_grad_frac : min_grad_frac * std::max(1.0, gmax);
      if (gmin < bar) continue;
    }

    worst = std::max(worst, grad_check<T>(loss, inputs, eps));
    ++accepted;
  }
  if (accepted < points)
    throw alba::ContractError("conditioned_grad_check: could not find enough well-conditioned points");
  return worst;
}

// Values with |x| >= margin everywhere; keeps FD away from relu/abs kinks.
template <class T>
alba::Ten<T> away_from_zero(const alba::Shape& s, alba::Rng& rng, double margin, double hi = 1.5) {
  std::vector<T> v(alba::shape_numel(s));
  for (auto& x : v) {
    double u;
    do {
      u = rng.uniform(-hi, hi);
    } while (std::fabs(u) < margin);
    x = static_cast<T>(u);
  }
  return alba::Ten<T>::from(s, std::move(v));
}

// true iff every length-d row of x has variance >= min_var (normalization
// layers blow up curvature on near-constant rows).
template <class T>
bool rows_have_variance(const alba::Ten<T>& x, std::size_t d, double min_var) {
  std::size_t rows = x.numel() / d;
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0, var = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xd[r * d + j];
    mu /= static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      double c = xd[r * d + j] - mu;
      var += c * c;
    }
    if (var / static_cast<double>(d) < min_var) return false;
  }
  return true;
}

}  // namespace gcu
