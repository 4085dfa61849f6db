#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "alba/ops.hpp"
#include "alba/tensor.hpp"

namespace alba {

// Central finite differences against reverse-mode gradients. Returns the max
// over all input elements of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
// The function must be scalar-valued.
template <class T>
double grad_check(const std::function<Ten<T>(const std::vector<Ten<T>>&)>& f,
                  std::vector<Ten<T>> inputs, double eps) {
  if (eps < 1e-5 || eps > 1e-2)
    throw ContractError("grad_check: eps must lie in [1e-5, 1e-2]");
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.drop_grad();  // discard any gradient left over from earlier passes
  }

  Ten<T> y = f(inputs);
  if (y.numel() != 1)
    throw ContractError("grad_check: function must be scalar-valued, got " + shape_str(y.shape()));
  backward(y);

  auto eval = [&]() -> double {
    NoGrad ng;
    return static_cast<double>(f(inputs).item());
  };

  double worst = 0.0;
  for (auto& in : inputs) {
    auto xd = in.data();
    for (std::size_t i = 0; i < xd.size(); ++i) {
      T saved = xd[i];
      xd[i] = saved + static_cast<T>(eps);
      double fp = eval();
      xd[i] = saved - static_cast<T>(eps);
      double fm = eval();
      xd[i] = saved;
      double g_fd = (fp - fm) / (2.0 * eps);
      double g_ad = in.has_grad() ? static_cast<double>(in.grad()[i]) : 0.0;
      double denom = std::max({std::fabs(g_ad), std::fabs(g_fd), 1e-8});
      worst = std::max(worst, std::fabs(g_ad - g_fd) / denom);
    }
  }
  return worst;
}

}  // namespace alba
