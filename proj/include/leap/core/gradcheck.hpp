#pragma once

// Central finite-difference check against reverse-mode gradients. Meant to be
// run with T = double; float lacks the headroom for 1e-5 tolerances.

#include <cmath>
#include <functional>
#include <string>

#include "leap/core/tensor.hpp"

namespace leap {

// f must rebuild its graph from x on every call and return a scalar.
// Returns max over coordinates of |analytic - numeric| /
// max(1e-12, |analytic| + |numeric|).
template <class T>
double grad_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T>& x,
                  double step = 1e-6) {
  if (!(step > 0)) throw Error("grad_check: step must be positive");
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<T> loss = f(x);
  loss.backward();
  std::vector<T> analytic = x.grad();

  double max_err = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) {
    T saved = x.data()[i];
    x.data()[i] = saved + T(step);
    double fp = double(f(x).item());
    x.data()[i] = saved - T(step);
    double fm = double(f(x).item());
    x.data()[i] = saved;
    double numeric = (fp - fm) / (2.0 * step);
    double a = double(analytic[i]);
    if (!std::isfinite(numeric) || !std::isfinite(a))
      throw Error("grad_check: non-finite value at coordinate " +
                  std::to_string(i));
    double err =
        std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
    if (err > max_err) max_err = err;
  }
  return max_err;
}

}  // namespace leap
