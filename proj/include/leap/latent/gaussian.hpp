#pragma once

// Diagonal-Gaussian latent machinery: reparameterized sampling and the
// closed-form KL between two diagonal Gaussians. Networks emit log-variance;
// it is clamped to [-10, 10] before use.

#include <cmath>

#include "leap/core/tensor.hpp"

namespace leap {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

template <class T>
struct GaussianParams {
  Tensor<T> mean;
  Tensor<T> log_var;  // already clamped

  static GaussianParams from_raw(Tensor<T> mean, Tensor<T> raw_log_var) {
    if (mean.shape() != raw_log_var.shape())
      throw Error("gaussian params: mean " + shape_str(mean.shape()) +
                  " vs log-variance " + shape_str(raw_log_var.shape()));
    return {std::move(mean), clamp(raw_log_var, kLogVarMin, kLogVarMax)};
  }

  int dim() const { return int(mean.numel()); }
};

// mean + exp(log_var/2) * noise; differentiable w.r.t. both parameters.
template <class T>
Tensor<T> reparam_sample(const GaussianParams<T>& p, const Tensor<T>& noise) {
  if (noise.shape() != p.mean.shape())
    throw Error("reparam_sample: noise " + shape_str(noise.shape()) +
                " vs mean " + shape_str(p.mean.shape()));
  auto std_dev = exp(scale(p.log_var, 0.5));
  return add(p.mean, mul(std_dev, noise));
}

// KL(p || q) = sum_i [ (lq - lp)/2 + (var_p + (mu_p - mu_q)^2)/(2 var_q) - 1/2 ]
template <class T>
Tensor<T> kl_diag_gauss(const GaussianParams<T>& p, const GaussianParams<T>& q) {
  if (p.mean.shape() != q.mean.shape())
    throw Error("kl_diag_gauss: dimension mismatch " +
                shape_str(p.mean.shape()) + " vs " + shape_str(q.mean.shape()));
  // exp(lp - lq) rather than exp(lp)*exp(-lq): identical distributions give
  // exactly zero
  auto log_ratio = scale(sub(q.log_var, p.log_var), 0.5);
  auto var_ratio = exp(sub(p.log_var, q.log_var));
  auto inv_var_q = exp(neg(q.log_var));
  auto dmu = sub(p.mean, q.mean);
  auto quad = scale(add(var_ratio, mul(mul(dmu, dmu), inv_var_q)), 0.5);
  auto per_dim = add_scalar(add(log_ratio, quad), -0.5);
  return sum(per_dim);
}

}  // namespace leap
