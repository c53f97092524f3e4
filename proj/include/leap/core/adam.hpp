#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "leap/core/params.hpp"

namespace leap {

// Adam with bias correction; beta1/beta2/eps fixed at the usual defaults,
// learning rate configurable.
template <class T>
class Adam {
 public:
  explicit Adam(double lr = 1e-3) : lr_(lr) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }

  void step(ParamMap<T>& params) {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1_, double(step_));
    double bc2 = 1.0 - std::pow(beta2_, double(step_));
    for (auto& [name, p] : params) {
      auto& slot = slots_[name];
      if (slot.m.size() != p.numel()) {
        slot.m.assign(p.numel(), T(0));
        slot.v.assign(p.numel(), T(0));
      }
      auto& g = p.grad();
      auto& d = p.data();
      for (size_t i = 0; i < d.size(); ++i) {
        slot.m[i] = T(beta1_) * slot.m[i] + T(1.0 - beta1_) * g[i];
        slot.v[i] = T(beta2_) * slot.v[i] + T(1.0 - beta2_) * g[i] * g[i];
        double mh = double(slot.m[i]) / bc1;
        double vh = double(slot.v[i]) / bc2;
        d[i] -= T(lr_ * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

  // Moment access for checkpoint resume.
  std::vector<T>& moment1(const std::string& name) { return slots_[name].m; }
  std::vector<T>& moment2(const std::string& name) { return slots_[name].v; }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long step_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

}  // namespace leap
