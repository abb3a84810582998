// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"

namespace ta2cl {

/// Adam with decoupled weight decay. Parameters are bound by pointer on
/// the first step and must keep their shapes afterwards.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(lr > 0.0) || !(weight_decay >= 0.0)) throw ConfigError("AdamW: need lr > 0 and weight_decay >= 0");
  }

  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
    if (params.size() != grads.size()) throw ShapeError("AdamW: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Mat* p : params) {
        m_.emplace_back(p->rows(), p->cols());
        v_.emplace_back(p->rows(), p->cols());
      }
    }
    if (m_.size() != params.size()) throw ShapeError("AdamW: parameter count changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Mat& p = *params[i];
      require_same_shape(p, grads[i], "AdamW");
      auto pf = p.flat();
      auto gf = grads[i].flat();
      auto mf = m_[i].flat();
      auto vf = v_[i].flat();
      for (std::size_t j = 0; j < pf.size(); ++j) {
        mf[j] = b1_ * mf[j] + (1.0 - b1_) * gf[j];
        vf[j] = b2_ * vf[j] + (1.0 - b2_) * gf[j] * gf[j];
        const double mhat = mf[j] / c1, vhat = vf[j] / c2;
        pf[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * pf[j]);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace ta2cl
