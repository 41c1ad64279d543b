#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace muze::nn {

// A named, trainable tensor owned elsewhere.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
};

using ParamRefs = std::vector<ParamRef>;
using GradMap = std::unordered_map<std::string, Matrix>;

// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
// name so the same optimizer instance can be stepped across batches.
class AdamW {
public:
  AdamW(double learning_rate, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(learning_rate), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  long step_count() const { return t_; }

  void step(const ParamRefs& params, const GradMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& p : params) {
      auto git = grads.find(p.name);
      if (git == grads.end()) continue;
      const Matrix& g = git->second;
      auto& [m, v] = moments_[p.name];
      if (m.empty()) {
        m = Matrix(g.rows, g.cols);
        v = Matrix(g.rows, g.cols);
      }
      Matrix& w = *p.value;
      for (size_t i = 0; i < w.size(); ++i) {
        const double gi = g.d[i];
        m.d[i] = static_cast<float>(beta1_ * m.d[i] + (1.0 - beta1_) * gi);
        v.d[i] = static_cast<float>(beta2_ * v.d[i] + (1.0 - beta2_) * gi * gi);
        const double mhat = m.d[i] / bc1;
        const double vhat = v.d[i] / bc2;
        double x = w.d[i];
        x -= lr_ * weight_decay_ * x;  // decoupled decay
        x -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        w.d[i] = static_cast<float>(x);
      }
    }
  }

private:
  double lr_;
  double weight_decay_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<std::string, std::pair<Matrix, Matrix>> moments_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
inline void clip_grad_norm(GradMap& grads, double max_norm) {
  double sq = 0;
  for (const auto& [_, g] : grads) {
    for (float x : g.d) sq += static_cast<double>(x) * x;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0) return;
  const float s = static_cast<float>(max_norm / norm);
  for (auto& [_, g] : grads) {
    for (float& x : g.d) x *= s;
  }
}

}  // namespace muze::nn
