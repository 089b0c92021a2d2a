#ifndef CONGEN_PARAMS_HPP
#define CONGEN_PARAMS_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "congen/matrix.hpp"

namespace congen {

enum class Init { Embedding, Glorot, Zero, One };

template <class S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> m;  // Adam first moment
  Mat<S> v;  // Adam second moment
  Init init = Init::Zero;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Linear warmup to base_lr, then inverse-sqrt decay.
inline double warmup_rsqrt_lr(double base_lr, long warmup, long step) {
  if (step < 1) step = 1;
  if (warmup < 1) warmup = 1;
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base_lr * std::min(s / w, std::sqrt(w / s));
}

// Named parameter tensors plus their gradient buffers and Adam state.
// Registration order is fixed, which makes initialization and checkpoint
// layout deterministic.
template <class S>
class ParamStore {
 public:
  Param<S>& add(const std::string& name, int rows, int cols, Init init) {
    if (by_name_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
    auto p = std::make_unique<Param<S>>();
    p->name = name;
    p->value = Mat<S>::Zero(rows, cols);
    p->grad = Mat<S>::Zero(rows, cols);
    p->m = Mat<S>::Zero(rows, cols);
    p->v = Mat<S>::Zero(rows, cols);
    p->init = init;
    Param<S>* raw = p.get();
    by_name_[name] = raw;
    params_.push_back(std::move(p));
    return *raw;
  }

  Param<S>& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::runtime_error("unknown parameter: " + name);
    return *it->second;
  }

  const std::vector<std::unique_ptr<Param<S>>>& params() const { return params_; }
  std::vector<std::unique_ptr<Param<S>>>& params() { return params_; }

  long step() const { return step_; }
  void set_step(long s) { step_ = s; }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void init_values(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& p : params_) {
      Mat<S>& w = p->value;
      switch (p->init) {
        case Init::Zero:
          w.setZero();
          break;
        case Init::One:
          w.setOnes();
          break;
        case Init::Embedding:
          for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c)
              w(r, c) = static_cast<S>(rng.uniform(-0.08, 0.08));
          break;
        case Init::Glorot: {
          const double lim = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
          for (int r = 0; r < w.rows(); ++r)
            for (int c = 0; c < w.cols(); ++c)
              w(r, c) = static_cast<S>(rng.uniform(-lim, lim));
          break;
        }
      }
    }
  }

  void zero_grads() {
    for (auto& p : params_) p->grad.setZero();
  }

  // One Adam update at the given effective learning rate; increments the
  // shared step counter.
  void adam_step(double lr, const AdamConfig& cfg = {}) {
    ++step_;
    const S b1 = static_cast<S>(cfg.beta1);
    const S b2 = static_cast<S>(cfg.beta2);
    const S corr1 = static_cast<S>(1.0 - std::pow(cfg.beta1, static_cast<double>(step_)));
    const S corr2 = static_cast<S>(1.0 - std::pow(cfg.beta2, static_cast<double>(step_)));
    for (auto& p : params_) {
      p->m = b1 * p->m + (S(1) - b1) * p->grad;
      p->v = (b2 * p->v.array() + (S(1) - b2) * p->grad.array().square()).matrix();
      auto mhat = p->m.array() / corr1;
      auto vhat = p->v.array() / corr2;
      p->value.array() -= static_cast<S>(lr) * mhat / (vhat.sqrt() + static_cast<S>(cfg.eps));
    }
  }

  bool grads_finite() const {
    for (const auto& p : params_) {
      if (!p->grad.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<std::unique_ptr<Param<S>>> params_;
  std::unordered_map<std::string, Param<S>*> by_name_;
  long step_ = 0;
};

}  // namespace congen

#endif  // CONGEN_PARAMS_HPP
