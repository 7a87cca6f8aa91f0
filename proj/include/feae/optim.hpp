#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "feae/autograd.hpp"
#include "feae/errors.hpp"

namespace feae {

struct AdamOptions {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step with decoupled weight decay, then zeroes the gradients.
/// Validates every gradient before touching any value, so a failure leaves
/// all parameters unchanged.
template <class T>
void adam_step(const std::vector<Param<T>*>& params, const AdamOptions& opt) {
  for (const auto* p : params)
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p->name);

  for (auto* p : params) {
    p->step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, double(p->step));
    const double bc2 = 1.0 - std::pow(opt.beta2, double(p->step));
    auto& w = p->value.data();
    auto& g = p->grad.data();
    auto& m = p->adam_m.data();
    auto& v = p->adam_v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = T(opt.beta1 * m[i] + (1.0 - opt.beta1) * gi);
      v[i] = T(opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi);
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      const double update = m_hat / (std::sqrt(v_hat) + opt.eps);
      w[i] = T(w[i] - opt.lr * opt.weight_decay * w[i] - opt.lr * update);
    }
    p->zero_grad();
  }
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares analytic gradients against central differences
/// (f(theta + h) - f(theta - h)) / 2h, entry by entry. The relative error of
/// an entry uses max(|analytic|, |numeric|, 1e-8) as its denominator.
/// `loss_fn` records a scalar loss on the tape it is given; it must be
/// deterministic. Param grads are left zeroed.
template <class T>
GradCheckReport grad_check(const std::function<Var<T>(Tape<T>&)>& loss_fn,
                           const std::vector<Param<T>*>& params, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<T> tape;
    auto loss = loss_fn(tape);
    if (!std::isfinite(double(loss.value()(0, 0)))) throw NumericError("non-finite loss in grad_check");
    tape.backward(loss);
  }
  std::vector<Matrix<T>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad);

  auto eval = [&]() {
    Tape<T> tape;
    const double v = double(loss_fn(tape).value()(0, 0));
    if (!std::isfinite(v)) throw NumericError("non-finite loss in grad_check");
    return v;
  };

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T orig = w[i];
      w[i] = T(orig + h);
      const double fp = eval();
      w[i] = T(orig - h);
      const double fm = eval();
      w[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = double(analytic[pi].data()[i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_relative_error) {
        report = {rel, params[pi]->name, i, a, numeric};
      }
    }
  }
  for (auto* p : params) p->zero_grad();
  return report;
}

}  // namespace feae
