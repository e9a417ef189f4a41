#ifndef INTRODRIVE_GRAD_CHECK_HPP
#define INTRODRIVE_GRAD_CHECK_HPP

// Central finite-difference gradient checker. The function under test is
// re-evaluated without a tape for every perturbed coordinate, so it must be
// deterministic (disable dropout or fix its RNG per call).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "introdrive/tensor.hpp"

namespace introdrive {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst;  // "param#k[i]" of the worst coordinate
};

/// Returns max over all parameter coordinates of
/// |analytic - central_difference| / max(1, |analytic|).
inline GradCheckReport grad_check_report(const std::function<Tensor(Tape*)>& f,
                                         const std::vector<Tensor*>& params, double eps) {
  if (eps < 1e-7 || eps > 1e-3)
    throw ContractError("grad_check eps must lie in [1e-7, 1e-3]");

  Tape tape;
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    tape.watch(*p);
  }
  Tensor y = f(&tape);
  if (y.size() != 1) throw ShapeError("grad_check target must be scalar");
  if (!std::isfinite(y.item())) throw EvalError("grad_check: function value is not finite");
  tape.backward(y);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(tape.grad(*p));

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* data = params[k]->mutable_data();
    for (std::int64_t i = 0; i < params[k]->size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = f(nullptr).item();
      data[i] = saved - eps;
      const double down = f(nullptr).item();
      data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw EvalError("grad_check: non-finite value at perturbed parameter");
      const double numeric = (up - down) / (2.0 * eps);
      const double ana = analytic[k][static_cast<std::size_t>(i)];
      const double rel = std::abs(ana - numeric) / std::max(1.0, std::abs(ana));
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "param#" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

inline double grad_check(const std::function<Tensor(Tape*)>& f, const std::vector<Tensor*>& params,
                         double eps) {
  return grad_check_report(f, params, eps).max_rel_err;
}

}  // namespace introdrive

#endif
