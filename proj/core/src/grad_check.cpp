#include "safe/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "safe/rng.hpp"

namespace safe {

namespace {

double projected(const Tensor64& out, const std::vector<double>& weights) {
  double sum = 0.0;
  const auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) sum += weights[i] * d[i];
  return sum;
}

}  // namespace

GradCheckReport grad_check(const std::string& name, const DifferentiableOp& op,
                           std::vector<Tensor64> inputs, double tolerance, double step) {
  GradCheckReport report{name, 1, 0.0, tolerance, false};

  for (auto& in : inputs) {
    in = in.detach();
    in.set_requires_grad(true);
  }
  const Tensor64 out = op(inputs);

  Rng rng(0x9c4ecc);
  std::vector<double> weights(out.numel());
  for (auto& w : weights) w = rng.uniform(-1.0, 1.0);
  detail::backward_from(out, std::span<const double>(weights));

  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double> analytic(inputs[k].grad().begin(), inputs[k].grad().end());
    auto values = inputs[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = projected(op(inputs), weights);
      values[i] = saved - step;
      const double minus = projected(op(inputs), weights);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace safe
