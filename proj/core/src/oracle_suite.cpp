#include <algorithm>
#include <numeric>

#include "safe/channel.hpp"
#include "safe/grad_check.hpp"
#include "safe/ops.hpp"
#include "safe/rng.hpp"

namespace safe {

namespace {

Tensor64 random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor64(std::move(shape), std::move(v));
}

// Magnitudes in [0.1, 1] with random sign: at least 0.1 away from the kink.
Tensor64 away_from_zero(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(0.1, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return Tensor64(std::move(shape), std::move(v));
}

// Distinct values on a 0.1 grid plus small jitter, so every 2x2 window has a
// unique maximum separated by far more than the finite-difference step.
Tensor64 distinct_values(Shape shape, Rng& rng) {
  std::vector<std::size_t> order(shape_numel(shape));
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  std::vector<double> v(order.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(order[i]) + rng.uniform(0.0, 0.01);
  return Tensor64(std::move(shape), std::move(v));
}

GradCheckReport merge(GradCheckReport total, const GradCheckReport& point) {
  total.points += 1;
  total.max_rel_error = std::max(total.max_rel_error, point.max_rel_error);
  total.passed = total.passed && point.passed;
  return total;
}

}  // namespace

std::vector<GradCheckReport> run_oracle_suite(std::size_t points, std::uint64_t seed, double tolerance) {
  Rng rng(seed);
  std::vector<GradCheckReport> reports;
  auto run = [&](const std::string& name, auto make_point) {
    GradCheckReport total{name, 0, 0.0, tolerance, true};
    for (std::size_t p = 0; p < points; ++p) {
      auto [op, inputs] = make_point();
      total = merge(total, grad_check(name, op, std::move(inputs), tolerance));
    }
    reports.push_back(total);
  };

  run("conv2d", [&] {
    const std::size_t stride = 1 + rng.below(2);
    const std::size_t padding = rng.below(2);
    DifferentiableOp op = [stride, padding](std::span<const Tensor64> in) {
      return conv2d(in[0], in[1], in[2], stride, padding);
    };
    return std::pair{op, std::vector<Tensor64>{random_tensor({2, 2, 5, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
                                               random_tensor({3}, rng)}};
  });

  run("conv_transpose2d", [&] {
    DifferentiableOp op = [](std::span<const Tensor64> in) {
      return conv_transpose2d(in[0], in[1], in[2], 2, 1, 1);
    };
    return std::pair{op, std::vector<Tensor64>{random_tensor({2, 2, 3, 2}, rng), random_tensor({2, 3, 3, 3}, rng),
                                               random_tensor({3}, rng)}};
  });

  run("maxpool2d", [&] {
    DifferentiableOp op = [](std::span<const Tensor64> in) { return maxpool2d(in[0]); };
    return std::pair{op, std::vector<Tensor64>{distinct_values({1, 2, 4, 4}, rng)}};
  });

  run("prelu", [&] {
    DifferentiableOp op = [](std::span<const Tensor64> in) { return prelu(in[0], in[1]); };
    return std::pair{op, std::vector<Tensor64>{away_from_zero({2, 3, 2, 2}, rng),
                                               Tensor64::scalar(rng.uniform(0.05, 0.5))}};
  });

  run("relu", [&] {
    DifferentiableOp op = [](std::span<const Tensor64> in) { return relu(in[0]); };
    return std::pair{op, std::vector<Tensor64>{away_from_zero({2, 3, 2, 2}, rng)}};
  });

  run("mse_loss", [&] {
    DifferentiableOp op = [](std::span<const Tensor64> in) { return mse_loss(in[0], in[1]); };
    return std::pair{op, std::vector<Tensor64>{random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 3, 2, 2}, rng)}};
  });

  run("power_normalize", [&] {
    DifferentiableOp op = [](std::span<const Tensor64> in) { return power_normalize(in[0]); };
    return std::pair{op, std::vector<Tensor64>{random_tensor({2, 3, 2, 2}, rng)}};
  });

  return reports;
}

}  // namespace safe
