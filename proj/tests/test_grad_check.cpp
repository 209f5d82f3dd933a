#include <gtest/gtest.h>

#include <set>

#include "safe/grad_check.hpp"
#include "safe/ops.hpp"
#include "test_util.hpp"

using namespace safe;

TEST(GradCheck, OracleSuiteCoversEveryOpAndPasses) {
  const auto reports = run_oracle_suite(20, 2024, 1e-4);
  std::set<std::string> names;
  for (const auto& r : reports) {
    names.insert(r.name);
    EXPECT_TRUE(r.passed) << r.name << " max rel err " << r.max_rel_error;
    EXPECT_EQ(r.points, 20u);
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
  const std::set<std::string> expected{"conv2d", "conv_transpose2d", "maxpool2d", "prelu",
                                       "relu",   "mse_loss",         "power_normalize"};
  EXPECT_EQ(names, expected);
}

TEST(GradCheck, DetectsWrongGradient) {
  // y = 2x with a backward pass claiming dy/dx = 3.
  const DifferentiableOp wrong = [](std::span<const Tensor64> in) {
    const auto& x = in[0];
    std::vector<double> data(x.data().begin(), x.data().end());
    for (auto& v : data) v *= 2.0;
    return detail::make_result<double>(x.shape(), std::move(data), {x}, [x](detail::Node<double>& self) {
      auto& g = x.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * self.grad[i];
    });
  };
  Rng rng(3);
  const auto report = grad_check("wrong", wrong, {test::random_tensor<double>({4}, rng, -1, 1, true)}, 1e-4);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 0.1);
}

TEST(GradCheck, AcceptsCorrectComposite) {
  const DifferentiableOp op = [](std::span<const Tensor64> in) { return relu(conv2d(in[0], in[1], in[2], 1, 1)); };
  Rng rng(5);
  // Positive inputs keep every relu on its linear side.
  std::vector<Tensor64> inputs{test::random_tensor<double>({1, 2, 4, 4}, rng, 0.1, 1, true),
                               test::random_tensor<double>({2, 2, 3, 3}, rng, 0.1, 1, true),
                               test::random_tensor<double>({2}, rng, 0.5, 1, true)};
  const auto report = grad_check("conv+relu", op, inputs, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}
