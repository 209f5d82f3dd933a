#include <benchmark/benchmark.h>

#include <vector>

#include "safe/channel.hpp"
#include "safe/network.hpp"
#include "safe/ops.hpp"
#include "safe/optimizer.hpp"
#include "safe/pipeline.hpp"
#include "safe/rng.hpp"

namespace {

using namespace safe;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// 16 -> 16 channels, 3x3, stride 1, on a batch of 16 32x32 maps.
void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({16, c, 32, 32}, rng);
  const auto w = random_tensor({c, c, 3, 3}, rng);
  const auto b = random_tensor({c}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(1);
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = random_tensor({16, c, 32, 32}, rng, true);
  auto w = random_tensor({c, c, 3, 3}, rng, true);
  auto b = random_tensor({c}, rng, true);
  const auto target = random_tensor({16, c, 32, 32}, rng);
  for (auto _ : state) {
    backward(mse_loss(conv2d(x, w, b, 1, 1), target));
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ConvTransposeForward(benchmark::State& state) {
  Rng rng(2);
  const auto x = random_tensor({16, 32, 8, 8}, rng);
  const auto w = random_tensor({32, 16, 3, 3}, rng);
  const auto b = random_tensor({16}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv_transpose2d(x, w, b, 2, 1, 1));
}
BENCHMARK(BM_ConvTransposeForward)->Unit(benchmark::kMillisecond);

SafeConfig bench_config() {
  SafeConfig c;
  c.latent_channels = {8, 8};
  c.base_width = 16;
  c.height = c.width = 32;
  return c;
}

// Forward, backward and one Adam update on a batch of 16 images.
void BM_TrainStep(benchmark::State& state) {
  Rng rng(3);
  auto net = SafeNetwork::build(bench_config(), rng);
  const auto x = random_tensor({16, 3, 32, 32}, rng);
  const std::vector<std::size_t> subset{0, 1};
  const ChannelSpec channel{ChannelKind::Awgn, 10.0};
  AdamState adam;
  const LearningRates rates{{"*", 1e-3}};
  auto params = net.parameters();
  for (auto _ : state) {
    const auto out = forward_pipeline(net, x, channel, subset, rng);
    backward(mse_loss(out.reconstruction, x));
    adam_step(params, adam, rates);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Pipeline(benchmark::State& state) {
  Rng rng(4);
  const auto net = SafeNetwork::build(bench_config(), rng);
  const auto x = random_tensor({16, 3, 32, 32}, rng);
  const std::vector<std::size_t> subset{0, 1};
  const ChannelSpec channel{state.range(0) == 0 ? ChannelKind::Awgn : ChannelKind::Rayleigh, 10.0};
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(forward_pipeline(net, x, channel, subset, rng));
}
BENCHMARK(BM_Pipeline)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
