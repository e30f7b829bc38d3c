// Copyright 2026 The crossctx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include <vector>

#include "crossctx/codec.h"
#include "crossctx/conv.h"
#include "crossctx/model.h"
#include "crossctx/range_coder.h"
#include "crossctx/rng.h"
#include "crossctx/training.h"

namespace {

using namespace crossctx;

Tensor random_tensor(std::vector<int> dims, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv5x5(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const ConvSpec spec = ConvSpec::same(c, c, 5, MaskKind::kCausalA);
  const Tensor x = random_tensor({c, 16, 16}, 1);
  const Tensor w = random_tensor(spec.weight_dims(), 2);
  const Tensor b = random_tensor({c}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, w, b, spec));
  state.SetItemsProcessed(state.iterations() * c * c * 25 * 256);
}
BENCHMARK(BM_Conv5x5)->Arg(16)->Arg(64);

void BM_RangeCoderRoundTrip(benchmark::State& state) {
  const ScaleTable table{ScaleTableConfig{}};
  Rng rng(4);
  std::vector<int> symbols(1 << 16);
  for (int& s : symbols) s = 16 + rng.uniform_int(-3, 3);
  for (auto _ : state) {
    RangeEncoder enc;
    for (int s : symbols) enc.encode_symbol(table.cdf(30), s, 16);
    const auto bytes = enc.finish();
    RangeDecoder dec(bytes);
    int sum = 0;
    for (std::size_t i = 0; i < symbols.size(); ++i) sum += dec.decode_symbol(table.cdf(30), 16);
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(symbols.size()));
}
BENCHMARK(BM_RangeCoderRoundTrip);

void BM_Decode(benchmark::State& state) {
  ModelConfig m;
  m.context.kind = static_cast<ContextKind>(state.range(0));
  m.context.channels = 32;
  m.context.groups = 8;
  const CompressionModel model(m.resolve());
  SyntheticLatentSpec spec;
  spec.channels = 32;
  const LatentTensor y = quantize_round(generate_synthetic_latents(spec.resolve(), 1));
  const auto bytes = model.compress(y);
  for (auto _ : state) benchmark::DoNotOptimize(model.decompress(bytes));
  state.SetLabel(std::string(context_kind_name(m.context.kind)));
}
BENCHMARK(BM_Decode)
    ->Arg(static_cast<int>(ContextKind::kSpatial2d))
    ->Arg(static_cast<int>(ContextKind::kMask3d))
    ->Arg(static_cast<int>(ContextKind::kGrouped))
    ->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.model.context.channels = 32;
  cfg.model.context.groups = 8;
  cfg.synthetic.channels = 32;
  cfg.batch = 1;
  cfg.steps = 1;
  cfg.crop = 8;
  for (auto _ : state) benchmark::DoNotOptimize(train(cfg));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
