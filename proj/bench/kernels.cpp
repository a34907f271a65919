// SPDX-License-Identifier: Apache-2.0
// OpenMP kernels next to their serial references. Thread cap comes from
// NEURTEX_THREADS (or the OpenMP default).
#include <benchmark/benchmark.h>

#include "neurtex/metrics.hpp"
#include "neurtex/rng.hpp"
#include "neurtex/texture.hpp"
#include "neurtex/views.hpp"
#include "neurtex/warp.hpp"

using namespace neurtex;

namespace {

struct Fixture {
  Scene scene = generate_scene(0, 42);
  std::vector<CameraView> views;
  std::vector<RayBuffer> bufs;
  NeuralTexture tex;
  Image grad, gray0, gray1;

  Fixture() {
    views = make_pan_sequence(scene, 2, 5);
    for (const auto& v : views) bufs.push_back(ray_cast(scene, v));
    tex = NeuralTexture::for_scene(scene, 32, 32, 3, 6);
    grad = Image(bufs[0].height, bufs[0].width, 3);
    Rng rng(7);
    for (float& v : grad.data()) v = static_cast<float>(uniform(rng, -1, 1));
    gray0 = to_grayscale(render_photoreal(scene, bufs[0], views[0]));
    gray1 = to_grayscale(render_photoreal(scene, bufs[1], views[1]));
  }
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

void BM_ray_cast(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(ray_cast(fx().scene, fx().views[0]));
}
void BM_ray_cast_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(ray_cast_serial(fx().scene, fx().views[0]));
}
void BM_project(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(project(fx().tex, fx().bufs[0]));
}
void BM_project_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(project_serial(fx().tex, fx().bufs[0]));
}
void BM_project_adjoint(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(project_adjoint(fx().grad, fx().bufs[0], fx().tex));
}
void BM_project_adjoint_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(project_adjoint_serial(fx().grad, fx().bufs[0], fx().tex));
}
void BM_build_warp(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(build_warp(f.views[0], f.bufs[0], f.views[1], f.bufs[1]));
}
void BM_build_warp_serial(benchmark::State& s) {
  const auto& f = fx();
  for (auto _ : s) benchmark::DoNotOptimize(build_warp_serial(f.views[0], f.bufs[0], f.views[1], f.bufs[1]));
}
void BM_estimate_flow(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(estimate_flow(fx().gray0, fx().gray1));
}
void BM_estimate_flow_serial(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(estimate_flow_serial(fx().gray0, fx().gray1));
}

}  // namespace

BENCHMARK(BM_ray_cast)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ray_cast_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_project)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_project_serial)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_project_adjoint)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_project_adjoint_serial)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_build_warp)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_build_warp_serial)->Unit(benchmark::kMicrosecond)->UseRealTime();
BENCHMARK(BM_estimate_flow)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_estimate_flow_serial)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
