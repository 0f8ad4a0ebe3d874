// Serial reference vs OpenMP kernels on the reference architecture's shapes.
// Run with OMP_NUM_THREADS set to compare scaling; results are bit-identical.

#include "devstab/kernels.hpp"
#include "devstab/model.hpp"
#include "devstab/rng.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using namespace devstab;
namespace k = devstab::kernels;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_uniform(-1.0, 1.0);
    return v;
}

// Args: in_channels, out_channels, spatial size.
struct ConvFixture {
    k::ConvShape shape;
    std::vector<double> in, w, b, out, d_out, dw, db, d_in;

    explicit ConvFixture(const benchmark::State& state) {
        shape = {static_cast<int>(state.range(0)), static_cast<int>(state.range(1)), static_cast<int>(state.range(2)),
                 static_cast<int>(state.range(2))};
        in = random_vector(static_cast<std::size_t>(shape.in_channels) * shape.padded_plane(), 1);
        w = random_vector(static_cast<std::size_t>(shape.out_channels) * shape.in_channels * 9, 2);
        b = random_vector(shape.out_channels, 3);
        out.assign(static_cast<std::size_t>(shape.out_channels) * shape.plane(), 0.0);
        d_out = random_vector(out.size(), 4);
        dw.assign(w.size(), 0.0);
        db.assign(b.size(), 0.0);
        d_in.assign(in.size(), 0.0);
    }
};

template <auto Fn>
void BM_conv_forward(benchmark::State& state) {
    ConvFixture f(state);
    for (auto _ : state) {
        Fn(f.shape, f.in, f.w, f.b, f.out);
        benchmark::DoNotOptimize(f.out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.out.size()) * f.shape.in_channels * 9);
}

template <auto Fn>
void BM_conv_backward(benchmark::State& state) {
    ConvFixture f(state);
    for (auto _ : state) {
        Fn(f.shape, f.in, f.w, f.d_out, f.dw, f.db, f.d_in);
        benchmark::DoNotOptimize(f.dw.data());
    }
}

template <auto Fn>
void BM_dense_forward(benchmark::State& state) {
    const int rows = static_cast<int>(state.range(0)), cols = static_cast<int>(state.range(1));
    const auto w = random_vector(static_cast<std::size_t>(rows) * cols, 5);
    const auto b = random_vector(rows, 6);
    const auto in = random_vector(cols, 7);
    std::vector<double> out(rows);
    for (auto _ : state) {
        Fn(rows, cols, w, b, in, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <auto Fn>
void BM_dense_backward(benchmark::State& state) {
    const int rows = static_cast<int>(state.range(0)), cols = static_cast<int>(state.range(1));
    const auto w = random_vector(static_cast<std::size_t>(rows) * cols, 5);
    const auto in = random_vector(cols, 7);
    const auto d_out = random_vector(rows, 8);
    std::vector<double> dw(w.size()), db(rows), d_in(cols);
    for (auto _ : state) {
        Fn(rows, cols, w, in, d_out, dw, db, d_in);
        benchmark::DoNotOptimize(dw.data());
    }
}

template <auto Fn>
void BM_gaussian_noise(benchmark::State& state) {
    std::vector<float> in(static_cast<std::size_t>(state.range(0)) * state.range(0) * 3, 0.5f), out(in.size());
    for (auto _ : state) {
        Fn(in, 0.2, 42, 0, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(in.size()));
}

void BM_batch_gradient(benchmark::State& state) {
    const Exec exec = state.range(0) == 0 ? Exec::serial : Exec::parallel;
    const auto params = init_params(Architecture::reference(10), 1);
    CounterRng rng(9);
    std::vector<ImageTensor> images, counterparts;
    for (int i = 0; i < 32; ++i) {
        ImageTensor a(32, 32), b(32, 32);
        for (float& v : a.pixels()) v = static_cast<float>(rng.next_double());
        for (float& v : b.pixels()) v = static_cast<float>(rng.next_double());
        images.push_back(std::move(a));
        counterparts.push_back(std::move(b));
    }
    std::vector<TrainExample> batch;
    for (int i = 0; i < 32; ++i) batch.push_back({&images[i], &counterparts[i], i % 10});
    const LossConfig loss{StabilityLoss::relative_entropy, 0.1};
    for (auto _ : state) {
        auto g = gradient(params, batch, loss, exec);
        benchmark::DoNotOptimize(g.loss);
    }
    state.SetItemsProcessed(state.iterations() * 32);
}

// Layer 1 (3 -> 16 @ 32x32) and layer 2 (16 -> 32 @ 16x16) of the reference network.
#define CONV_ARGS ->Args({3, 16, 32})->Args({16, 32, 16})
BENCHMARK(BM_conv_forward<k::serial::conv3x3_forward>) CONV_ARGS;
BENCHMARK(BM_conv_forward<k::omp::conv3x3_forward>) CONV_ARGS->UseRealTime();
BENCHMARK(BM_conv_backward<k::serial::conv3x3_backward>) CONV_ARGS;
BENCHMARK(BM_conv_backward<k::omp::conv3x3_backward>) CONV_ARGS->UseRealTime();
#undef CONV_ARGS
BENCHMARK(BM_dense_forward<k::serial::dense_forward>)->Args({64, 2048});
BENCHMARK(BM_dense_forward<k::omp::dense_forward>)->Args({64, 2048})->UseRealTime();
BENCHMARK(BM_dense_backward<k::serial::dense_backward>)->Args({64, 2048});
BENCHMARK(BM_dense_backward<k::omp::dense_backward>)->Args({64, 2048})->UseRealTime();
BENCHMARK(BM_gaussian_noise<k::serial::gaussian_noise>)->Arg(32)->Arg(256);
BENCHMARK(BM_gaussian_noise<k::omp::gaussian_noise>)->Arg(32)->Arg(256)->UseRealTime();
BENCHMARK(BM_batch_gradient)->Arg(0)->Arg(1)->UseRealTime()->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
