// Serial reference vs OpenMP kernels, plus STFT and one training iteration.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "emorank/config.h"
#include "emorank/features.h"
#include "emorank/kernels.h"
#include "emorank/synthcorpus.h"
#include "emorank/training.h"

using namespace emorank;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

template <auto Kernel>
void BM_matmul(benchmark::State& st) {
    const auto n = static_cast<std::size_t>(st.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> out(n * n);
    for (auto _ : st) {
        Kernel(a, b, out, n, n, n);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * n * n * n);
}

template <auto Kernel>
void BM_conv1d(benchmark::State& st) {
    const std::size_t t = static_cast<std::size_t>(st.range(0)), c = 256, k = 9;
    const auto x = random_vec(t * c, 3), w = random_vec(k * c * c, 4);
    std::vector<double> out(t * c);
    for (auto _ : st) {
        Kernel(x, w, out, t, c, c, k);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * t * c * c * k);
}

template <auto Kernel>
void BM_conv1d_grad_weight(benchmark::State& st) {
    const std::size_t t = static_cast<std::size_t>(st.range(0)), c = 256, k = 9;
    const auto x = random_vec(t * c, 3), g = random_vec(t * c, 5);
    std::vector<double> gw(k * c * c);
    for (auto _ : st) {
        Kernel(x, g, gw, t, c, c, k);
        benchmark::DoNotOptimize(gw.data());
    }
    st.SetItemsProcessed(st.iterations() * t * c * c * k);
}

template <bool Serial>
void BM_stft(benchmark::State& st) {
    const FeatureConfig cfg;
    const auto audio = random_vec(16000, 6);
    for (auto _ : st) {
        Tensor m = Serial ? serial::stft_magnitude(audio, cfg) : stft_magnitude(audio, cfg);
        benchmark::DoNotOptimize(m.data.data());
    }
}

void BM_train_iteration(benchmark::State& st) {
    RunConfig rc = preset("desk");
    rc.synth.utterances_per_cell = 10;
    std::mt19937_64 rng(1);
    const SynthCorpus sc = generate(rc.synth, rng);
    TrainState s = init_training(sc.corpus, rc.extractor, rc.train);
    for (auto _ : st) run_training(s, sc.corpus, rc.extractor, rc.train, s.iteration + 1);
}

}  // namespace

BENCHMARK(BM_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<kernels::matmul>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<kernels::serial::matmul_bt_acc>)->Name("matmul_bt_acc/serial")->Arg(256);
BENCHMARK(BM_matmul<kernels::matmul_bt_acc>)->Name("matmul_bt_acc/omp")->Arg(256);
BENCHMARK(BM_matmul<kernels::serial::matmul_at_acc>)->Name("matmul_at_acc/serial")->Arg(256);
BENCHMARK(BM_matmul<kernels::matmul_at_acc>)->Name("matmul_at_acc/omp")->Arg(256);
BENCHMARK(BM_conv1d<kernels::serial::conv1d>)->Name("conv1d/serial")->Arg(100);
BENCHMARK(BM_conv1d<kernels::conv1d>)->Name("conv1d/omp")->Arg(100);
BENCHMARK(BM_conv1d<kernels::serial::conv1d_grad_input>)->Name("conv1d_grad_input/serial")->Arg(100);
BENCHMARK(BM_conv1d<kernels::conv1d_grad_input>)->Name("conv1d_grad_input/omp")->Arg(100);
BENCHMARK(BM_conv1d_grad_weight<kernels::serial::conv1d_grad_weight>)->Name("conv1d_grad_weight/serial")->Arg(100);
BENCHMARK(BM_conv1d_grad_weight<kernels::conv1d_grad_weight>)->Name("conv1d_grad_weight/omp")->Arg(100);
BENCHMARK(BM_stft<true>)->Name("stft/direct_dft");
BENCHMARK(BM_stft<false>)->Name("stft/fftw_omp");
BENCHMARK(BM_train_iteration)->Name("train_iteration/desk")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
