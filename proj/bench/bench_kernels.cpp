// Compares the OpenMP forward kernels against the serial reference on a
// realistic workload and reports throughput for both.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "echelon/nn.hpp"
#include "echelon/nn_reference.hpp"

using namespace echelon;

namespace {

using Clock = std::chrono::steady_clock;

double run_ms(const auto& fn, int reps) {
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    const int n_kib = argc > 1 ? std::atoi(argv[1]) : 64;
    const int reps = argc > 2 ? std::atoi(argv[2]) : 5;

    nn::Hyper h;
    h.window = 64;
    h.filters = 32;
    h.embed_dim = 8;
    h.hidden = 64;
    const nn::ParamSet model = nn::init_model(h, 7);

    std::mt19937_64 rng(11);
    std::vector<uint8_t> bytes(static_cast<size_t>(n_kib) * 1024);
    for (auto& b : bytes) b = static_cast<uint8_t>(rng());
    const auto tokens = nn::tokens_from_bytes(bytes, h.window);

    volatile float sink = 0.f;
    const double omp_ms = run_ms([&] { sink = nn::forward(model, tokens).probability; }, reps);
    const double ref_ms = run_ms([&] { sink = nn::reference::forward(model, tokens).probability; }, reps);
    (void)sink;

    nn::ParamSet grad = nn::ParamSet::zeros(h);
    const double bwd_ms = run_ms(
        [&] {
            for (auto& t : nn::tensor_refs(grad)) std::fill(t.data->begin(), t.data->end(), 0.f);
            nn::backward(model, tokens, {}, 1, grad);
        },
        reps);

    const double mb = static_cast<double>(bytes.size()) / (1024.0 * 1024.0);
    std::printf("input %d KiB, W=%d F=%d D=%d, %d reps\n", n_kib, h.window, h.filters, h.embed_dim, reps);
    std::printf("forward (openmp)    %8.3f ms  (%.1f MB/s)\n", omp_ms, mb / (omp_ms / 1000.0));
    std::printf("forward (reference) %8.3f ms  (%.1f MB/s)\n", ref_ms, mb / (ref_ms / 1000.0));
    std::printf("backward (openmp)   %8.3f ms\n", bwd_ms);
    std::printf("speedup forward: %.2fx\n", ref_ms / omp_ms);
    return 0;
}
