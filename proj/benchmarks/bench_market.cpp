#include <benchmark/benchmark.h>

#include <vector>

#include <gridshare/network.hpp>
#include <gridshare/prosumer.hpp>
#include <gridshare/tariff.hpp>
#include <gridshare/welfare.hpp>

using namespace gridshare;

namespace {

// Total feeder impedance stays fixed as the chain grows so the exact power
// flow remains well inside the solvable region at every benchmarked size.
RadialNetwork chain(int n_bus) {
    RadialNetwork net;
    net.v0 = 1.02;
    net.v_min = 0.90;
    net.v_max = 1.10;
    const double scale = 12.0 / n_bus;
    for (int b = 1; b <= n_bus; ++b) {
        net.buses.push_back({b, 0.005 * scale});
        net.lines.push_back(
            {b - 1, b, (0.015 + 0.002 * (b % 5)) * scale, 0.010 * scale});
    }
    return net;
}

std::vector<Prosumer> population(int n_bus, double g_each) {
    std::vector<Prosumer> out;
    for (int b = 1; b <= n_bus; ++b) {
        Prosumer p;
        p.id = b;
        p.bus = b;
        p.g = g_each;
        p.devices.push_back({8.0, 2.0, 0.0, 6.0});
        p.devices.push_back({5.0, 1.5, 0.0, 4.0});
        out.push_back(p);
    }
    return out;
}

void bm_sensitivities(benchmark::State& state) {
    RadialNetwork net = chain(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_sensitivities(net));
    }
}
BENCHMARK(bm_sensitivities)->Arg(12)->Arg(64)->Arg(256);

void bm_solve_central(benchmark::State& state) {
    const int n_bus = 12;
    RadialNetwork net = chain(n_bus);
    SensitivityMatrices sens = build_sensitivities(net);
    std::vector<Prosumer> pros = population(n_bus, state.range(0) * 0.1);
    Tariff tariff{0.12, 0.06};
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_central(sens, pros, tariff));
    }
}
BENCHMARK(bm_solve_central)->Arg(5)->Arg(30)->Arg(60);

void bm_exact_pf(benchmark::State& state) {
    const int n_bus = static_cast<int>(state.range(0));
    RadialNetwork net = chain(n_bus);
    Eigen::VectorXd Z = Eigen::VectorXd::Constant(n_bus, 0.48 / n_bus);
    for (auto _ : state) {
        benchmark::DoNotOptimize(exact_voltages(net, Z));
    }
}
BENCHMARK(bm_exact_pf)->Arg(12)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
