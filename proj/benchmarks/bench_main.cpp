#include <benchmark/benchmark.h>

#include <hybridgrid/network_io.hpp>
#include <hybridgrid/opf.hpp>
#include <hybridgrid/sensitivity.hpp>

using namespace hybridgrid;

namespace {

std::string data_path(const std::string& name) {
    return std::string(HYBRIDGRID_DATA_DIR) + "/" + name;
}

struct Case27 {
    NetworkModel model;
    SetpointSet sp;
    GridState state;
    AdmittanceMatrices adm;

    Case27() : model(load_network(data_path("cigre27_network.json"))) {
        sp = SetpointSet::zeros(model.buses.size());
        sp.v_mag[0] = 1.0;
        sp.v_mag[21] = 0.9;
        sp.p[4] = -0.08;
        sp.q[4] = -0.02;
        sp.p[10] = 0.10;
        sp.p[19] = -0.05;
        sp.p[25] = 0.06;
        sp.p[26] = -0.02;
        SolveOptions opt;
        opt.tolerance = 1e-12;
        state = solve(model, sp, opt).state;
        adm = build_admittance(model);
    }
};

const Case27& case27() {
    static Case27 c;
    return c;
}

OpfConfig bench_opf_config() {
    OpfConfig cfg;
    OpfDevice supercap;
    supercap.name = "supercap";
    supercap.bus = 24;
    supercap.p_min_pu = -0.02;
    supercap.p_max_pu = 0.02;
    supercap.is_storage = true;
    supercap.e_tot_pu_h = 0.0015;
    OpfDevice bess;
    bess.name = "bess";
    bess.bus = 26;
    bess.p_min_pu = -0.2;
    bess.p_max_pu = 0.2;
    bess.is_storage = true;
    bess.e_tot_pu_h = 0.2;
    cfg.devices = {supercap, bess};
    cfg.ic_limits = {OpfIcLimits{}, OpfIcLimits{}, OpfIcLimits{}};
    cfg.island_slack_bus = 24;
    return cfg;
}

void BM_LoadflowColdStart(benchmark::State& state) {
    const Case27& c = case27();
    for (auto _ : state) benchmark::DoNotOptimize(solve(c.model, c.sp));
}
BENCHMARK(BM_LoadflowColdStart);

void BM_LoadflowWarmStart(benchmark::State& state) {
    const Case27& c = case27();
    SolveOptions opt;
    opt.tolerance = 1e-12;
    for (auto _ : state) benchmark::DoNotOptimize(solve(c.model, c.sp, opt, &c.state));
}
BENCHMARK(BM_LoadflowWarmStart);

void BM_SensitivityMatrices(benchmark::State& state) {
    const Case27& c = case27();
    for (auto _ : state)
        benchmark::DoNotOptimize(compute_sensitivities(c.model, c.adm, c.state));
}
BENCHMARK(BM_SensitivityMatrices);

void BM_OpfBuildSolve(benchmark::State& state) {
    const Case27& c = case27();
    const OpfConfig cfg = bench_opf_config();
    const SensitivityMatrices scs = compute_sensitivities(c.model, c.adm, c.state);
    for (auto _ : state) {
        const OpfProblem p =
            build_opf(c.model, c.state, scs, OperatingState::GridConnected, cfg, c.sp);
        benchmark::DoNotOptimize(solve_opf(p));
    }
}
BENCHMARK(BM_OpfBuildSolve);

void BM_JacobianAssembly(benchmark::State& state) {
    const Case27& c = case27();
    const SystemLayout layout = build_layout(c.model);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            jacobian(c.model, c.adm, layout, c.sp, c.state, LossDerivativeMode::Full));
}
BENCHMARK(BM_JacobianAssembly);

} // namespace

BENCHMARK_MAIN();
