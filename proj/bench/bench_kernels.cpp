#include "beeps/analysis.hpp"
#include "beeps/election.hpp"
#include "beeps/harness.hpp"

#include <benchmark/benchmark.h>

using namespace beeps;

namespace
{
    ExperimentConfig trial_config()
    {
        ExperimentConfig cfg;
        cfg.algo = "double-safe";
        cfg.ns = {16};
        cfg.trials = 2000;
        cfg.seed = 1;
        return cfg;
    }

    /// Distribution a few steps into the constant-state probe at n=3.
    struct StepInput
    {
        BeepMachine machine;
        ConfigurationDistribution dist;
    };

    const StepInput &step_input()
    {
        static const StepInput input = [] {
            SubroutineProbe probe(subroutine_constant_state());
            BeepMachine m = extract_machine(probe);
            auto d = initial_distribution(m, 3);
            for (int i = 0; i < 12; ++i)
            {
                d = step_exact_serial(m, d);
            }
            return StepInput{std::move(m), std::move(d)};
        }();
        return input;
    }
}

static void BM_trials_parallel(benchmark::State &state)
{
    const auto cfg = trial_config();
    for (auto _ : state)
    {
        benchmark::DoNotOptimize(run_trials(cfg));
    }
}
BENCHMARK(BM_trials_parallel)->Unit(benchmark::kMillisecond);

static void BM_trials_serial(benchmark::State &state)
{
    const auto cfg = trial_config();
    for (auto _ : state)
    {
        benchmark::DoNotOptimize(run_trials_serial(cfg));
    }
}
BENCHMARK(BM_trials_serial)->Unit(benchmark::kMillisecond);

static void BM_step_parallel(benchmark::State &state)
{
    const auto &in = step_input();
    for (auto _ : state)
    {
        benchmark::DoNotOptimize(step_exact(in.machine, in.dist));
    }
    state.counters["configurations"] = static_cast<double>(in.dist.mass.size());
}
BENCHMARK(BM_step_parallel)->Unit(benchmark::kMillisecond);

static void BM_step_serial(benchmark::State &state)
{
    const auto &in = step_input();
    for (auto _ : state)
    {
        benchmark::DoNotOptimize(step_exact_serial(in.machine, in.dist));
    }
    state.counters["configurations"] = static_cast<double>(in.dist.mass.size());
}
BENCHMARK(BM_step_serial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
