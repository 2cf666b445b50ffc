// Microbenchmarks for the per-token and per-group hot paths: advantage
// normalization, the two completion grammars, trajectory flattening, and
// the surrogate objective.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "procrit/grpo.hpp"
#include "procrit/parsing.hpp"
#include "procrit/types.hpp"

namespace {

using namespace procrit;

void BM_GroupAdvantages(benchmark::State& state) {
    const std::size_t size = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 gen(7);
    std::vector<double> rewards(size);
    for (double& r : rewards) r = (static_cast<int>(gen() % 13) - 6) * 0.5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(group_advantages(rewards, 1e-4));
    }
}
BENCHMARK(BM_GroupAdvantages)->Arg(8)->Arg(64)->Arg(512);

void BM_ParseReasoning(benchmark::State& state) {
    std::string think(static_cast<std::size_t>(state.range(0)), 'x');
    for (std::size_t i = 60; i < think.size(); i += 61) think[i] = ' ';
    const std::string reply = "<think>" + think + "</think>\n<answer>yes</answer>";
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_reasoning(reply));
    }
}
BENCHMARK(BM_ParseReasoning)->Arg(256)->Arg(4096);

void BM_ParseCritique(benchmark::State& state) {
    std::string feedback(static_cast<std::size_t>(state.range(0)), 'y');
    const std::string reply = "<feedback>" + feedback + "</feedback>\n<score>1</score>";
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_critique(reply));
    }
}
BENCHMARK(BM_ParseCritique)->Arg(256)->Arg(4096);

void BM_FlattenTrajectory(benchmark::State& state) {
    const std::size_t length = static_cast<std::size_t>(state.range(0));
    std::vector<RoleStep> steps;
    for (std::size_t i = 0; i < length; ++i) {
        steps.push_back(RoleStep{"Analyst " + std::to_string(i),
                                 std::string(120, 'z') + " step body",
                                 i + 1 == length ? NextAction::FinalAnswer
                                                 : NextAction::Continue});
    }
    const Trajectory traj = Trajectory::create(
        "bench", std::move(steps), Prediction::make_valid(Label::Sarcastic, "yes"), length + 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(flatten_trajectory(traj));
    }
}
BENCHMARK(BM_FlattenTrajectory)->Arg(2)->Arg(7);

void BM_ClippedSurrogate(benchmark::State& state) {
    const std::size_t tokens = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 gen(11);
    TokenSequence seq;
    for (std::size_t i = 0; i < tokens; ++i) {
        const double base = -1.0 - static_cast<double>(gen() % 100) / 50.0;
        seq.old_logps.push_back(base);
        seq.new_logps.push_back(base + (static_cast<int>(gen() % 21) - 10) * 0.01);
        seq.ref_logps.push_back(base);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(clipped_surrogate(seq, 0.8, 0.2, 0.02));
    }
}
BENCHMARK(BM_ClippedSurrogate)->Arg(64)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
