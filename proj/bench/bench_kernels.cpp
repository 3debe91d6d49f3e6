// Serial reference vs OpenMP kernels on the canonical kitchen tasks.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>

#include "planlab/grpo.hpp"
#include "planlab/harness.hpp"

using namespace planlab;
using kitchen::TaskKind;

namespace {

double best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const char* kernel, const char* task, double serial_ms, double parallel_ms) {
  std::printf("%-14s %-20s %10.2f %10.2f %8.2fx\n", kernel, task, serial_ms, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-14s %-20s %10s %10s %9s\n", "kernel", "task", "serial_ms", "omp_ms", "speedup");
  for (TaskKind task : {TaskKind::CheeseBurger, TaskKind::DoubleCheeseBurger}) {
    const auto name = std::string(kitchen::task_name(task));
    const auto mdp = kitchen::build_task(task, kitchen::canonical_layout(task));
    const StateKey roots[] = {mdp->initial_state()};
    row("explore", name.c_str(), best_of(3, [&] { explore_serial(*mdp, roots); }),
        best_of(3, [&] { explore(*mdp, roots); }));

    const auto ctx = prepare_task(mdp);
    const auto ref = harness::make_reference(*mdp, *ctx.expert, harness::RefKind::EpsilonMixture, 0.5, ctx.reachable);
    const auto ds = build_dataset(*mdp, *ctx.expert, ctx.trajectory, ctx.reachable, DatasetMode::AllStates);
    row("exact_update", name.c_str(), best_of(5, [&] { exact_update_serial(ref, ref, ds, 1.0); }),
        best_of(5, [&] { exact_update(ref, ref, ds, 1.0); }));
    row("dp", name.c_str(), best_of(3, [&] { dp_success_prob_serial(*mdp, ref, *ctx.expert, ctx.reachable); }),
        best_of(3, [&] { dp_success_prob(*mdp, ref, *ctx.expert, ctx.reachable); }));
    row("mc_20k", name.c_str(), best_of(1, [&] { mc_success_prob_serial(*mdp, ref, mdp->initial_state(), 20000, 1); }),
        best_of(1, [&] { mc_success_prob(*mdp, ref, mdp->initial_state(), 20000, 1); }));
  }
  return 0;
}
