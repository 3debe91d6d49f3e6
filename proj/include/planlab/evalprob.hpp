#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "planlab/env_core.hpp"
#include "planlab/expert.hpp"

namespace planlab {

inline constexpr int kUnreachable = -1;

// T*(s): offset of the completing pair when starting from s (a one-action
// completion has T* = 0), or kUnreachable.
struct MinTurnsTable {
  std::unordered_map<StateKey, int, StateKeyHash> values;

  int at(const StateKey& s) const;  // throws PolicyStateMissing
};

MinTurnsTable min_turns(const TaskMdp& mdp, std::span<const StateKey> states,
                        std::size_t cap = kDefaultStateCap);

// Minimal-turn success probability per state.
struct SuccessProbTable {
  std::unordered_map<StateKey, double, StateKeyHash> values;
  std::unordered_map<StateKey, int, StateKeyHash> t_star;
  std::string policy_id;

  double at(const StateKey& s) const;  // throws PolicyStateMissing
  // Rows state_key,t_star,p_value sorted by key.
  void write_csv(std::ostream& out) const;
};

// P(s) = pi(a*|s) P(f(s, a*)) with a* the expert action; the completing pair
// contributes pi(a*|s) alone, dead ends get 0. The table covers `states` and
// every state reached from them along expert actions. Filled level by level
// in increasing T*, each level in parallel.
SuccessProbTable dp_success_prob(const TaskMdp& mdp, const Policy& policy, const ExpertPolicy& expert,
                                 std::span<const StateKey> states, std::string policy_id = "");

// Memoized recursion summing over every valid action; reference for
// dp_success_prob.
SuccessProbTable dp_success_prob_serial(const TaskMdp& mdp, const Policy& policy, const ExpertPolicy& expert,
                                        std::span<const StateKey> states, std::string policy_id = "");

struct McEstimate {
  double estimate = 0.0;
  double ci_halfwidth = 0.0;  // 4 sqrt(p (1 - p) / N)
  long episodes = 0;
  long successes = 0;
  int t_star = 0;
};

// Fraction of rollouts completing within T*(s0) + 1 actions. Episode i uses
// seed episode_seed(seed, i). Throws UnreachableStart.
McEstimate mc_success_prob(const TaskMdp& mdp, const Policy& policy, const StateKey& s0, long episodes,
                           std::uint64_t seed);
McEstimate mc_success_prob_serial(const TaskMdp& mdp, const Policy& policy, const StateKey& s0, long episodes,
                                  std::uint64_t seed);

struct StateComparison {
  StateKey state;
  int t_star = 0;
  double p_star = 0.0;
  double p_ref = 0.0;
  double r_star = 0.0;  // pi*(a*|s)
  double r_ref = 0.0;
};

struct ImprovementReport {
  std::vector<StateComparison> states;  // sorted by key; finite-T* states only
  std::vector<StateComparison> violations_multi_turn;   // P* < P_ref - tol
  std::vector<StateComparison> violations_per_state;    // pi*(a*|s) < pi_ref(a*|s) - tol
  double min_margin = 0.0;                              // min over states of P* - P_ref

  nlohmann::ordered_json to_json() const;
};

inline constexpr double kImprovementTol = 1e-12;

ImprovementReport improvement_report(const TaskMdp& mdp, const Policy& pi_star, const Policy& pi_ref,
                                     const ExpertPolicy& expert, std::span<const StateKey> states);

// Everything theorem checks need about one task instance.
struct TaskContext {
  std::shared_ptr<const TaskMdp> mdp;
  ExpertTrajectory trajectory;
  std::vector<StateKey> reachable;  // sorted by (depth, key)
  std::shared_ptr<const ExpertPolicy> expert;
};

// Plans, explores the full reachable set and completes the expert over it.
TaskContext prepare_task(std::shared_ptr<const TaskMdp> mdp, std::size_t cap = kDefaultStateCap);

// Success probability at s0 of the subtask ending at expert pair k_star.
// Throws IndexOutOfRange.
double subtask_success_prob(std::shared_ptr<const TaskMdp> parent, const ExpertTrajectory& expert, int k_star,
                            const Policy& policy);

}  // namespace planlab
