#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "planlab/env_core.hpp"

namespace planlab {

// Number of distinct optimal trajectories; Unique iff count == 1.
struct UniquenessCertificate {
  std::uint64_t optimal_count = 0;  // saturates at UINT64_MAX

  bool unique() const { return optimal_count == 1; }
  std::string describe() const;  // "Unique" or "TiedCount(n)"
  bool operator==(const UniquenessCertificate&) const = default;
};

inline constexpr const char* kLexicographicTieBreak =
    "breadth-first, ties broken by ascending action index at every depth";

// Minimal-length successful trajectory. `t_gt` is the index of the completing
// pair, so the trajectory holds t_gt + 1 (state, action) pairs.
struct ExpertTrajectory {
  Trajectory steps;
  int t_gt = 0;
  UniquenessCertificate uniqueness;
  std::string tie_break_rule = kLexicographicTieBreak;

  // (s_k, a_k) of the expert trajectory.
  const TrajectoryStep& at(int k) const { return steps.steps.at(static_cast<std::size_t>(k)); }
};

// Breadth-first planner. Returns the lexicographically smallest (by action
// index) minimal-length successful trajectory, and counts how many optimal
// trajectories the shortest-path DAG holds. Throws GoalUnreachable,
// StateBudgetExceeded.
ExpertTrajectory plan_optimal(const TaskMdp& mdp, const StateKey& s0,
                              std::size_t cap = kDefaultStateCap);

// Exhaustive count of action sequences of exactly t + 1 pairs whose final
// pair completes the task (layered enumeration, independent of the planner).
std::uint64_t count_successful_trajectories(const TaskMdp& mdp, const StateKey& s0, int t,
                                            std::size_t cap = kDefaultStateCap);

// Unique iff exactly one successful trajectory has t_gt + 1 pairs.
UniquenessCertificate certify_uniqueness(const TaskMdp& mdp, const StateKey& s0, int t_gt,
                                         std::size_t cap = kDefaultStateCap);

enum class Provenance { OnTrajectory, Replanned, DeadEnd };

struct ExpertEntry {
  ActionId action = kNoAction;  // kNoAction at dead ends
  Provenance provenance = Provenance::DeadEnd;
  int t_star = -1;              // minimal turns to the completing pair; -1 if unreachable
};

// Expert action for every covered state: the trajectory's action on it, the
// first action of a re-rooted optimal plan elsewhere.
class ExpertPolicy {
 public:
  ExpertPolicy() = default;
  explicit ExpertPolicy(std::unordered_map<StateKey, ExpertEntry, StateKeyHash> entries);

  bool covers(const StateKey& s) const { return entries_.contains(s); }
  const ExpertEntry& entry(const StateKey& s) const;  // throws ExpertCoverageMissing
  ActionId action_of(const StateKey& s) const { return entry(s).action; }
  std::size_t size() const { return entries_.size(); }

  // Sorted by key.
  std::vector<StateKey> states() const;
  std::vector<StateKey> dead_ends() const;

 private:
  std::unordered_map<StateKey, ExpertEntry, StateKeyHash> entries_;
};

// Expert actions over `states` (the transition closure of `states` is
// searched internally). Dead ends are recorded with kNoAction.
ExpertPolicy complete_expert_policy(const TaskMdp& mdp, const ExpertTrajectory& traj,
                                    std::span<const StateKey> states,
                                    std::size_t cap = kDefaultStateCap);

// Reference for complete_expert_policy: one plan_optimal per off-trajectory
// state. Quadratic; for small fixtures only.
ExpertPolicy complete_expert_policy_replanning(const TaskMdp& mdp, const ExpertTrajectory& traj,
                                               std::span<const StateKey> states,
                                               std::size_t cap = kDefaultStateCap);

// r(s, a) = 1{a = expert(s)}; 0 for every action at dead ends.
int step_reward(const TaskMdp& mdp, const ExpertPolicy& expert, const StateKey& s, ActionId a);

struct DatasetEntry {
  StateKey state;
  ActionId expert_action;
  std::vector<ActionId> valid_actions;
};

// Single-turn bandit problem: query states with expert labels and a query
// distribution over the entries.
struct SingleTurnDataset {
  std::vector<DatasetEntry> entries;
  std::vector<double> weights;

  std::size_t size() const { return entries.size(); }
};

enum class DatasetMode { TrajectoryOnly, AllStates };

// TrajectoryOnly: the t_gt + 1 trajectory states, uniform weights. AllStates
// adds `extra_states` (deduplicated; dead ends skipped), still uniform.
SingleTurnDataset build_dataset(const TaskMdp& mdp, const ExpertPolicy& expert,
                                const ExpertTrajectory& traj,
                                std::span<const StateKey> extra_states, DatasetMode mode);

// Concatenates datasets and re-weights uniformly over all entries.
SingleTurnDataset merge_datasets(std::span<const SingleTurnDataset> parts);

// JSONL records {state_key, expert_action, valid_actions[], weight}.
void write_dataset_jsonl(std::ostream& out, const SingleTurnDataset& dataset);

}  // namespace planlab
