#include "planlab/expert.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <ostream>

#include "json.hpp"

namespace planlab {

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) { return a > kSaturated - b ? kSaturated : a + b; }

std::vector<std::vector<Transition>> expand_all(const TaskMdp& mdp, const std::vector<StateKey>& level) {
  const auto n = static_cast<std::ptrdiff_t>(level.size());
  std::vector<std::vector<Transition>> out(level.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = mdp.expand(level[i]);
  return out;
}

}  // namespace

std::string UniquenessCertificate::describe() const {
  if (unique()) return "Unique";
  return "TiedCount(" + std::to_string(optimal_count) + ")";
}

ExpertTrajectory plan_optimal(const TaskMdp& mdp, const StateKey& s0, std::size_t cap) {
  struct Node {
    std::int32_t parent;
    ActionId action;
    std::uint64_t paths;  // number of shortest action sequences reaching the node
  };
  std::unordered_map<StateKey, std::int32_t, StateKeyHash> seen;
  std::vector<StateKey> keys{s0};
  std::vector<Node> nodes{{-1, kNoAction, 1}};
  seen.emplace(s0, 0);

  std::vector<std::int32_t> level{0};
  while (!level.empty()) {
    std::vector<StateKey> level_keys;
    level_keys.reserve(level.size());
    for (auto i : level) level_keys.push_back(keys[i]);
    const auto expansions = expand_all(mdp, level_keys);

    std::int32_t goal_node = -1;
    ActionId goal_action = kNoAction;
    std::uint64_t optimal = 0;
    std::vector<std::int32_t> next_level;
    const std::size_t next_begin = keys.size();
    for (std::size_t li = 0; li < level.size(); ++li) {
      const std::int32_t u = level[li];
      for (const auto& t : expansions[li]) {
        if (t.completes) {
          optimal = sat_add(optimal, nodes[u].paths);
          if (goal_node < 0) {
            goal_node = u;
            goal_action = t.action;
          }
          continue;
        }
        if (goal_node >= 0) continue;  // this is the last level; children are irrelevant
        auto it = seen.find(t.next);
        if (it == seen.end()) {
          const auto v = static_cast<std::int32_t>(keys.size());
          seen.emplace(t.next, v);
          keys.push_back(t.next);
          nodes.push_back({u, t.action, nodes[u].paths});
          next_level.push_back(v);
          if (keys.size() > cap) {
            throw StateBudgetExceeded("planner exceeded the budget of " + std::to_string(cap) + " states");
          }
        } else if (static_cast<std::size_t>(it->second) >= next_begin) {
          nodes[it->second].paths = sat_add(nodes[it->second].paths, nodes[u].paths);
        }
      }
    }

    if (goal_node >= 0) {
      std::vector<TrajectoryStep> rev{{keys[goal_node], goal_action}};
      for (std::int32_t v = goal_node; nodes[v].parent >= 0; v = nodes[v].parent) {
        rev.push_back({keys[nodes[v].parent], nodes[v].action});
      }
      ExpertTrajectory out;
      out.steps.steps.assign(rev.rbegin(), rev.rend());
      out.steps.success = true;
      out.steps.terminal_reward = 1;
      out.t_gt = static_cast<int>(out.steps.steps.size()) - 1;
      out.uniqueness.optimal_count = optimal;
      return out;
    }
    level = std::move(next_level);
  }
  throw GoalUnreachable("no successful trajectory exists from state " + s0.hex());
}

std::uint64_t count_successful_trajectories(const TaskMdp& mdp, const StateKey& s0, int t,
                                            std::size_t cap) {
  if (t < 0) return 0;
  std::map<StateKey, std::uint64_t> layer{{s0, 1}};
  for (int depth = 0;; ++depth) {
    std::vector<StateKey> keys;
    std::vector<std::uint64_t> counts;
    keys.reserve(layer.size());
    for (const auto& [k, c] : layer) {
      keys.push_back(k);
      counts.push_back(c);
    }
    const auto expansions = expand_all(mdp, keys);
    if (depth == t) {
      std::uint64_t total = 0;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        for (const auto& tr : expansions[i]) {
          if (tr.completes) total = sat_add(total, counts[i]);
        }
      }
      return total;
    }
    std::map<StateKey, std::uint64_t> next;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      for (const auto& tr : expansions[i]) {
        auto& c = next[tr.next];
        c = sat_add(c, counts[i]);
      }
    }
    if (next.size() > cap) {
      throw StateBudgetExceeded("trajectory enumeration exceeded the budget of " + std::to_string(cap) +
                                " states per layer");
    }
    layer = std::move(next);
  }
}

UniquenessCertificate certify_uniqueness(const TaskMdp& mdp, const StateKey& s0, int t_gt,
                                         std::size_t cap) {
  return {count_successful_trajectories(mdp, s0, t_gt, cap)};
}

ExpertPolicy::ExpertPolicy(std::unordered_map<StateKey, ExpertEntry, StateKeyHash> entries)
    : entries_(std::move(entries)) {}

const ExpertEntry& ExpertPolicy::entry(const StateKey& s) const {
  const auto it = entries_.find(s);
  if (it == entries_.end()) throw ExpertCoverageMissing("expert policy does not cover state " + s.hex());
  return it->second;
}

std::vector<StateKey> ExpertPolicy::states() const {
  std::vector<StateKey> out;
  out.reserve(entries_.size());
  for (const auto& [k, e] : entries_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<StateKey> ExpertPolicy::dead_ends() const {
  std::vector<StateKey> out;
  for (const auto& [k, e] : entries_) {
    if (e.provenance == Provenance::DeadEnd) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::unordered_map<StateKey, ActionId, StateKeyHash> trajectory_actions(const ExpertTrajectory& traj) {
  std::unordered_map<StateKey, ActionId, StateKeyHash> out;
  for (const auto& [s, a] : traj.steps.steps) out.emplace(s, a);
  return out;
}

}  // namespace

ExpertPolicy complete_expert_policy(const TaskMdp& mdp, const ExpertTrajectory& traj,
                                    std::span<const StateKey> states, std::size_t cap) {
  const auto on_traj = trajectory_actions(traj);
  std::vector<StateKey> roots(states.begin(), states.end());
  for (const auto& [s, a] : traj.steps.steps) roots.push_back(s);
  const StateGraph graph = explore(mdp, roots, kUnboundedDepth, cap);
  const std::vector<int> dist = completion_distances(graph);

  std::unordered_map<StateKey, ExpertEntry, StateKeyHash> entries;
  entries.reserve(states.size());
  for (const auto& s : states) {
    const std::int32_t i = *graph.find(s);
    ExpertEntry e;
    e.t_star = dist[i];
    if (auto it = on_traj.find(s); it != on_traj.end()) {
      e.action = it->second;
      e.provenance = Provenance::OnTrajectory;
    } else if (dist[i] >= 0) {
      e.provenance = Provenance::Replanned;
      for (const auto& edge : graph.out_edges(i)) {
        const bool optimal = dist[i] == 0 ? edge.completes : (!edge.completes && dist[edge.target] == dist[i] - 1);
        if (optimal) {
          e.action = edge.action;  // edges are in ascending action order
          break;
        }
      }
    }
    entries.emplace(s, e);
  }
  return ExpertPolicy(std::move(entries));
}

ExpertPolicy complete_expert_policy_replanning(const TaskMdp& mdp, const ExpertTrajectory& traj,
                                               std::span<const StateKey> states, std::size_t cap) {
  const auto on_traj = trajectory_actions(traj);
  std::unordered_map<StateKey, ExpertEntry, StateKeyHash> entries;
  for (const auto& s : states) {
    ExpertEntry e;
    try {
      const auto plan = plan_optimal(mdp, s, cap);
      e.t_star = plan.t_gt;
      e.action = plan.at(0).action;
      e.provenance = Provenance::Replanned;
    } catch (const GoalUnreachable&) {
      e.provenance = Provenance::DeadEnd;
    }
    if (auto it = on_traj.find(s); it != on_traj.end()) {
      e.action = it->second;
      e.provenance = Provenance::OnTrajectory;
    }
    entries.emplace(s, e);
  }
  return ExpertPolicy(std::move(entries));
}

int step_reward(const TaskMdp& mdp, const ExpertPolicy& expert, const StateKey& s, ActionId a) {
  if (!is_valid_action(mdp, s, a)) {
    throw InvalidAction("action " + std::to_string(index_of(a)) + " is not valid in state " + s.hex());
  }
  const auto& e = expert.entry(s);
  return e.action != kNoAction && e.action == a ? 1 : 0;
}

SingleTurnDataset build_dataset(const TaskMdp& mdp, const ExpertPolicy& expert, const ExpertTrajectory& traj,
                                std::span<const StateKey> extra_states, DatasetMode mode) {
  SingleTurnDataset out;
  std::unordered_map<StateKey, bool, StateKeyHash> included;
  auto add = [&](const StateKey& s) {
    if (included.contains(s)) return;
    const auto& e = expert.entry(s);
    if (e.action == kNoAction) return;
    included.emplace(s, true);
    out.entries.push_back({s, e.action, mdp.valid_actions(s)});
  };
  for (const auto& [s, a] : traj.steps.steps) add(s);
  if (mode == DatasetMode::AllStates) {
    for (const auto& s : extra_states) add(s);
  }
  if (out.entries.empty()) throw EmptyDataset("dataset has no labelled states");
  out.weights.assign(out.entries.size(), 1.0 / static_cast<double>(out.entries.size()));
  return out;
}

SingleTurnDataset merge_datasets(std::span<const SingleTurnDataset> parts) {
  SingleTurnDataset out;
  for (const auto& p : parts) out.entries.insert(out.entries.end(), p.entries.begin(), p.entries.end());
  if (out.entries.empty()) throw EmptyDataset("merged dataset is empty");
  out.weights.assign(out.entries.size(), 1.0 / static_cast<double>(out.entries.size()));
  return out;
}

void write_dataset_jsonl(std::ostream& out, const SingleTurnDataset& dataset) {
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& e = dataset.entries[i];
    nlohmann::ordered_json rec;
    rec["state_key"] = e.state.hex();
    rec["expert_action"] = index_of(e.expert_action);
    auto& va = rec["valid_actions"] = nlohmann::ordered_json::array();
    for (ActionId a : e.valid_actions) va.push_back(index_of(a));
    rec["weight"] = dataset.weights[i];
    out << rec.dump() << '\n';
  }
}

}  // namespace planlab
