#include "planlab/evalprob.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <ostream>

#include "planlab/kitchen.hpp"

namespace planlab {

int MinTurnsTable::at(const StateKey& s) const {
  const auto it = values.find(s);
  if (it == values.end()) throw PolicyStateMissing("no T* recorded for state " + s.hex());
  return it->second;
}

MinTurnsTable min_turns(const TaskMdp& mdp, std::span<const StateKey> states, std::size_t cap) {
  const StateGraph graph = explore(mdp, states, kUnboundedDepth, cap);
  const auto dist = completion_distances(graph);
  MinTurnsTable out;
  for (const auto& s : states) out.values[s] = dist[*graph.find(s)];
  return out;
}

double SuccessProbTable::at(const StateKey& s) const {
  const auto it = values.find(s);
  if (it == values.end()) throw PolicyStateMissing("no success probability recorded for state " + s.hex());
  return it->second;
}

void SuccessProbTable::write_csv(std::ostream& out) const {
  std::vector<StateKey> keys;
  keys.reserve(values.size());
  for (const auto& [k, v] : values) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  out << "state_key,t_star,p_value\n";
  char buf[64];
  for (const auto& k : keys) {
    std::snprintf(buf, sizeof buf, ",%d,%.17g\n", t_star.at(k), values.at(k));
    out << k.hex() << buf;
  }
}

namespace {

double prob_of(const Policy& policy, const StateKey& s, std::span<const ActionId> actions, ActionId a) {
  const auto probs = policy.distribution(s, actions);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] == a) return probs[i];
  }
  return 0.0;
}

// `states` plus everything reached from them by expert actions.
std::vector<StateKey> expert_closure(const TaskMdp& mdp, const ExpertPolicy& expert, std::span<const StateKey> states) {
  std::unordered_map<StateKey, bool, StateKeyHash> seen;
  std::vector<StateKey> out;
  std::vector<StateKey> work(states.begin(), states.end());
  while (!work.empty()) {
    StateKey s = std::move(work.back());
    work.pop_back();
    if (!seen.emplace(s, true).second) continue;
    const auto& e = expert.entry(s);
    if (e.action != kNoAction && e.t_star > 0) work.push_back(mdp.transition(s, e.action));
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SuccessProbTable dp_success_prob(const TaskMdp& mdp, const Policy& policy, const ExpertPolicy& expert,
                                 std::span<const StateKey> states, std::string policy_id) {
  const auto all = expert_closure(mdp, expert, states);
  std::map<int, std::vector<StateKey>> levels;
  SuccessProbTable out;
  out.policy_id = std::move(policy_id);
  for (const auto& s : all) {
    const auto& e = expert.entry(s);
    out.t_star[s] = e.t_star;
    if (e.action == kNoAction || e.t_star < 0) {
      out.values[s] = 0.0;
    } else {
      levels[e.t_star].push_back(s);
    }
  }
  for (const auto& [t, level] : levels) {
    const auto n = static_cast<std::ptrdiff_t>(level.size());
    std::vector<double> vals(level.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 32)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        const StateKey& s = level[i];
        const ActionId a = expert.entry(s).action;
        const auto actions = mdp.valid_actions(s);
        const double pi = prob_of(policy, s, actions, a);
        vals[i] = t == 0 ? pi : pi * out.values.at(mdp.transition(s, a));
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    for (std::size_t i = 0; i < level.size(); ++i) out.values[level[i]] = vals[i];
  }
  return out;
}

SuccessProbTable dp_success_prob_serial(const TaskMdp& mdp, const Policy& policy, const ExpertPolicy& expert,
                                        std::span<const StateKey> states, std::string policy_id) {
  SuccessProbTable out;
  out.policy_id = std::move(policy_id);
  std::unordered_map<StateKey, double, StateKeyHash> memo;
  // The recursion only descends along T*, so depth is bounded by the horizon
  // of the longest plan.
  auto eval = [&](auto&& self, const StateKey& s) -> double {
    if (auto it = memo.find(s); it != memo.end()) return it->second;
    const auto& e = expert.entry(s);
    out.t_star[s] = e.t_star;
    double p = 0.0;
    if (e.action != kNoAction) {
      const auto expansions = mdp.expand(s);
      std::vector<ActionId> actions;
      for (const auto& tr : expansions) actions.push_back(tr.action);
      const auto probs = policy.distribution(s, actions);
      for (std::size_t i = 0; i < expansions.size(); ++i) {
        const int r = expansions[i].action == e.action ? 1 : 0;
        if (r == 0 || probs[i] == 0.0) continue;
        p += probs[i] * r * (expansions[i].completes ? 1.0 : self(self, expansions[i].next));
      }
    }
    memo[s] = p;
    out.values[s] = p;
    return p;
  };
  for (const auto& s : states) eval(eval, s);
  return out;
}

namespace {

McEstimate mc_impl(const TaskMdp& mdp, const Policy& policy, const StateKey& s0, long episodes, std::uint64_t seed,
                   bool parallel) {
  if (episodes < 1) throw UsageError("episodes must be at least 1");
  int t_star = 0;
  try {
    t_star = plan_optimal(mdp, s0).t_gt;
  } catch (const GoalUnreachable&) {
    throw UnreachableStart("minimal-turn success is undefined: goal unreachable from " + s0.hex());
  }
  long successes = 0;
  if (parallel) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 256) reduction(+ : successes)
    for (long i = 0; i < episodes; ++i) {
      try {
        successes += rollout(mdp, policy, s0, t_star + 1, episode_seed(seed, static_cast<std::uint64_t>(i)))
                         .trajectory.success;
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (long i = 0; i < episodes; ++i) {
      successes += rollout(mdp, policy, s0, t_star + 1, episode_seed(seed, static_cast<std::uint64_t>(i)))
                       .trajectory.success;
    }
  }
  McEstimate out;
  out.episodes = episodes;
  out.successes = successes;
  out.t_star = t_star;
  out.estimate = static_cast<double>(successes) / static_cast<double>(episodes);
  out.ci_halfwidth = 4.0 * std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(episodes));
  return out;
}

}  // namespace

McEstimate mc_success_prob(const TaskMdp& mdp, const Policy& policy, const StateKey& s0, long episodes,
                           std::uint64_t seed) {
  return mc_impl(mdp, policy, s0, episodes, seed, true);
}

McEstimate mc_success_prob_serial(const TaskMdp& mdp, const Policy& policy, const StateKey& s0, long episodes,
                                  std::uint64_t seed) {
  return mc_impl(mdp, policy, s0, episodes, seed, false);
}

nlohmann::ordered_json ImprovementReport::to_json() const {
  auto rows = [](const std::vector<StateComparison>& v) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : v) {
      arr.push_back({{"state_key", c.state.hex()},
                     {"t_star", c.t_star},
                     {"p_star", c.p_star},
                     {"p_ref", c.p_ref},
                     {"r_star", c.r_star},
                     {"r_ref", c.r_ref}});
    }
    return arr;
  };
  nlohmann::ordered_json j;
  j["violations_thm3"] = rows(violations_multi_turn);
  j["violations_assumption1"] = rows(violations_per_state);
  j["summary"] = {{"states_checked", states.size()},
                  {"multi_turn_violations", violations_multi_turn.size()},
                  {"per_state_violations", violations_per_state.size()},
                  {"min_margin", min_margin},
                  {"tolerance", kImprovementTol}};
  return j;
}

ImprovementReport improvement_report(const TaskMdp& mdp, const Policy& pi_star, const Policy& pi_ref,
                                     const ExpertPolicy& expert, std::span<const StateKey> states) {
  const auto star = dp_success_prob(mdp, pi_star, expert, states, "pi_star");
  const auto ref = dp_success_prob(mdp, pi_ref, expert, states, "pi_ref");
  std::vector<StateKey> sorted(states.begin(), states.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  ImprovementReport out;
  bool first = true;
  for (const auto& s : sorted) {
    const auto& e = expert.entry(s);
    if (e.t_star < 0 || e.action == kNoAction) continue;
    StateComparison c;
    c.state = s;
    c.t_star = e.t_star;
    c.p_star = star.at(s);
    c.p_ref = ref.at(s);
    const auto actions = mdp.valid_actions(s);
    c.r_star = prob_of(pi_star, s, actions, e.action);
    c.r_ref = prob_of(pi_ref, s, actions, e.action);
    const double margin = c.p_star - c.p_ref;
    out.min_margin = first ? margin : std::min(out.min_margin, margin);
    first = false;
    if (c.p_star < c.p_ref - kImprovementTol) out.violations_multi_turn.push_back(c);
    if (c.r_star < c.r_ref - kImprovementTol) out.violations_per_state.push_back(c);
    out.states.push_back(std::move(c));
  }
  return out;
}

TaskContext prepare_task(std::shared_ptr<const TaskMdp> mdp, std::size_t cap) {
  TaskContext ctx;
  ctx.trajectory = plan_optimal(*mdp, mdp->initial_state(), cap);
  ctx.trajectory.uniqueness = certify_uniqueness(*mdp, mdp->initial_state(), ctx.trajectory.t_gt, cap);
  ctx.reachable = reachable_states(*mdp, mdp->initial_state(), kUnboundedDepth, cap);
  ctx.expert = std::make_shared<const ExpertPolicy>(complete_expert_policy(*mdp, ctx.trajectory, ctx.reachable, cap));
  ctx.mdp = std::move(mdp);
  return ctx;
}

double subtask_success_prob(std::shared_ptr<const TaskMdp> parent, const ExpertTrajectory& expert, int k_star,
                            const Policy& policy) {
  const auto sub = kitchen::make_subtask(std::move(parent), expert, k_star);
  ExpertTrajectory prefix;
  prefix.steps.steps.assign(expert.steps.steps.begin(), expert.steps.steps.begin() + k_star + 1);
  prefix.steps.success = true;
  prefix.steps.terminal_reward = 1;
  prefix.t_gt = k_star;
  prefix.uniqueness = expert.uniqueness;
  const StateKey s0 = sub->initial_state();
  const auto states = reachable_states(*sub, s0, kUnboundedDepth);
  const ExpertPolicy sub_expert = complete_expert_policy(*sub, prefix, states);
  const std::vector<StateKey> root{s0};
  return dp_success_prob(*sub, policy, sub_expert, root).at(s0);
}

}  // namespace planlab
