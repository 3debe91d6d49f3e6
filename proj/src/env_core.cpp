#include "planlab/env_core.hpp"

#include <algorithm>
#include <deque>
#include <ostream>

#include "json.hpp"

namespace planlab {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string StateKey::hex() const {
  std::string out;
  out.reserve(bytes_.size() * 2);
  for (unsigned char c : bytes_) {
    out.push_back(kHexDigits[c >> 4]);
    out.push_back(kHexDigits[c & 0xF]);
  }
  return out;
}

StateKey StateKey::from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw UsageError("state key hex has odd length");
  std::string bytes;
  bytes.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_value(hex[i]);
    const int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw UsageError("state key hex has a non-hex digit");
    bytes.push_back(static_cast<char>((hi << 4) | lo));
  }
  return StateKey(std::move(bytes));
}

std::vector<Transition> TaskMdp::expand(const StateKey& s) const {
  std::vector<Transition> out;
  for (ActionId a : valid_actions(s)) {
    out.push_back({a, transition(s, a), completion(s, a)});
  }
  return out;
}

bool is_valid_action(const TaskMdp& mdp, const StateKey& s, ActionId a) {
  const auto actions = mdp.valid_actions(s);
  return std::binary_search(actions.begin(), actions.end(), a);
}

StateKey step(const TaskMdp& mdp, const StateKey& s, ActionId a) {
  if (!is_valid_action(mdp, s, a)) {
    throw InvalidAction("action " + std::to_string(index_of(a)) + " is not valid in state " + s.hex());
  }
  return mdp.transition(s, a);
}

int is_success(const TaskMdp& mdp, const StateKey& s, ActionId a) {
  if (!is_valid_action(mdp, s, a)) {
    throw InvalidAction("action " + std::to_string(index_of(a)) + " is not valid in state " + s.hex());
  }
  return mdp.completion(s, a) ? 1 : 0;
}

std::size_t Rng::categorical(std::span<const double> probs) {
  const double u = uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  // Rounding left u above the accumulated mass.
  return last_positive;
}

EpisodeOutcome rollout(const TaskMdp& mdp, const Policy& policy, const StateKey& s0, int max_turns,
                       std::uint64_t seed) {
  if (max_turns < 1) throw UsageError("rollout needs max_turns >= 1");
  EpisodeOutcome outcome;
  outcome.rng_seed = seed;
  Rng rng(seed);
  StateKey s = s0;
  for (int turn = 0; turn < max_turns; ++turn) {
    const auto actions = mdp.valid_actions(s);
    const auto probs = policy.distribution(s, actions);
    const ActionId a = actions[rng.categorical(probs)];
    outcome.trajectory.steps.push_back({s, a});
    if (mdp.completion(s, a)) {
      outcome.trajectory.success = true;
      outcome.trajectory.terminal_reward = 1;
      break;
    }
    s = mdp.transition(s, a);
  }
  outcome.turns_used = static_cast<int>(outcome.trajectory.steps.size());
  outcome.timed_out = !outcome.trajectory.success;
  return outcome;
}

bool is_consistent(const TaskMdp& mdp, const Trajectory& traj) {
  if (traj.steps.empty()) return !traj.success;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& [s, a] = traj.steps[i];
    if (!is_valid_action(mdp, s, a)) return false;
    const bool last = i + 1 == traj.steps.size();
    if (!last && mdp.transition(s, a) != traj.steps[i + 1].state) return false;
    if (last && mdp.completion(s, a) != traj.success) return false;
  }
  return traj.terminal_reward == (traj.success ? 1 : 0);
}

std::optional<std::int32_t> StateGraph::find(const StateKey& s) const {
  const auto it = index.find(s);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::vector<ActionId> StateGraph::witness(std::int32_t i) const {
  std::vector<ActionId> path;
  while (parent[i] >= 0) {
    path.push_back(parent_action[i]);
    i = parent[i];
  }
  std::reverse(path.begin(), path.end());
  return path;
}

bool StateGraph::closed() const {
  return std::all_of(expanded.begin(), expanded.end(), [](bool e) { return e; });
}

namespace {

void check_budget(std::size_t n, std::size_t cap) {
  if (n > cap) {
    throw StateBudgetExceeded("state closure exceeds the budget of " + std::to_string(cap) + " states");
  }
}

std::vector<StateKey> sorted_unique(std::span<const StateKey> roots) {
  std::vector<StateKey> out(roots.begin(), roots.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void add_state(StateGraph& g, StateKey key, int depth, std::int32_t parent, ActionId via) {
  g.index.emplace(key, static_cast<std::int32_t>(g.states.size()));
  g.states.push_back(std::move(key));
  g.depth.push_back(depth);
  g.parent.push_back(parent);
  g.parent_action.push_back(via);
  g.expanded.push_back(false);
}

}  // namespace

StateGraph explore(const TaskMdp& mdp, std::span<const StateKey> roots, int depth_limit,
                   std::size_t cap) {
  StateGraph g;
  for (auto& r : sorted_unique(roots)) add_state(g, std::move(r), 0, -1, kNoAction);
  check_budget(g.size(), cap);
  g.edge_begin.push_back(0);

  std::size_t level_begin = 0;
  int level = 0;
  while (level_begin < g.size()) {
    const std::size_t level_end = g.size();
    const bool expand_level = level < depth_limit;
    const auto n = static_cast<std::ptrdiff_t>(level_end - level_begin);
    std::vector<std::vector<Transition>> expansions(expand_level ? n : 0);
    if (expand_level) {
#pragma omp parallel for schedule(dynamic, 64)
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        expansions[i] = mdp.expand(g.states[level_begin + i]);
      }
    }

    // Ordered merge: the first (parent, action) in level order claims a child.
    struct Discovery {
      std::int32_t parent;
      ActionId action;
    };
    std::unordered_map<StateKey, Discovery, StateKeyHash> discovered;
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(expansions.size()); ++i) {
      for (const auto& t : expansions[i]) {
        if (g.index.contains(t.next) || discovered.contains(t.next)) continue;
        discovered.emplace(t.next, Discovery{static_cast<std::int32_t>(level_begin + i), t.action});
      }
    }
    check_budget(g.size() + discovered.size(), cap);
    std::vector<StateKey> fresh;
    fresh.reserve(discovered.size());
    for (const auto& [k, d] : discovered) fresh.push_back(k);
    std::sort(fresh.begin(), fresh.end());
    for (auto& k : fresh) {
      const auto d = discovered.at(k);
      add_state(g, std::move(k), level + 1, d.parent, d.action);
    }

    for (std::size_t i = level_begin; i < level_end; ++i) {
      if (expand_level) {
        for (const auto& t : expansions[i - level_begin]) {
          g.edges.push_back({t.action, g.index.at(t.next), t.completes});
        }
        g.expanded[i] = true;
      }
      g.edge_begin.push_back(g.edges.size());
    }
    level_begin = level_end;
    ++level;
  }
  return g;
}

StateGraph explore_serial(const TaskMdp& mdp, std::span<const StateKey> roots, int depth_limit,
                          std::size_t cap) {
  StateGraph g;
  std::deque<std::int32_t> queue;
  for (const auto& r : roots) {
    if (g.index.contains(r)) continue;
    add_state(g, r, 0, -1, kNoAction);
    queue.push_back(static_cast<std::int32_t>(g.size() - 1));
  }
  check_budget(g.size(), cap);

  std::vector<std::vector<std::pair<ActionId, std::int32_t>>> out(g.size());
  std::vector<std::vector<bool>> out_completes(g.size());
  while (!queue.empty()) {
    const std::int32_t i = queue.front();
    queue.pop_front();
    if (g.depth[i] >= depth_limit) continue;
    g.expanded[i] = true;
    for (ActionId a : mdp.valid_actions(g.states[i])) {
      StateKey next = mdp.transition(g.states[i], a);
      auto it = g.index.find(next);
      std::int32_t target;
      if (it == g.index.end()) {
        add_state(g, std::move(next), g.depth[i] + 1, i, a);
        check_budget(g.size(), cap);
        target = static_cast<std::int32_t>(g.size() - 1);
        out.emplace_back();
        out_completes.emplace_back();
        queue.push_back(target);
      } else {
        target = it->second;
      }
      out[i].emplace_back(a, target);
      out_completes[i].push_back(mdp.completion(g.states[i], a));
    }
  }
  g.edge_begin.push_back(0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      g.edges.push_back({out[i][j].first, out[i][j].second, out_completes[i][j]});
    }
    g.edge_begin.push_back(g.edges.size());
  }
  return g;
}

std::vector<StateKey> reachable_states(const TaskMdp& mdp, const StateKey& s0, int depth_limit,
                                       std::size_t cap) {
  if (depth_limit < 0) throw UsageError("depth_limit must be >= 0");
  const StateKey roots[] = {s0};
  return explore(mdp, roots, depth_limit, cap).states;
}

std::vector<int> completion_distances(const StateGraph& graph) {
  if (!graph.closed()) throw UsageError("completion_distances needs a transition-closed graph");
  const std::size_t n = graph.size();
  std::vector<std::vector<std::int32_t>> reverse(n);
  std::vector<int> dist(n, -1);
  std::deque<std::int32_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& e : graph.out_edges(static_cast<std::int32_t>(i))) {
      reverse[e.target].push_back(static_cast<std::int32_t>(i));
      if (e.completes && dist[i] < 0) {
        dist[i] = 0;
        queue.push_back(static_cast<std::int32_t>(i));
      }
    }
  }
  while (!queue.empty()) {
    const std::int32_t v = queue.front();
    queue.pop_front();
    for (std::int32_t u : reverse[v]) {
      if (dist[u] < 0) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

void write_trajectory_jsonl(std::ostream& out, const TaskMdp& mdp, const Trajectory& traj) {
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const auto& [s, a] = traj.steps[i];
    nlohmann::ordered_json rec;
    rec["step"] = i;
    rec["state_key"] = s.hex();
    rec["action_id"] = index_of(a);
    rec["action_str"] = mdp.action_name(a);
    rec["reward"] = mdp.completion(s, a) ? 1 : 0;
    out << rec.dump() << '\n';
  }
}

}  // namespace planlab
