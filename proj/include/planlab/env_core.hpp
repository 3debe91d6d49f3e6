#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "planlab/errors.hpp"

namespace planlab {

// Canonical byte encoding of a full environment state. Equal content implies
// equal bytes, so keys are compared and hashed bytewise.
class StateKey {
 public:
  StateKey() = default;
  explicit StateKey(std::string bytes) : bytes_(std::move(bytes)) {}

  const std::string& bytes() const { return bytes_; }
  bool empty() const { return bytes_.empty(); }

  // Lowercase hex, used wherever a key leaves the process (JSON, CSV).
  std::string hex() const;
  static StateKey from_hex(std::string_view hex);

  auto operator<=>(const StateKey&) const = default;

 private:
  std::string bytes_;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    return std::hash<std::string>{}(k.bytes());
  }
};

// Index into an environment's global action vocabulary.
enum class ActionId : std::int32_t {};

constexpr std::int32_t index_of(ActionId a) { return static_cast<std::int32_t>(a); }
constexpr ActionId make_action(std::int32_t i) { return static_cast<ActionId>(i); }

// Marks "no action", e.g. the expert's choice at a dead-end state.
inline constexpr ActionId kNoAction = make_action(-1);

struct Transition {
  ActionId action;
  StateKey next;
  bool completes = false;
};

// Deterministic finite-horizon task MDP (S, A, f, R, horizon, s0).
//
// Implementations must be immutable after construction; every query is pure.
// `transition` and `completion` may assume `a` is valid in `s`; the checked
// entry points are the free functions `step` and `is_success`.
class TaskMdp {
 public:
  virtual ~TaskMdp() = default;

  virtual StateKey initial_state() const = 0;
  virtual int horizon() const = 0;

  // Nonempty, strictly ascending by action index.
  virtual std::vector<ActionId> valid_actions(const StateKey& s) const = 0;
  virtual StateKey transition(const StateKey& s, ActionId a) const = 0;
  virtual bool completion(const StateKey& s, ActionId a) const = 0;

  virtual std::string action_name(ActionId a) const = 0;
  virtual std::size_t num_actions() const = 0;

  // All (a, f(s,a), R(s,a)) for valid a, in action order. Environments that
  // decode states override this to decode once.
  virtual std::vector<Transition> expand(const StateKey& s) const;
};

bool is_valid_action(const TaskMdp& mdp, const StateKey& s, ActionId a);

// Checked transition; throws InvalidAction.
StateKey step(const TaskMdp& mdp, const StateKey& s, ActionId a);

// Checked binary reward; throws InvalidAction.
int is_success(const TaskMdp& mdp, const StateKey& s, ActionId a);

// Categorical action distribution per state. `actions` is the state's valid
// action list and the result is aligned with it.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::vector<double> distribution(
      const StateKey& s, std::span<const ActionId> actions) const = 0;
};

// Portable RNG: mt19937_64 output mapped to doubles without the
// implementation-defined standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::uint64_t next() { return engine_(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
  std::size_t categorical(std::span<const double> probs);

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t episode_seed(std::uint64_t base, std::uint64_t index) { return base + index; }

struct TrajectoryStep {
  StateKey state;
  ActionId action;

  bool operator==(const TrajectoryStep&) const = default;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  bool success = false;
  int terminal_reward = 0;

  std::size_t size() const { return steps.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct EpisodeOutcome {
  Trajectory trajectory;
  int turns_used = 0;
  bool timed_out = false;
  std::uint64_t rng_seed = 0;

  bool operator==(const EpisodeOutcome&) const = default;
};

// Samples a_i ~ policy(.|s_i) until the first completion or max_turns actions.
EpisodeOutcome rollout(const TaskMdp& mdp, const Policy& policy, const StateKey& s0,
                       int max_turns, std::uint64_t seed);

// Replays the trajectory against the MDP; true iff every step is valid,
// consecutive states follow `transition`, and `success` matches the reward at
// the final pair.
bool is_consistent(const TaskMdp& mdp, const Trajectory& traj);

inline constexpr int kUnboundedDepth = std::numeric_limits<int>::max();
inline constexpr std::size_t kDefaultStateCap = 2'000'000;

struct Edge {
  ActionId action;
  std::int32_t target;
  bool completes;
};

// Explicit transition graph of everything reachable from a set of roots.
// States are ordered by (depth, key); parent/parent_action give a witness path
// of length `depth` back to a root.
struct StateGraph {
  std::vector<StateKey> states;
  std::vector<int> depth;
  std::vector<std::int32_t> parent;
  std::vector<ActionId> parent_action;
  std::vector<bool> expanded;
  std::vector<std::size_t> edge_begin;  // size states.size() + 1
  std::vector<Edge> edges;
  std::unordered_map<StateKey, std::int32_t, StateKeyHash> index;

  std::size_t size() const { return states.size(); }
  std::optional<std::int32_t> find(const StateKey& s) const;
  std::span<const Edge> out_edges(std::int32_t i) const {
    return {edges.data() + edge_begin[i], edges.data() + edge_begin[i + 1]};
  }
  // Action sequence from a root to state i.
  std::vector<ActionId> witness(std::int32_t i) const;
  // True iff every state was expanded, i.e. the graph is transition-closed.
  bool closed() const;
};

// Breadth-first closure of `roots`, cut at depth_limit. Each BFS level is
// expanded in parallel; the merge is serial and ordered, so the result does
// not depend on the thread count. Throws StateBudgetExceeded above `cap`.
StateGraph explore(const TaskMdp& mdp, std::span<const StateKey> roots,
                   int depth_limit = kUnboundedDepth, std::size_t cap = kDefaultStateCap);

// Single-threaded FIFO reference for `explore`. Produces the same state set
// and depths; parents may differ.
StateGraph explore_serial(const TaskMdp& mdp, std::span<const StateKey> roots,
                          int depth_limit = kUnboundedDepth,
                          std::size_t cap = kDefaultStateCap);

// Sorted by (depth, key).
std::vector<StateKey> reachable_states(const TaskMdp& mdp, const StateKey& s0, int depth_limit,
                                       std::size_t cap = kDefaultStateCap);

// Shortest number of turns before a completing pair, per graph state (0 when
// some action completes immediately), or -1 when the goal is unreachable.
// Requires a closed graph.
std::vector<int> completion_distances(const StateGraph& graph);

// One JSON object per step: {step, state_key, action_id, action_str, reward}.
void write_trajectory_jsonl(std::ostream& out, const TaskMdp& mdp, const Trajectory& traj);

}  // namespace planlab
