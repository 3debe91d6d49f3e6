#include <numeric>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "planlab/errors.hpp"
#include "planlab/evalprob.hpp"
#include "planlab/expert.hpp"
#include "planlab/fixtures.hpp"
#include "planlab/kitchen.hpp"

using namespace planlab;

namespace {

// Brute-force oracle: every action sequence of exactly n pairs, counting
// those whose last pair is the first completion.
std::uint64_t enumerate_successes(const TaskMdp& mdp, const StateKey& s, int n) {
  std::uint64_t total = 0;
  for (const auto& t : mdp.expand(s)) {
    if (n == 1) {
      total += t.completes;
    } else if (!t.completes) {
      total += enumerate_successes(mdp, t.next, n - 1);
    }
  }
  return total;
}

}  // namespace

TEST_CASE("planner on the chain") {
  const ChainMdp chain(4);
  const auto traj = plan_optimal(chain, chain.initial_state());
  CHECK(traj.t_gt == 3);
  CHECK(traj.steps.size() == 4);
  CHECK(traj.steps.success);
  for (const auto& st : traj.steps.steps) CHECK(st.action == ChainMdp::kAdvance);
  CHECK(certify_uniqueness(chain, chain.initial_state(), traj.t_gt).describe() == "Unique");
  CHECK_THROWS_AS(plan_optimal(chain, ChainMdp::stuck()), GoalUnreachable);
}

TEST_CASE("ties are counted and broken by action index") {
  const TwoPathMdp two;
  const auto traj = plan_optimal(two, two.initial_state());
  CHECK(traj.t_gt == 1);
  CHECK(traj.at(0).action == TwoPathMdp::kLeft);
  const auto cert = certify_uniqueness(two, two.initial_state(), traj.t_gt);
  CHECK(cert.optimal_count == 2);
  CHECK_FALSE(cert.unique());
  CHECK(cert.describe() == "TiedCount(2)");
}

TEST_CASE("trajectory counting agrees with brute-force enumeration") {
  const auto mdp = kitchen::build_task(kitchen::TaskKind::CheeseSandwich,
                                       kitchen::canonical_layout(kitchen::TaskKind::CheeseSandwich));
  const StateKey s0 = mdp->initial_state();
  for (int t = 0; t <= 8; ++t) {
    CAPTURE(t);
    const auto fast = count_successful_trajectories(*mdp, s0, t);
    if (t < 7) CHECK(fast == enumerate_successes(*mdp, s0, t + 1));
    CHECK(fast == (t == 8 ? 1u : 0u));
  }
  const TwoPathMdp two;
  CHECK(count_successful_trajectories(two, two.initial_state(), 1) == enumerate_successes(two, two.initial_state(), 2));
}

TEST_CASE("expert completion matches per-state replanning") {
  for (auto kind : {kitchen::TaskKind::CheeseSandwich, kitchen::TaskKind::Burger}) {
    const auto mdp = kitchen::build_task(kind, kitchen::canonical_layout(kind));
    const auto traj = plan_optimal(*mdp, mdp->initial_state());
    const auto states = reachable_states(*mdp, mdp->initial_state(), kUnboundedDepth);
    const auto fast = complete_expert_policy(*mdp, traj, states);
    const auto slow = complete_expert_policy_replanning(*mdp, traj, states);
    REQUIRE(fast.size() == slow.size());
    for (const auto& s : fast.states()) {
      const auto& a = fast.entry(s);
      const auto& b = slow.entry(s);
      CHECK(a.action == b.action);
      CHECK(a.t_star == b.t_star);
      CHECK(a.provenance == b.provenance);
    }
    for (int k = 0; k <= traj.t_gt; ++k) {
      const auto& e = fast.entry(traj.at(k).state);
      CHECK(e.action == traj.at(k).action);
      CHECK(e.provenance == Provenance::OnTrajectory);
      CHECK(e.t_star == traj.t_gt - k);
    }
  }
}

TEST_CASE("dead ends and rewards") {
  const ChainMdp chain(3);
  const auto traj = plan_optimal(chain, chain.initial_state());
  const auto states = reachable_states(chain, chain.initial_state(), kUnboundedDepth);
  const auto expert = complete_expert_policy(chain, traj, states);
  CHECK(expert.action_of(ChainMdp::stuck()) == kNoAction);
  CHECK(expert.entry(ChainMdp::stuck()).provenance == Provenance::DeadEnd);
  CHECK(expert.entry(ChainMdp::stuck()).t_star == -1);
  const auto dead = expert.dead_ends();
  CHECK(std::find(dead.begin(), dead.end(), ChainMdp::stuck()) != dead.end());
  CHECK(step_reward(chain, expert, ChainMdp::link(1), ChainMdp::kAdvance) == 1);
  CHECK(step_reward(chain, expert, ChainMdp::link(1), ChainMdp::kNoop) == 0);
  CHECK(step_reward(chain, expert, ChainMdp::stuck(), ChainMdp::kNoop) == 0);
  CHECK_THROWS_AS(expert.entry(StateKey("nowhere")), ExpertCoverageMissing);
}

TEST_CASE("single-turn datasets") {
  const auto mdp = kitchen::build_task(kitchen::TaskKind::CheeseSandwich,
                                       kitchen::canonical_layout(kitchen::TaskKind::CheeseSandwich));
  const auto ctx = prepare_task(mdp);
  const auto traj_ds = build_dataset(*mdp, *ctx.expert, ctx.trajectory, ctx.reachable, DatasetMode::TrajectoryOnly);
  CHECK(traj_ds.size() == static_cast<std::size_t>(ctx.trajectory.t_gt + 1));
  for (std::size_t i = 0; i < traj_ds.size(); ++i) {
    CHECK(traj_ds.entries[i].state == ctx.trajectory.at(static_cast<int>(i)).state);
    CHECK(traj_ds.entries[i].expert_action == ctx.trajectory.at(static_cast<int>(i)).action);
    CHECK(traj_ds.weights[i] == doctest::Approx(1.0 / 9));
  }
  const auto all = build_dataset(*mdp, *ctx.expert, ctx.trajectory, ctx.reachable, DatasetMode::AllStates);
  const std::size_t live = ctx.expert->size() - ctx.expert->dead_ends().size();
  CHECK(all.size() == live);
  CHECK(std::accumulate(all.weights.begin(), all.weights.end(), 0.0) == doctest::Approx(1.0));
  for (const auto& e : all.entries) {
    CHECK(e.expert_action != kNoAction);
    CHECK(e.valid_actions == mdp->valid_actions(e.state));
  }

  const SingleTurnDataset parts[] = {traj_ds, all};
  const auto merged = merge_datasets(parts);
  CHECK(merged.size() == traj_ds.size() + all.size());
  for (double w : merged.weights) CHECK(w == doctest::Approx(1.0 / static_cast<double>(merged.size())));

  std::ostringstream out;
  write_dataset_jsonl(out, traj_ds);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  const auto rec = nlohmann::json::parse(line);
  CHECK(rec["state_key"] == traj_ds.entries[0].state.hex());
  CHECK(rec["expert_action"] == index_of(traj_ds.entries[0].expert_action));
  CHECK(rec["valid_actions"].size() == traj_ds.entries[0].valid_actions.size());
}
