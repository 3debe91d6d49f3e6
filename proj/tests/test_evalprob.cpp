#include <cmath>
#include <sstream>

#include "doctest.h"
#include "planlab/errors.hpp"
#include "planlab/evalprob.hpp"
#include "planlab/fixtures.hpp"
#include "planlab/grpo.hpp"
#include "planlab/harness.hpp"
#include "planlab/kitchen.hpp"
#include "planlab/policy.hpp"

using namespace planlab;
using kitchen::TaskKind;

namespace {

class AdvanceWith final : public Policy {
 public:
  explicit AdvanceWith(double p) : p_(p) {}
  std::vector<double> distribution(const StateKey&, std::span<const ActionId> actions) const override {
    if (actions.size() == 1) return {1.0};
    return {p_, 1.0 - p_};
  }

 private:
  double p_;
};

// Probability that the first completion happens on action number `n`, by
// summing over every action sequence.
double enumerate_success(const TaskMdp& mdp, const Policy& pi, const StateKey& s, int n) {
  const auto expansions = mdp.expand(s);
  std::vector<ActionId> actions;
  for (const auto& t : expansions) actions.push_back(t.action);
  const auto probs = pi.distribution(s, actions);
  double total = 0;
  for (std::size_t i = 0; i < expansions.size(); ++i) {
    if (probs[i] == 0) continue;
    if (n == 1) total += expansions[i].completes ? probs[i] : 0.0;
    else if (!expansions[i].completes) total += probs[i] * enumerate_success(mdp, pi, expansions[i].next, n - 1);
  }
  return total;
}

struct KitchenFixture {
  TaskContext ctx;
  TabularPolicy ref;
};

KitchenFixture kitchen_fixture(TaskKind kind, double eps) {
  KitchenFixture f;
  f.ctx = prepare_task(kitchen::build_task(kind, kitchen::canonical_layout(kind)));
  f.ref = harness::make_reference(*f.ctx.mdp, *f.ctx.expert, harness::RefKind::EpsilonMixture, eps, f.ctx.reachable);
  return f;
}

}  // namespace

TEST_CASE("chain of three: T* and the product recursion") {
  const ChainMdp chain(3);
  const StateKey s0 = chain.initial_state();
  const StateKey roots[] = {s0};
  const auto table = min_turns(chain, roots);
  CHECK(table.at(s0) == 2);

  const auto traj = plan_optimal(chain, s0);
  const auto states = reachable_states(chain, s0, kUnboundedDepth);
  const auto expert = complete_expert_policy(chain, traj, states);
  const AdvanceWith pi(0.8);
  const auto dp = dp_success_prob(chain, pi, expert, roots);
  CHECK(dp.at(s0) == doctest::Approx(0.512).epsilon(1e-15));
  CHECK(dp.at(s0) == doctest::Approx(enumerate_success(chain, pi, s0, 3)).epsilon(1e-15));
  CHECK(dp.at(ChainMdp::link(2)) == doctest::Approx(0.8));
  CHECK(dp.t_star.at(s0) == 2);
  CHECK_THROWS_AS(dp.at(ChainMdp::stuck()), PolicyStateMissing);

  const StateKey dead[] = {ChainMdp::stuck()};
  CHECK(dp_success_prob(chain, pi, expert, dead).at(ChainMdp::stuck()) == 0.0);
  CHECK(min_turns(chain, dead).at(ChainMdp::stuck()) == kUnreachable);
}

TEST_CASE("DP matches exhaustive enumeration on short-horizon kitchen states") {
  const auto f = kitchen_fixture(TaskKind::CheeseSandwich, 0.5);
  int checked = 0;
  for (const auto& s : f.ctx.reachable) {
    const auto& e = f.ctx.expert->entry(s);
    if (e.t_star < 0 || e.t_star > 3) continue;
    const StateKey root[] = {s};
    const double dp = dp_success_prob(*f.ctx.mdp, f.ref, *f.ctx.expert, root).at(s);
    CHECK(dp == doctest::Approx(enumerate_success(*f.ctx.mdp, f.ref, s, e.t_star + 1)).epsilon(1e-12));
    if (++checked == 60) break;
  }
  CHECK(checked == 60);
}

TEST_CASE("parallel DP equals the memoized serial recursion") {
  for (TaskKind kind : {TaskKind::CheeseSandwich, TaskKind::DoubleCheeseBurger}) {
    const auto f = kitchen_fixture(kind, 0.3);
    const auto a = dp_success_prob(*f.ctx.mdp, f.ref, *f.ctx.expert, f.ctx.reachable);
    const auto b = dp_success_prob_serial(*f.ctx.mdp, f.ref, *f.ctx.expert, f.ctx.reachable);
    for (const auto& s : f.ctx.reachable) {
      CHECK(a.at(s) == doctest::Approx(b.at(s)).epsilon(1e-14));
      CHECK(a.t_star.at(s) == f.ctx.expert->entry(s).t_star);
    }
    // Along the expert trajectory the recursion is a product of reference probabilities.
    double prod = 1.0;
    for (int k = f.ctx.trajectory.t_gt; k >= 0; --k) {
      prod *= f.ref.prob(f.ctx.trajectory.at(k).state, f.ctx.trajectory.at(k).action);
      CHECK(a.at(f.ctx.trajectory.at(k).state) == doctest::Approx(prod).epsilon(1e-12));
    }
  }
}

TEST_CASE("success table csv") {
  const ChainMdp chain(2);
  const auto traj = plan_optimal(chain, chain.initial_state());
  const auto states = reachable_states(chain, chain.initial_state(), kUnboundedDepth);
  const auto expert = complete_expert_policy(chain, traj, states);
  const StateKey roots[] = {chain.initial_state()};
  const auto dp = dp_success_prob(chain, AdvanceWith(0.5), expert, roots, "half");
  std::ostringstream out;
  dp.write_csv(out);
  CHECK(out.str() == "state_key,t_star,p_value\n" + ChainMdp::link(0).hex() + ",1,0.25\n" + ChainMdp::link(1).hex() +
                         ",0,0.5\n");
  CHECK(dp.policy_id == "half");
}

TEST_CASE("Monte-Carlo estimates bracket the DP value") {
  const auto f = kitchen_fixture(TaskKind::CheeseSandwich, 0.5);
  const StateKey s0 = f.ctx.mdp->initial_state();
  const StateKey roots[] = {s0};
  const double dp = dp_success_prob(*f.ctx.mdp, f.ref, *f.ctx.expert, roots).at(s0);
  const auto mc = mc_success_prob(*f.ctx.mdp, f.ref, s0, 100000, 123);
  CHECK(mc.t_star == f.ctx.trajectory.t_gt);
  CHECK(mc.episodes == 100000);
  CHECK(mc.ci_halfwidth == doctest::Approx(4 * std::sqrt(mc.estimate * (1 - mc.estimate) / 100000)));
  CHECK(std::abs(mc.estimate - dp) <= mc.ci_halfwidth);

  const auto serial = mc_success_prob_serial(*f.ctx.mdp, f.ref, s0, 20000, 9);
  const auto parallel = mc_success_prob(*f.ctx.mdp, f.ref, s0, 20000, 9);
  CHECK(serial.successes == parallel.successes);

  const ChainMdp chain(2);
  CHECK_THROWS_AS(mc_success_prob(chain, AdvanceWith(0.5), ChainMdp::stuck(), 10, 1), UnreachableStart);
  CHECK_THROWS_AS(mc_success_prob(chain, AdvanceWith(0.5), chain.initial_state(), 0, 1), UsageError);
}

TEST_CASE("fixed points improve every state; a degraded policy is caught") {
  const auto f = kitchen_fixture(TaskKind::CheeseSandwich, 0.5);
  const auto ds = build_dataset(*f.ctx.mdp, *f.ctx.expert, f.ctx.trajectory, f.ctx.reachable, DatasetMode::AllStates);
  GrpoConfig cfg;
  const auto [star, report] = iterate_to_fixed_point(f.ref, ds, cfg);
  REQUIRE(report.fixed_point_reached);
  const auto good = improvement_report(*f.ctx.mdp, star, f.ref, *f.ctx.expert, f.ctx.reachable);
  CHECK(good.violations_multi_turn.empty());
  CHECK(good.violations_per_state.empty());
  CHECK(good.min_margin >= -kImprovementTol);
  CHECK(good.states.size() == ds.size());

  const auto worse = harness::make_reference(*f.ctx.mdp, *f.ctx.expert, harness::RefKind::EpsilonMixture, 0.9,
                                             f.ctx.reachable);
  const auto bad = improvement_report(*f.ctx.mdp, worse, f.ref, *f.ctx.expert, f.ctx.reachable);
  CHECK_FALSE(bad.violations_multi_turn.empty());
  CHECK_FALSE(bad.violations_per_state.empty());
  CHECK(bad.min_margin < 0);
  const auto j = bad.to_json();
  CHECK(j["summary"]["multi_turn_violations"] == bad.violations_multi_turn.size());
  CHECK(j["violations_thm3"].size() == bad.violations_multi_turn.size());
}

TEST_CASE("subtask success is the product along the expert prefix") {
  const auto f = kitchen_fixture(TaskKind::CheeseBurger, 0.5);
  const auto expert_pi = ExpertActionPolicy(f.ctx.expert);
  for (int k : {0, 4, f.ctx.trajectory.t_gt - 1}) {
    double prod = 1.0;
    for (int i = 0; i <= k; ++i) prod *= f.ref.prob(f.ctx.trajectory.at(i).state, f.ctx.trajectory.at(i).action);
    CHECK(subtask_success_prob(f.ctx.mdp, f.ctx.trajectory, k, f.ref) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(subtask_success_prob(f.ctx.mdp, f.ctx.trajectory, k, expert_pi) == 1.0);
  }
  CHECK_THROWS_AS(subtask_success_prob(f.ctx.mdp, f.ctx.trajectory, f.ctx.trajectory.t_gt, f.ref), IndexOutOfRange);
}
