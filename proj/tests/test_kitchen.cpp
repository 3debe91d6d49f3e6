#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "planlab/errors.hpp"
#include "planlab/evalprob.hpp"
#include "planlab/expert.hpp"
#include "planlab/kitchen.hpp"

using namespace planlab;
using namespace planlab::kitchen;
namespace fs = std::filesystem;

namespace {

std::size_t station_of(const KitchenState& s, StationType type) {
  for (std::size_t j = 0; j < s.stations.size(); ++j) {
    if (s.stations[j].type == type) return j;
  }
  FAIL("station missing");
  return 0;
}

std::vector<int> diff_indices(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<int> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

TEST_CASE("recipes and tiers") {
  CHECK(recipe(TaskKind::CheeseSandwich).size() == 3);
  CHECK(recipe(TaskKind::Burger).size() == 3);
  CHECK(recipe(TaskKind::CheeseBurger).size() == 4);
  CHECK(recipe(TaskKind::DoubleCheeseBurger).size() == 6);
  CHECK(recipe(TaskKind::Burger)[1] == Item{ItemKind::Patty, true, false});
  CHECK(default_timeout(TaskKind::CheeseSandwich) == 15);
  CHECK(default_timeout(TaskKind::DoubleCheeseBurger) == 35);
  for (TaskKind k : kAllTasks) {
    CHECK(parse_task(task_name(k)) == k);
    CHECK(expert_length_bound(k) <= default_timeout(k));
  }
  CHECK_THROWS_AS(parse_task("Pizza"), UsageError);
}

TEST_CASE("item codes round-trip") {
  for (int k = 0; k < kItemKinds; ++k) {
    for (bool cooked : {false, true}) {
      for (bool cut : {false, true}) {
        const Item it{static_cast<ItemKind>(k), cooked, cut};
        CHECK(Item::from_code(it.code()) == it);
      }
    }
  }
}

TEST_CASE("action vocabulary") {
  CHECK(kNumActions == 41);
  std::set<std::string> names;
  for (int i = 0; i < kNumActions; ++i) names.insert(action_string(make_action(i)));
  CHECK(names.size() == 41);
  CHECK(describe(move_action({3, 1})).verb == Verb::Move);
  CHECK(describe(move_action({3, 1})).arg == 8);
  CHECK(index_of(pick_action(ItemKind::Bread)) == 25);
  CHECK(index_of(place_action(ItemKind::Bread)) == 31);
  CHECK(index_of(kPlate) == 40);
  CHECK(describe(kCut).verb == Verb::Cut);
  CHECK_THROWS_AS(describe(make_action(41)), InvalidAction);
  CHECK_THROWS_AS(describe(make_action(-1)), InvalidAction);
}

TEST_CASE("canonical layout files mirror the built-in layouts") {
  for (TaskKind k : kAllTasks) {
    const auto built = canonical_layout(k);
    const fs::path file = fs::path(PLANLAB_SOURCE_DIR) / "data" / "layouts" / (built.name + ".json");
    REQUIRE(fs::exists(file));
    CHECK(load_layout(file) == built);
    CHECK(layout_from_json(to_json(built)) == built);
  }
}

TEST_CASE("layout loading rejects bad documents") {
  auto j = nlohmann::json::parse(to_json(canonical_layout(TaskKind::Burger)).dump());
  auto wrong_schema = j;
  wrong_schema["schema"] = 99;
  CHECK_THROWS_AS(layout_from_json(wrong_schema), SchemaMismatch);
  auto off_grid = j;
  off_grid["agent_start"] = {7, 7};
  CHECK_THROWS_AS(layout_from_json(off_grid), UsageError);

  auto dup = canonical_layout(TaskKind::Burger);
  dup.stations[1].pos = dup.stations[0].pos;
  CHECK_THROWS_AS(validate(dup), UsageError);
}

TEST_CASE("canonical experts: lengths, uniqueness and state-space sizes") {
  struct Expect {
    TaskKind kind;
    int length;
    std::size_t reachable;
  };
  const Expect table[] = {{TaskKind::CheeseSandwich, 9, 936},
                          {TaskKind::Burger, 10, 3372},
                          {TaskKind::CheeseBurger, 14, 3564},
                          {TaskKind::DoubleCheeseBurger, 23, 5316}};
  for (const auto& e : table) {
    CAPTURE(task_name(e.kind));
    const auto mdp = build_task(e.kind, canonical_layout(e.kind));
    CHECK(mdp->horizon() == default_timeout(e.kind));
    const auto traj = plan_optimal(*mdp, mdp->initial_state());
    CHECK(traj.t_gt + 1 == e.length);
    CHECK(traj.t_gt + 1 <= expert_length_bound(e.kind));
    CHECK(certify_uniqueness(*mdp, mdp->initial_state(), traj.t_gt).unique());
    CHECK(is_consistent(*mdp, traj.steps));
    CHECK(reachable_states(*mdp, mdp->initial_state(), kUnboundedDepth).size() == e.reachable);
  }
}

TEST_CASE("reachable set at bounded depth is pinned") {
  const auto mdp = build_task(TaskKind::CheeseSandwich, canonical_layout(TaskKind::CheeseSandwich));
  CHECK(reachable_states(*mdp, mdp->initial_state(), 10).size() == 395);
}

TEST_CASE("state encoding round-trips over the reachable set") {
  const auto mdp = build_task(TaskKind::Burger, canonical_layout(TaskKind::Burger));
  const auto states = reachable_states(*mdp, mdp->initial_state(), kUnboundedDepth);
  for (const auto& s : states) {
    const KitchenState ks = decode(s);
    REQUIRE(encode(ks) == s);
    const auto actions = mdp->valid_actions(s);
    CHECK(actions == valid_actions(ks));
    for (ActionId a : actions) CHECK(encode(apply(ks, a)) == mdp->transition(s, a));
  }
  std::string bytes = mdp->initial_state().bytes();
  bytes[0] = static_cast<char>(kStateSchema + 1);
  CHECK_THROWS_AS(decode(StateKey(bytes)), SchemaMismatch);
}

TEST_CASE("action preconditions in the initial state") {
  const auto mdp = build_task(TaskKind::Burger, canonical_layout(TaskKind::Burger));
  const StateKey s0 = mdp->initial_state();
  const KitchenState ks = decode(s0);
  CHECK_FALSE(ks.held.has_value());
  CHECK_FALSE(is_valid_action(*mdp, s0, kStack));
  CHECK_FALSE(is_valid_action(*mdp, s0, kPlate));
  CHECK_FALSE(is_valid_action(*mdp, s0, kCook));
  const auto stove = station_of(ks, StationType::Stove);
  CHECK(is_valid_action(*mdp, s0, move_action(ks.stations[stove].pos)));
  CHECK_THROWS_AS(step(*mdp, s0, kStack), InvalidAction);
}

TEST_CASE("infeasible and mismatched layouts are rejected") {
  auto layout = canonical_layout(TaskKind::CheeseSandwich);
  layout.items.erase(std::remove_if(layout.items.begin(), layout.items.end(),
                                    [](const ItemPlacement& p) { return p.item.kind == ItemKind::Cheese; }),
                     layout.items.end());
  CHECK_THROWS_AS(build_task(TaskKind::CheeseSandwich, layout), InfeasibleLayout);
  CHECK_THROWS_AS(build_task(TaskKind::Burger, canonical_layout(TaskKind::CheeseSandwich)), InfeasibleLayout);
}

TEST_CASE("sampled layouts are seeded and feasible") {
  for (TaskKind k : kAllTasks) {
    const auto a = sample_layouts(k, 77, 3);
    const auto b = sample_layouts(k, 77, 3);
    CHECK(a == b);
    CHECK(sample_layout(k, 78) == a[1]);
    for (const auto& l : a) {
      validate(l);
      const auto mdp = build_task(k, l);
      CHECK(plan_optimal(*mdp, mdp->initial_state()).t_gt + 1 <= default_timeout(k));
    }
  }
}

TEST_CASE("feature vector matches a hand-computed encoding") {
  using L = FeatureLayout;
  CHECK(L::kDim == 141);
  const auto mdp = build_task(TaskKind::CheeseSandwich, canonical_layout(TaskKind::CheeseSandwich));
  const ActionId a = move_action({0, 4});
  const auto fv = featurize(mdp->initial_state(), a);
  CHECK(fv.schema_version == kFeatureSchema);

  std::vector<double> expected(L::kDim, 0.0);
  expected[L::kAgent + Cell{2, 0}.index()] = 1;          // agent on the middle counter
  expected[L::kHeld + 0] = 1;                            // empty hands
  const auto status = [](ItemKind k, int slot) { return L::kStatus + 4 * static_cast<int>(k) + slot; };
  expected[status(ItemKind::Bread, 3)] = 1;              // bread on the plate
  expected[status(ItemKind::Bread, 0)] = 1;              // raw bread on a counter
  expected[status(ItemKind::Cheese, 0)] = 1;
  expected[status(ItemKind::Lettuce, 0)] = 1;            // distractor on the board
  for (Cell c : {Cell{2, 2}, Cell{4, 0}, Cell{0, 4}, Cell{4, 4}}) expected[L::kOccupied + c.index()] = 1;
  expected[L::kAction + index_of(a)] = 1;
  expected[L::kValid] = 1;
  expected[L::kRelational + static_cast<int>(Verb::Move)] = 1;
  expected[L::kRelational + kVerbs + 0] = 1;             // target holds the next ingredient
  CHECK(fv.values == expected);

  const KitchenFeaturizer fz;
  const auto actions = mdp->valid_actions(mdp->initial_state());
  const auto mat = fz.features(mdp->initial_state(), actions);
  REQUIRE(mat.size() == actions.size() * L::kDim);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const std::vector<double> row(mat.begin() + i * L::kDim, mat.begin() + (i + 1) * L::kDim);
    CHECK(row == featurize(mdp->initial_state(), actions[i]).values);
  }
}

TEST_CASE("cooking a patty changes exactly the status bits") {
  const auto mdp = build_task(TaskKind::Burger, canonical_layout(TaskKind::Burger));
  KitchenState raw = decode(mdp->initial_state());
  KitchenState cooked = raw;
  auto& stack = cooked.stacks[station_of(cooked, StationType::Stove)];
  REQUIRE(stack.size() == 1);
  stack[0].cooked = true;
  const auto f_raw = featurize(encode(raw), kStack).values;
  const auto f_cooked = featurize(encode(cooked), kStack).values;
  const int base = FeatureLayout::kStatus + 4 * static_cast<int>(ItemKind::Patty);
  CHECK(diff_indices(f_raw, f_cooked) == std::vector<int>{base, base + 1});

  std::string bytes = encode(raw).bytes();
  bytes[0] = static_cast<char>(kStateSchema + 1);
  CHECK_THROWS_AS(featurize(StateKey(bytes), kStack), SchemaMismatch);
}

TEST_CASE("subtasks end at the expert pair") {
  std::shared_ptr<const TaskMdp> mdp = build_task(TaskKind::CheeseBurger, canonical_layout(TaskKind::CheeseBurger));
  const auto traj = plan_optimal(*mdp, mdp->initial_state());
  for (int k : {0, 3, traj.t_gt - 1}) {
    const auto sub = make_subtask(mdp, traj, k);
    CHECK(sub->horizon() == std::max(1, k + mdp->horizon() - traj.t_gt));
    CHECK(sub->target() == traj.at(k));
    const auto sub_traj = plan_optimal(*sub, sub->initial_state());
    CHECK(sub_traj.t_gt == k);
    for (int i = 0; i <= k; ++i) CHECK(sub_traj.at(i) == traj.at(i));
  }
  CHECK_THROWS_AS(make_subtask(mdp, traj, traj.t_gt), IndexOutOfRange);
  CHECK_THROWS_AS(make_subtask(mdp, traj, -1), IndexOutOfRange);
}
