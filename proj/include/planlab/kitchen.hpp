#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "planlab/env_core.hpp"
#include "planlab/expert.hpp"
#include "planlab/policy.hpp"

namespace planlab::kitchen {

inline constexpr int kLayoutSchema = 1;
inline constexpr int kStateSchema = 1;
inline constexpr int kFeatureSchema = 1;
inline constexpr int kMaxGrid = 5;
inline constexpr int kCells = kMaxGrid * kMaxGrid;

enum class ItemKind : std::uint8_t { Bread, BottomBun, TopBun, Patty, Cheese, Lettuce };
inline constexpr int kItemKinds = 6;

enum class StationType : std::uint8_t { Counter, Stove, Board, Plate };

enum class TaskKind : std::uint8_t { CheeseSandwich, Burger, CheeseBurger, DoubleCheeseBurger };
inline constexpr std::array<TaskKind, 4> kAllTasks = {TaskKind::CheeseSandwich, TaskKind::Burger,
                                                      TaskKind::CheeseBurger, TaskKind::DoubleCheeseBurger};

struct Item {
  ItemKind kind = ItemKind::Bread;
  bool cooked = false;
  bool cut = false;

  std::uint8_t code() const;
  static Item from_code(std::uint8_t c);
  bool operator==(const Item&) const = default;
};

using Recipe = std::vector<Item>;  // bottom to top, with required statuses

const Recipe& recipe(TaskKind kind);
std::string_view task_name(TaskKind kind);
TaskKind parse_task(std::string_view name);  // throws UsageError
std::string_view item_name(ItemKind kind);
std::string_view station_name(StationType type);

// Evaluation timeout per tier: 15 / 15 / 23 / 35 actions.
int default_timeout(TaskKind kind);
// Largest admissible expert length (actions) per tier: 10 / 10 / 15 / 23.
int expert_length_bound(TaskKind kind);

struct Cell {
  int x = 0;
  int y = 0;

  int index() const { return y * kMaxGrid + x; }
  static Cell from_index(int i) { return {i % kMaxGrid, i / kMaxGrid}; }
  auto operator<=>(const Cell&) const = default;
};

struct Station {
  StationType type = StationType::Counter;
  Cell pos;
  bool operator==(const Station&) const = default;
};

struct ItemPlacement {
  Item item;
  Cell pos;  // items sharing a cell stack in listing order, bottom first
  bool operator==(const ItemPlacement&) const = default;
};

struct KitchenLayout {
  std::string name;
  int width = kMaxGrid;
  int height = kMaxGrid;
  std::vector<Station> stations;
  std::vector<ItemPlacement> items;
  Cell agent_start;

  bool operator==(const KitchenLayout&) const = default;
};

// Structural checks (grid bounds, unique station cells, items and the agent on
// stations, stove holds patties only, board holds lettuce only). Throws
// UsageError.
void validate(const KitchenLayout& layout);

// {schema, name, grid_size: [w, h], stations: [{type, pos}], items: [{kind,
// cooked, cut, pos}], agent_start}.
nlohmann::ordered_json to_json(const KitchenLayout& layout);
KitchenLayout layout_from_json(const nlohmann::json& j);  // throws SchemaMismatch, UsageError
KitchenLayout load_layout(const std::filesystem::path& path);
void save_layout(const std::filesystem::path& path, const KitchenLayout& layout);

// Hand-tuned layouts with unique expert trajectories; mirrored by the files
// under data/layouts.
KitchenLayout canonical_layout(TaskKind kind);

// Seeded random layout (station cells permuted, items shuffled over counters)
// whose task is feasible within the tier's timeout.
KitchenLayout sample_layout(TaskKind kind, std::uint64_t seed);
std::vector<KitchenLayout> sample_layouts(TaskKind kind, std::uint64_t seed, int count);

// Decoded kitchen state. Station order is the layout's station order.
struct KitchenState {
  TaskKind task = TaskKind::CheeseSandwich;
  std::vector<Station> stations;
  int agent = 0;  // station index
  std::optional<Item> held;
  std::vector<std::vector<Item>> stacks;  // per station, bottom first

  bool operator==(const KitchenState&) const = default;
};

StateKey encode(const KitchenState& state);
KitchenState decode(const StateKey& key);  // throws SchemaMismatch, UsageError

enum class Verb : std::uint8_t { Move, Pick, Place, Cook, Cut, Stack, Plate };
inline constexpr int kVerbs = 7;

// Fixed 41-action vocabulary: move(cell) 0-24, pick(kind) 25-30,
// place(kind) 31-36, cook 37, cut 38, stack 39, plate 40.
inline constexpr int kNumActions = kCells + 2 * kItemKinds + 4;

ActionId move_action(Cell c);
ActionId pick_action(ItemKind k);
ActionId place_action(ItemKind k);
inline constexpr ActionId kCook = make_action(kCells + 2 * kItemKinds);
inline constexpr ActionId kCut = make_action(kCells + 2 * kItemKinds + 1);
inline constexpr ActionId kStack = make_action(kCells + 2 * kItemKinds + 2);
inline constexpr ActionId kPlate = make_action(kCells + 2 * kItemKinds + 3);

struct ActionSpec {
  Verb verb;
  int arg = 0;  // cell index for move, item kind for pick/place
};
ActionSpec describe(ActionId a);  // throws InvalidAction outside the vocabulary
std::string action_string(ActionId a);

class KitchenMdp final : public TaskMdp {
 public:
  // No feasibility probe; see build_task.
  KitchenMdp(TaskKind kind, const KitchenLayout& layout, int horizon = 0);

  TaskKind kind() const { return kind_; }
  const KitchenLayout& layout() const { return layout_; }

  StateKey initial_state() const override { return s0_; }
  int horizon() const override { return horizon_; }
  std::vector<ActionId> valid_actions(const StateKey& s) const override;
  StateKey transition(const StateKey& s, ActionId a) const override;
  bool completion(const StateKey& s, ActionId a) const override;
  std::string action_name(ActionId a) const override { return action_string(a); }
  std::size_t num_actions() const override { return kNumActions; }
  std::vector<Transition> expand(const StateKey& s) const override;

 private:
  TaskKind kind_;
  KitchenLayout layout_;
  int horizon_;
  StateKey s0_;
};

// Valid actions of a decoded state, ascending.
std::vector<ActionId> valid_actions(const KitchenState& s);
KitchenState apply(const KitchenState& s, ActionId a);  // assumes a is valid
bool is_served(const KitchenState& s, ActionId a);

// Validates the layout, checks ingredient counts against the recipe and probes
// the planner. Throws InfeasibleLayout.
std::shared_ptr<const KitchenMdp> build_task(TaskKind kind, const KitchenLayout& layout, int horizon = 0);

// Parent dynamics with completion moved to the expert pair (s_k, a_k) and the
// horizon cut to k + (parent horizon - t_gt).
class SubtaskMdp final : public TaskMdp {
 public:
  SubtaskMdp(std::shared_ptr<const TaskMdp> parent, const ExpertTrajectory& expert, int k_star);

  int k_star() const { return k_star_; }
  const TrajectoryStep& target() const { return target_; }
  const TaskMdp& parent() const { return *parent_; }

  StateKey initial_state() const override { return parent_->initial_state(); }
  int horizon() const override { return horizon_; }
  std::vector<ActionId> valid_actions(const StateKey& s) const override { return parent_->valid_actions(s); }
  StateKey transition(const StateKey& s, ActionId a) const override { return parent_->transition(s, a); }
  bool completion(const StateKey& s, ActionId a) const override { return a == target_.action && s == target_.state; }
  std::string action_name(ActionId a) const override { return parent_->action_name(a); }
  std::size_t num_actions() const override { return parent_->num_actions(); }
  std::vector<Transition> expand(const StateKey& s) const override;

 private:
  std::shared_ptr<const TaskMdp> parent_;
  int k_star_;
  TrajectoryStep target_;
  int horizon_;
};

// Throws IndexOutOfRange unless 0 <= k_star < expert.t_gt.
std::shared_ptr<const SubtaskMdp> make_subtask(std::shared_ptr<const TaskMdp> parent,
                                               const ExpertTrajectory& expert, int k_star);

// Block layout of a feature vector (schema 1).
struct FeatureLayout {
  static constexpr int kAgent = 0;                         // agent cell one-hot, 25
  static constexpr int kHeld = kAgent + kCells;            // none + item kind one-hot, 7
  static constexpr int kStatus = kHeld + 1 + kItemKinds;   // per kind: raw, cooked, cut, stacked, 24
  static constexpr int kOccupied = kStatus + 4 * kItemKinds;  // nonempty station per cell, 25
  static constexpr int kAction = kOccupied + kCells;       // action one-hot, 41
  static constexpr int kValid = kAction + kNumActions;     // precondition satisfied, 1
  static constexpr int kRelational = kValid + 1;           // verb one-hot + recipe progress, 18
  static constexpr int kDim = kRelational + kVerbs + 11;
};

struct FeatureVector {
  std::vector<double> values;
  int schema_version = kFeatureSchema;
  bool operator==(const FeatureVector&) const = default;
};

// Throws SchemaMismatch when s was encoded under another state schema.
FeatureVector featurize(const StateKey& s, ActionId a);

class KitchenFeaturizer final : public Featurizer {
 public:
  int schema_version() const override { return kFeatureSchema; }
  std::size_t dim() const override { return FeatureLayout::kDim; }
  std::vector<double> features(const StateKey& s, std::span<const ActionId> actions) const override;
};

}  // namespace planlab::kitchen
