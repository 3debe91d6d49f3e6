#include "planlab/kitchen.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

namespace planlab::kitchen {

namespace {

constexpr std::uint8_t kNoItem = 0xFF;

constexpr std::array<std::string_view, 4> kTaskNames = {"CheeseSandwich", "Burger", "CheeseBurger",
                                                        "DoubleCheeseBurger"};
constexpr std::array<std::string_view, kItemKinds> kItemNames = {"bread", "bottom_bun", "top_bun",
                                                                 "patty", "cheese", "lettuce"};
constexpr std::array<std::string_view, 4> kStationNames = {"counter", "stove", "board", "plate"};

Item raw(ItemKind k) { return {k, false, false}; }
Item cooked(ItemKind k) { return {k, true, false}; }

}  // namespace

std::uint8_t Item::code() const {
  return static_cast<std::uint8_t>(static_cast<int>(kind) | (cooked ? 8 : 0) | (cut ? 16 : 0));
}

Item Item::from_code(std::uint8_t c) {
  if ((c & 7) >= kItemKinds || c >= 32) throw UsageError("bad item code " + std::to_string(c));
  return {static_cast<ItemKind>(c & 7), (c & 8) != 0, (c & 16) != 0};
}

const Recipe& recipe(TaskKind kind) {
  using enum ItemKind;
  static const std::array<Recipe, 4> recipes = {
      Recipe{raw(Bread), raw(Cheese), raw(Bread)},
      Recipe{raw(BottomBun), cooked(Patty), raw(TopBun)},
      Recipe{raw(BottomBun), cooked(Patty), raw(Cheese), raw(TopBun)},
      Recipe{raw(BottomBun), cooked(Patty), raw(Cheese), cooked(Patty), raw(Cheese), raw(TopBun)},
  };
  return recipes[static_cast<int>(kind)];
}

std::string_view task_name(TaskKind kind) { return kTaskNames[static_cast<int>(kind)]; }

TaskKind parse_task(std::string_view name) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
    if (kTaskNames[i] == name) return static_cast<TaskKind>(i);
  }
  throw UsageError("unknown task '" + std::string(name) + "'");
}

std::string_view item_name(ItemKind kind) { return kItemNames[static_cast<int>(kind)]; }
std::string_view station_name(StationType type) { return kStationNames[static_cast<int>(type)]; }

int default_timeout(TaskKind kind) {
  constexpr std::array<int, 4> t = {15, 15, 23, 35};
  return t[static_cast<int>(kind)];
}

int expert_length_bound(TaskKind kind) {
  constexpr std::array<int, 4> t = {10, 10, 15, 23};
  return t[static_cast<int>(kind)];
}

// ---- layouts ----

namespace {

const Station* station_at(const KitchenLayout& layout, Cell c) {
  for (const auto& st : layout.stations) {
    if (st.pos == c) return &st;
  }
  return nullptr;
}

bool in_grid(const KitchenLayout& layout, Cell c) {
  return c.x >= 0 && c.y >= 0 && c.x < layout.width && c.y < layout.height;
}

std::string cell_str(Cell c) { return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")"; }

template <std::size_t N>
int lookup(const std::array<std::string_view, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == s) return static_cast<int>(i);
  }
  throw UsageError(std::string("unknown ") + what + " '" + s + "'");
}

Cell cell_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw UsageError("positions are [x, y] pairs");
  return {j[0].get<int>(), j[1].get<int>()};
}

nlohmann::ordered_json cell_to_json(Cell c) { return nlohmann::ordered_json::array({c.x, c.y}); }

}  // namespace

void validate(const KitchenLayout& layout) {
  if (layout.width < 1 || layout.height < 1 || layout.width > kMaxGrid || layout.height > kMaxGrid) {
    throw UsageError("grid must be between 1x1 and 5x5");
  }
  if (layout.stations.empty()) throw UsageError("layout has no stations");
  bool has_plate = false;
  for (std::size_t i = 0; i < layout.stations.size(); ++i) {
    const auto& st = layout.stations[i];
    if (!in_grid(layout, st.pos)) throw UsageError("station outside the grid at " + cell_str(st.pos));
    for (std::size_t k = 0; k < i; ++k) {
      if (layout.stations[k].pos == st.pos) throw UsageError("two stations share cell " + cell_str(st.pos));
    }
    has_plate = has_plate || st.type == StationType::Plate;
  }
  if (!has_plate) throw UsageError("layout has no plate station");
  if (!station_at(layout, layout.agent_start)) throw UsageError("agent does not start on a station");
  for (const auto& p : layout.items) {
    const Station* st = station_at(layout, p.pos);
    if (!st) throw UsageError("item placed off-station at " + cell_str(p.pos));
    if (st->type == StationType::Stove && p.item.kind != ItemKind::Patty) {
      throw UsageError("only patties may start on a stove");
    }
    if (st->type == StationType::Board && p.item.kind != ItemKind::Lettuce) {
      throw UsageError("only lettuce may start on a cutting board");
    }
  }
}

nlohmann::ordered_json to_json(const KitchenLayout& layout) {
  nlohmann::ordered_json j;
  j["schema"] = kLayoutSchema;
  j["name"] = layout.name;
  j["grid_size"] = {layout.width, layout.height};
  auto& stations = j["stations"] = nlohmann::ordered_json::array();
  for (const auto& st : layout.stations) {
    stations.push_back({{"type", station_name(st.type)}, {"pos", cell_to_json(st.pos)}});
  }
  auto& items = j["items"] = nlohmann::ordered_json::array();
  for (const auto& p : layout.items) {
    items.push_back({{"kind", item_name(p.item.kind)},
                     {"cooked", p.item.cooked},
                     {"cut", p.item.cut},
                     {"pos", cell_to_json(p.pos)}});
  }
  j["agent_start"] = cell_to_json(layout.agent_start);
  return j;
}

KitchenLayout layout_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<int>() != kLayoutSchema) {
      throw SchemaMismatch("layout schema " + j.at("schema").dump() + " is not supported");
    }
    KitchenLayout out;
    out.name = j.value("name", "");
    const auto& g = j.at("grid_size");
    out.width = g.at(0).get<int>();
    out.height = g.at(1).get<int>();
    for (const auto& st : j.at("stations")) {
      out.stations.push_back({static_cast<StationType>(lookup(kStationNames, st.at("type").get<std::string>(),
                                                              "station type")),
                              cell_from_json(st.at("pos"))});
    }
    for (const auto& it : j.at("items")) {
      Item item{static_cast<ItemKind>(lookup(kItemNames, it.at("kind").get<std::string>(), "item kind")),
                it.value("cooked", false), it.value("cut", false)};
      out.items.push_back({item, cell_from_json(it.at("pos"))});
    }
    out.agent_start = cell_from_json(j.at("agent_start"));
    validate(out);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed layout: ") + e.what());
  }
}

KitchenLayout load_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open layout " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("layout " + path.string() + " is not JSON: " + e.what());
  }
  return layout_from_json(j);
}

void save_layout(const std::filesystem::path& path, const KitchenLayout& layout) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write layout " + path.string());
  out << dump_json(to_json(layout));
}

KitchenLayout canonical_layout(TaskKind kind) {
  using enum ItemKind;
  constexpr Cell plate{2, 2}, stove{0, 0}, board{4, 0}, c1{0, 4}, c2{4, 4}, c3{2, 0};
  KitchenLayout l;
  l.name = "canonical-" + std::string(task_name(kind));
  l.stations = {{StationType::Plate, plate}, {StationType::Stove, stove},   {StationType::Board, board},
                {StationType::Counter, c1},  {StationType::Counter, c2}, {StationType::Counter, c3}};
  l.agent_start = c3;
  switch (kind) {
    case TaskKind::CheeseSandwich:
      l.items = {{raw(Bread), plate}, {raw(Cheese), c1}, {raw(Bread), c2}};
      break;
    case TaskKind::Burger:
      l.items = {{raw(BottomBun), plate}, {raw(Patty), stove}, {raw(TopBun), c2}};
      break;
    case TaskKind::CheeseBurger:
      l.items = {{raw(BottomBun), plate}, {raw(Patty), stove}, {raw(Cheese), c1}, {raw(TopBun), c2}};
      break;
    case TaskKind::DoubleCheeseBurger:
      l.items = {{raw(BottomBun), plate}, {raw(Patty), stove}, {raw(Patty), stove},
                 {raw(Cheese), c1},       {raw(Cheese), c1},   {raw(TopBun), c2}};
      break;
  }
  l.items.push_back({raw(Lettuce), board});
  return l;
}

KitchenLayout sample_layout(TaskKind kind, std::uint64_t seed) {
  using enum ItemKind;
  Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(kind) + 1)));
  const Recipe& r = recipe(kind);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<int> cells(kCells);
    std::iota(cells.begin(), cells.end(), 0);
    for (std::size_t i = cells.size() - 1; i > 0; --i) std::swap(cells[i], cells[rng.below(i + 1)]);

    KitchenLayout l;
    l.name = "sampled-" + std::string(task_name(kind)) + "-" + std::to_string(seed);
    const std::array<StationType, 7> types = {StationType::Plate,   StationType::Stove,   StationType::Board,
                                              StationType::Counter, StationType::Counter, StationType::Counter,
                                              StationType::Counter};
    for (std::size_t i = 0; i < types.size(); ++i) l.stations.push_back({types[i], Cell::from_index(cells[i])});
    const Cell plate = l.stations[0].pos, stove = l.stations[1].pos, board = l.stations[2].pos;
    std::array<Cell, 4> counters = {l.stations[3].pos, l.stations[4].pos, l.stations[5].pos, l.stations[6].pos};

    l.items.push_back({raw(r[0].kind), plate});
    const Cell top_counter = counters[0];
    const Cell cheese_a = counters[1];
    const Cell cheese_b = rng.below(2) == 0 ? counters[1] : counters[2];
    int cheese_seen = 0;
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
      if (r[i].kind == Patty) {
        l.items.push_back({raw(Patty), stove});
      } else {
        l.items.push_back({raw(r[i].kind), cheese_seen++ == 0 ? cheese_a : cheese_b});
      }
    }
    l.items.push_back({raw(r.back().kind), top_counter});
    if (rng.below(2) == 0) l.items.push_back({raw(Lettuce), board});
    l.agent_start = l.stations[rng.below(l.stations.size())].pos;

    try {
      const auto mdp = build_task(kind, l);
      const auto plan = plan_optimal(*mdp, mdp->initial_state());
      if (plan.t_gt + 1 <= default_timeout(kind)) return l;
    } catch (const InfeasibleLayout&) {
    }
  }
  throw InfeasibleLayout("layout sampler found no feasible layout");
}

std::vector<KitchenLayout> sample_layouts(TaskKind kind, std::uint64_t seed, int count) {
  std::vector<KitchenLayout> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(sample_layout(kind, episode_seed(seed, static_cast<std::uint64_t>(i))));
  return out;
}

// ---- state encoding ----

StateKey encode(const KitchenState& s) {
  std::string b;
  b.reserve(4 + 3 * s.stations.size() + 16);
  b.push_back(static_cast<char>(kStateSchema));
  b.push_back(static_cast<char>(s.task));
  b.push_back(static_cast<char>(s.stations.size()));
  for (const auto& st : s.stations) {
    b.push_back(static_cast<char>(st.type));
    b.push_back(static_cast<char>(st.pos.index()));
  }
  b.push_back(static_cast<char>(s.agent));
  b.push_back(static_cast<char>(s.held ? s.held->code() : kNoItem));
  for (const auto& stack : s.stacks) {
    b.push_back(static_cast<char>(stack.size()));
    for (const auto& it : stack) b.push_back(static_cast<char>(it.code()));
  }
  return StateKey(std::move(b));
}

KitchenState decode(const StateKey& key) {
  const std::string& b = key.bytes();
  std::size_t i = 0;
  auto byte = [&]() -> std::uint8_t {
    if (i >= b.size()) throw UsageError("truncated kitchen state " + key.hex());
    return static_cast<std::uint8_t>(b[i++]);
  };
  const int schema = byte();
  if (schema != kStateSchema) {
    throw SchemaMismatch("state encoded under schema " + std::to_string(schema) + ", expected " +
                         std::to_string(kStateSchema));
  }
  KitchenState s;
  const int task = byte();
  if (task >= 4) throw UsageError("bad task byte in kitchen state");
  s.task = static_cast<TaskKind>(task);
  const int n = byte();
  for (int k = 0; k < n; ++k) {
    const int type = byte();
    const int cell = byte();
    if (type >= 4 || cell >= kCells) throw UsageError("bad station in kitchen state");
    s.stations.push_back({static_cast<StationType>(type), Cell::from_index(cell)});
  }
  s.agent = byte();
  if (s.agent >= n) throw UsageError("agent index out of range in kitchen state");
  const std::uint8_t held = byte();
  if (held != kNoItem) s.held = Item::from_code(held);
  s.stacks.resize(static_cast<std::size_t>(n));
  for (auto& stack : s.stacks) {
    const int len = byte();
    for (int k = 0; k < len; ++k) stack.push_back(Item::from_code(byte()));
  }
  if (i != b.size()) throw UsageError("trailing bytes in kitchen state");
  return s;
}

// ---- actions ----

ActionId move_action(Cell c) { return make_action(c.index()); }
ActionId pick_action(ItemKind k) { return make_action(kCells + static_cast<int>(k)); }
ActionId place_action(ItemKind k) { return make_action(kCells + kItemKinds + static_cast<int>(k)); }

ActionSpec describe(ActionId a) {
  const int i = index_of(a);
  if (i < 0 || i >= kNumActions) throw InvalidAction("action " + std::to_string(i) + " is outside the vocabulary");
  if (i < kCells) return {Verb::Move, i};
  if (i < kCells + kItemKinds) return {Verb::Pick, i - kCells};
  if (i < kCells + 2 * kItemKinds) return {Verb::Place, i - kCells - kItemKinds};
  return {static_cast<Verb>(static_cast<int>(Verb::Cook) + (i - kCells - 2 * kItemKinds)), 0};
}

std::string action_string(ActionId a) {
  const ActionSpec spec = describe(a);
  switch (spec.verb) {
    case Verb::Move: {
      const Cell c = Cell::from_index(spec.arg);
      return "move(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")";
    }
    case Verb::Pick: return "pick(" + std::string(kItemNames[spec.arg]) + ")";
    case Verb::Place: return "place(" + std::string(kItemNames[spec.arg]) + ")";
    case Verb::Cook: return "cook";
    case Verb::Cut: return "cut";
    case Verb::Stack: return "stack";
    case Verb::Plate: return "plate";
  }
  return "?";
}

namespace {

bool accepts(StationType type, const Item& item, const Recipe& r) {
  switch (type) {
    case StationType::Counter: return true;
    case StationType::Stove: return item.kind == ItemKind::Patty;
    case StationType::Board: return item.kind == ItemKind::Lettuce;
    case StationType::Plate: return r.front() == item;
  }
  return false;
}

bool is_recipe_prefix(const std::vector<Item>& stack, const Recipe& r) {
  return stack.size() <= r.size() && std::equal(stack.begin(), stack.end(), r.begin());
}

}  // namespace

std::vector<ActionId> valid_actions(const KitchenState& s) {
  const Recipe& r = recipe(s.task);
  const auto& here = s.stations[static_cast<std::size_t>(s.agent)];
  const auto& stack = s.stacks[static_cast<std::size_t>(s.agent)];
  std::vector<ActionId> out;
  for (std::size_t j = 0; j < s.stations.size(); ++j) {
    if (static_cast<int>(j) != s.agent) out.push_back(move_action(s.stations[j].pos));
  }
  std::sort(out.begin(), out.end());
  if (!s.held && !stack.empty()) out.push_back(pick_action(stack.back().kind));
  if (s.held && stack.empty() && accepts(here.type, *s.held, r)) out.push_back(place_action(s.held->kind));
  if (!s.held && here.type == StationType::Stove && !stack.empty() && stack.back().kind == ItemKind::Patty &&
      !stack.back().cooked) {
    out.push_back(kCook);
  }
  if (!s.held && here.type == StationType::Board && !stack.empty() && stack.back().kind == ItemKind::Lettuce &&
      !stack.back().cut) {
    out.push_back(kCut);
  }
  if (s.held && here.type == StationType::Plate && !stack.empty() && stack.size() < r.size() &&
      r[stack.size()] == *s.held) {
    out.push_back(kStack);
  }
  if (here.type == StationType::Plate && stack == r) out.push_back(kPlate);
  return out;
}

KitchenState apply(const KitchenState& s, ActionId a) {
  KitchenState n = s;
  auto& stack = n.stacks[static_cast<std::size_t>(n.agent)];
  const ActionSpec spec = describe(a);
  switch (spec.verb) {
    case Verb::Move:
      for (std::size_t j = 0; j < n.stations.size(); ++j) {
        if (n.stations[j].pos.index() == spec.arg) n.agent = static_cast<int>(j);
      }
      break;
    case Verb::Pick:
      n.held = stack.back();
      stack.pop_back();
      break;
    case Verb::Place:
    case Verb::Stack:
      stack.push_back(*n.held);
      n.held.reset();
      break;
    case Verb::Cook: stack.back().cooked = true; break;
    case Verb::Cut: stack.back().cut = true; break;
    case Verb::Plate: break;
  }
  return n;
}

bool is_served(const KitchenState& s, ActionId a) {
  if (a != kPlate) return false;
  const auto& here = s.stations[static_cast<std::size_t>(s.agent)];
  return here.type == StationType::Plate && s.stacks[static_cast<std::size_t>(s.agent)] == recipe(s.task);
}

namespace {

KitchenState initial_kitchen_state(TaskKind kind, const KitchenLayout& layout) {
  KitchenState s;
  s.task = kind;
  s.stations = layout.stations;
  s.stacks.resize(layout.stations.size());
  for (std::size_t j = 0; j < layout.stations.size(); ++j) {
    if (layout.stations[j].pos == layout.agent_start) s.agent = static_cast<int>(j);
  }
  for (const auto& p : layout.items) {
    for (std::size_t j = 0; j < layout.stations.size(); ++j) {
      if (layout.stations[j].pos == p.pos) s.stacks[j].push_back(p.item);
    }
  }
  return s;
}

}  // namespace

KitchenMdp::KitchenMdp(TaskKind kind, const KitchenLayout& layout, int horizon)
    : kind_(kind), layout_(layout), horizon_(horizon > 0 ? horizon : default_timeout(kind)) {
  validate(layout_);
  const KitchenState s0 = initial_kitchen_state(kind, layout_);
  for (std::size_t j = 0; j < s0.stations.size(); ++j) {
    if (s0.stations[j].type == StationType::Plate && !is_recipe_prefix(s0.stacks[j], recipe(kind))) {
      throw InfeasibleLayout("plate at " + cell_str(s0.stations[j].pos) + " holds items out of recipe order");
    }
  }
  s0_ = encode(s0);
}

std::vector<ActionId> KitchenMdp::valid_actions(const StateKey& s) const { return kitchen::valid_actions(decode(s)); }

StateKey KitchenMdp::transition(const StateKey& s, ActionId a) const { return encode(apply(decode(s), a)); }

bool KitchenMdp::completion(const StateKey& s, ActionId a) const { return is_served(decode(s), a); }

std::vector<Transition> KitchenMdp::expand(const StateKey& s) const {
  const KitchenState ks = decode(s);
  std::vector<Transition> out;
  for (ActionId a : kitchen::valid_actions(ks)) out.push_back({a, encode(apply(ks, a)), is_served(ks, a)});
  return out;
}

std::shared_ptr<const KitchenMdp> build_task(TaskKind kind, const KitchenLayout& layout, int horizon) {
  try {
    validate(layout);
  } catch (const UsageError& e) {
    throw InfeasibleLayout(e.what());
  }
  std::map<ItemKind, int> need;
  for (const auto& it : recipe(kind)) ++need[it.kind];
  for (const auto& [k, n] : need) {
    const auto have = std::count_if(layout.items.begin(), layout.items.end(),
                                    [k](const ItemPlacement& p) { return p.item.kind == k; });
    if (have != n) {
      throw InfeasibleLayout(std::string(task_name(kind)) + " needs " + std::to_string(n) + " " +
                             std::string(item_name(k)) + ", layout has " + std::to_string(have));
    }
  }
  auto mdp = std::make_shared<const KitchenMdp>(kind, layout, horizon);
  try {
    plan_optimal(*mdp, mdp->initial_state());
  } catch (const GoalUnreachable&) {
    throw InfeasibleLayout(std::string(task_name(kind)) + " cannot be completed on layout '" + layout.name + "'");
  }
  return mdp;
}

// ---- subtasks ----

SubtaskMdp::SubtaskMdp(std::shared_ptr<const TaskMdp> parent, const ExpertTrajectory& expert, int k_star)
    : parent_(std::move(parent)), k_star_(k_star) {
  if (k_star < 0 || k_star >= expert.t_gt) {
    throw IndexOutOfRange("subtask index " + std::to_string(k_star) + " outside [0, " + std::to_string(expert.t_gt) +
                          ")");
  }
  target_ = expert.at(k_star);
  horizon_ = std::max(1, k_star + parent_->horizon() - expert.t_gt);
}

std::vector<Transition> SubtaskMdp::expand(const StateKey& s) const {
  auto out = parent_->expand(s);
  const bool at_target = s == target_.state;
  for (auto& t : out) t.completes = at_target && t.action == target_.action;
  return out;
}

std::shared_ptr<const SubtaskMdp> make_subtask(std::shared_ptr<const TaskMdp> parent, const ExpertTrajectory& expert,
                                               int k_star) {
  return std::make_shared<const SubtaskMdp>(std::move(parent), expert, k_star);
}

// ---- features ----

namespace {

struct Progress {
  int plate = -1;  // assembly plate station
  std::optional<Item> next;
  int cooked_patties_needed = 0;
  int cut_lettuce_needed = 0;
};

Progress progress_of(const KitchenState& s) {
  Progress p;
  std::size_t best = 0;
  for (std::size_t j = 0; j < s.stations.size(); ++j) {
    if (s.stations[j].type != StationType::Plate) continue;
    if (p.plate < 0 || s.stacks[j].size() > best) {
      p.plate = static_cast<int>(j);
      best = s.stacks[j].size();
    }
  }
  const Recipe& r = recipe(s.task);
  if (best < r.size()) p.next = r[best];
  for (std::size_t i = best; i < r.size(); ++i) {
    p.cooked_patties_needed += r[i].kind == ItemKind::Patty && r[i].cooked;
    p.cut_lettuce_needed += r[i].kind == ItemKind::Lettuce && r[i].cut;
  }
  auto spare = [&](const Item& it) {
    p.cooked_patties_needed -= it.kind == ItemKind::Patty && it.cooked;
    p.cut_lettuce_needed -= it.kind == ItemKind::Lettuce && it.cut;
  };
  if (s.held) spare(*s.held);
  for (std::size_t j = 0; j < s.stations.size(); ++j) {
    if (s.stations[j].type == StationType::Plate) continue;
    for (const auto& it : s.stacks[j]) spare(it);
  }
  return p;
}

std::optional<StationType> processing_station(const Item& wanted) {
  if (wanted.cooked) return StationType::Stove;
  if (wanted.cut) return StationType::Board;
  return std::nullopt;
}

void fill_features(const KitchenState& s, const Progress& prog, const std::vector<ActionId>& valid, ActionId a,
                   std::span<double> f) {
  using L = FeatureLayout;
  std::fill(f.begin(), f.end(), 0.0);
  const auto& here = s.stations[static_cast<std::size_t>(s.agent)];
  f[L::kAgent + here.pos.index()] = 1.0;
  f[L::kHeld + (s.held ? 1 + static_cast<int>(s.held->kind) : 0)] = 1.0;

  auto mark = [&](const Item& it, bool on_plate) {
    const int base = L::kStatus + 4 * static_cast<int>(it.kind);
    if (on_plate) {
      f[base + 3] = 1.0;
      return;
    }
    if (!it.cooked && !it.cut) f[base] = 1.0;
    if (it.cooked) f[base + 1] = 1.0;
    if (it.cut) f[base + 2] = 1.0;
  };
  if (s.held) mark(*s.held, false);
  for (std::size_t j = 0; j < s.stations.size(); ++j) {
    const bool plate = s.stations[j].type == StationType::Plate;
    for (const auto& it : s.stacks[j]) mark(it, plate);
    if (!s.stacks[j].empty()) f[L::kOccupied + s.stations[j].pos.index()] = 1.0;
  }

  f[L::kAction + index_of(a)] = 1.0;
  f[L::kValid] = std::binary_search(valid.begin(), valid.end(), a) ? 1.0 : 0.0;

  const ActionSpec spec = describe(a);
  f[L::kRelational + static_cast<int>(spec.verb)] = 1.0;
  const int rel = L::kRelational + kVerbs;
  const auto& next = prog.next;
  const auto& stack = s.stacks[static_cast<std::size_t>(s.agent)];
  auto ready = [&](const Item& it) { return next && it == *next; };
  auto unready = [&](const Item& it) { return next && it.kind == next->kind && !(it == *next); };

  switch (spec.verb) {
    case Verb::Move: {
      int target = -1;
      for (std::size_t j = 0; j < s.stations.size(); ++j) {
        if (s.stations[j].pos.index() == spec.arg) target = static_cast<int>(j);
      }
      if (target < 0) break;
      const auto& tst = s.stations[static_cast<std::size_t>(target)];
      const auto& tstack = s.stacks[static_cast<std::size_t>(target)];
      const bool tplate = tst.type == StationType::Plate;
      if (!s.held && !tplate && !tstack.empty()) {
        f[rel + 0] = ready(tstack.back()) ? 1.0 : 0.0;
        f[rel + 1] = unready(tstack.back()) ? 1.0 : 0.0;
      }
      if (s.held && ready(*s.held) && target == prog.plate) f[rel + 2] = 1.0;
      if (s.held && unready(*s.held) && tstack.empty() && processing_station(*next) == tst.type) f[rel + 3] = 1.0;
      if (tplate && tstack == recipe(s.task)) f[rel + 4] = 1.0;
      break;
    }
    case Verb::Pick:
      if (stack.empty()) break;
      if (here.type == StationType::Plate) {
        f[rel + 7] = 1.0;
      } else {
        f[rel + 5] = ready(stack.back()) ? 1.0 : 0.0;
        f[rel + 6] = unready(stack.back()) ? 1.0 : 0.0;
      }
      break;
    case Verb::Place:
      if (s.held && unready(*s.held) && processing_station(*next) == here.type) f[rel + 8] = 1.0;
      break;
    case Verb::Cook: f[rel + 9] = prog.cooked_patties_needed > 0 ? 1.0 : 0.0; break;
    case Verb::Cut: f[rel + 10] = prog.cut_lettuce_needed > 0 ? 1.0 : 0.0; break;
    case Verb::Stack:
    case Verb::Plate: break;
  }
}

}  // namespace

FeatureVector featurize(const StateKey& s, ActionId a) {
  const KitchenState ks = decode(s);
  FeatureVector out;
  out.values.assign(FeatureLayout::kDim, 0.0);
  fill_features(ks, progress_of(ks), kitchen::valid_actions(ks), a, out.values);
  return out;
}

std::vector<double> KitchenFeaturizer::features(const StateKey& s, std::span<const ActionId> actions) const {
  const KitchenState ks = decode(s);
  const Progress prog = progress_of(ks);
  const auto valid = kitchen::valid_actions(ks);
  std::vector<double> out(actions.size() * FeatureLayout::kDim);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    fill_features(ks, prog, valid, actions[i],
                  std::span<double>(out.data() + i * FeatureLayout::kDim, FeatureLayout::kDim));
  }
  return out;
}

}  // namespace planlab::kitchen
