#include "planlab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>

#include "planlab/fixtures.hpp"

namespace planlab::harness {

using kitchen::TaskKind;

// ---- config ----

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("config key '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

const char* ref_name(RefKind k) { return k == RefKind::Uniform ? "uniform" : "epsilon_mixture"; }

const char* class_name(PolicyClass c) {
  switch (c) {
    case PolicyClass::Tabular: return "tabular";
    case PolicyClass::Featurized: return "featurized";
    case PolicyClass::Both: return "both";
  }
  return "?";
}

}  // namespace

void ExperimentConfig::validate() const {
  grpo.validate();
  if (epsilon < 0.0 || epsilon > 1.0) throw UsageError("epsilon must lie in [0, 1]");
  if (layout_count < 1) throw UsageError("layout_count must be at least 1");
  if (train_layout_count < 0) throw UsageError("train_layout_count must be nonnegative");
  if (episodes_per_layout < 1) throw UsageError("episodes_per_layout must be at least 1");
  if (timeout < 0) throw UsageError("timeout must be nonnegative");
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  if (output_dir.empty()) throw UsageError("output_dir must not be empty");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  bool have_version = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("config line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view v = trim(line.substr(eq + 1));
    if (key == "version") {
      if (parse_number<int>(key, v) != kConfigVersion) throw UsageError("unsupported config version");
      have_version = true;
    } else if (key == "task") {
      cfg.task = kitchen::parse_task(v);
    } else if (key == "layout") {
      cfg.layout = std::string(v);
    } else if (key == "layout_seed") {
      cfg.layout_seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "layout_count") {
      cfg.layout_count = parse_number<int>(key, v);
    } else if (key == "ref_policy") {
      if (v == "epsilon_mixture") cfg.ref_policy = RefKind::EpsilonMixture;
      else if (v == "uniform") cfg.ref_policy = RefKind::Uniform;
      else throw UsageError("ref_policy must be epsilon_mixture or uniform");
    } else if (key == "epsilon") {
      cfg.epsilon = parse_number<double>(key, v);
    } else if (key == "policy_class") {
      if (v == "tabular") cfg.policy_class = PolicyClass::Tabular;
      else if (v == "featurized") cfg.policy_class = PolicyClass::Featurized;
      else if (v == "both") cfg.policy_class = PolicyClass::Both;
      else throw UsageError("policy_class must be tabular, featurized or both");
    } else if (key == "tabular_dataset") {
      if (v == "trajectory") cfg.tabular_dataset = DatasetMode::TrajectoryOnly;
      else if (v == "all_states") cfg.tabular_dataset = DatasetMode::AllStates;
      else throw UsageError("tabular_dataset must be trajectory or all_states");
    } else if (key == "beta") {
      cfg.grpo.beta = parse_number<double>(key, v);
    } else if (key == "group_size") {
      cfg.grpo.group_size = parse_number<int>(key, v);
    } else if (key == "learning_rate") {
      cfg.grpo.learning_rate = parse_number<double>(key, v);
    } else if (key == "max_iterations") {
      cfg.grpo.max_iterations = parse_number<int>(key, v);
    } else if (key == "fixed_point_tol") {
      cfg.grpo.fixed_point_tol = parse_number<double>(key, v);
    } else if (key == "variance_floor") {
      cfg.grpo.variance_floor = parse_number<double>(key, v);
    } else if (key == "seed") {
      cfg.grpo.seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "batch_size") {
      cfg.grpo.batch_size = parse_number<int>(key, v);
    } else if (key == "steps") {
      cfg.grpo.steps = parse_number<int>(key, v);
    } else if (key == "temperature") {
      cfg.temperature = parse_number<double>(key, v);
    } else if (key == "train_layout_seed") {
      cfg.train_layout_seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "train_layout_count") {
      cfg.train_layout_count = parse_number<int>(key, v);
    } else if (key == "timeout") {
      cfg.timeout = parse_number<int>(key, v);
    } else if (key == "episodes_per_layout") {
      cfg.episodes_per_layout = parse_number<int>(key, v);
    } else if (key == "eval_seed") {
      cfg.eval_seed = parse_number<std::uint64_t>(key, v);
    } else if (key == "output_dir") {
      cfg.output_dir = std::string(v);
    } else {
      throw UsageError("unknown config key '" + key + "'");
    }
  }
  if (!have_version) throw UsageError("config must declare 'version = 1'");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& cfg) {
  std::ostringstream o;
  o << "version = " << kConfigVersion << "\n"
    << "task = " << kitchen::task_name(cfg.task) << "\n"
    << "layout = " << cfg.layout << "\n"
    << "layout_seed = " << cfg.layout_seed << "\n"
    << "layout_count = " << cfg.layout_count << "\n"
    << "ref_policy = " << ref_name(cfg.ref_policy) << "\n"
    << "epsilon = " << fmt_double(cfg.epsilon) << "\n"
    << "policy_class = " << class_name(cfg.policy_class) << "\n"
    << "tabular_dataset = " << (cfg.tabular_dataset == DatasetMode::AllStates ? "all_states" : "trajectory") << "\n"
    << "beta = " << fmt_double(cfg.grpo.beta) << "\n"
    << "group_size = " << cfg.grpo.group_size << "\n"
    << "learning_rate = " << fmt_double(cfg.grpo.learning_rate) << "\n"
    << "max_iterations = " << cfg.grpo.max_iterations << "\n"
    << "fixed_point_tol = " << fmt_double(cfg.grpo.fixed_point_tol) << "\n"
    << "variance_floor = " << fmt_double(cfg.grpo.variance_floor) << "\n"
    << "seed = " << cfg.grpo.seed << "\n"
    << "batch_size = " << cfg.grpo.batch_size << "\n"
    << "steps = " << cfg.grpo.steps << "\n"
    << "temperature = " << fmt_double(cfg.temperature) << "\n"
    << "train_layout_seed = " << cfg.train_layout_seed << "\n"
    << "train_layout_count = " << cfg.train_layout_count << "\n"
    << "timeout = " << cfg.timeout << "\n"
    << "episodes_per_layout = " << cfg.episodes_per_layout << "\n"
    << "eval_seed = " << cfg.eval_seed << "\n"
    << "output_dir = " << cfg.output_dir << "\n";
  return o.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

// Config text without output_dir, which never changes results.
std::string result_relevant_text(const ExperimentConfig& cfg) {
  std::string text = to_text(cfg);
  return text.substr(0, text.rfind("output_dir = "));
}

}  // namespace

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(result_relevant_text(cfg))); }

// ---- reference policies ----

TabularPolicy make_reference(const TaskMdp& mdp, const ExpertPolicy& expert, RefKind kind, double epsilon,
                             std::span<const StateKey> states) {
  if (epsilon < 0.0 || epsilon > 1.0) throw UsageError("epsilon must lie in [0, 1]");
  TabularPolicy out;
  for (const auto& s : states) {
    auto actions = mdp.valid_actions(s);
    const double n = static_cast<double>(actions.size());
    std::vector<double> probs(actions.size(), 1.0 / n);
    const ActionId best = expert.action_of(s);
    if (kind == RefKind::EpsilonMixture && best != kNoAction) {
      for (std::size_t i = 0; i < actions.size(); ++i) {
        probs[i] = (actions[i] == best ? 1.0 - epsilon : 0.0) + epsilon / n;
      }
    }
    out.set(s, std::move(actions), std::move(probs));
  }
  return out;
}

// ---- metrics ----

std::string Metrics::asst_text() const { return asst ? fmt_fixed(*asst) : "---"; }

bool metric_algebra_holds(const Metrics& m) {
  if (m.sr < 0.0 || m.sr > 1.0) return false;
  if ((m.sr == 0.0) != !m.asst.has_value()) return false;
  if (m.asat > m.timeout) return false;
  if (m.asst && *m.asst > m.asat + 1e-12) return false;
  if (m.sr == 0.0 && m.asat != m.timeout) return false;
  return true;
}

Metrics evaluate_on_layouts(const Policy& policy, TaskKind task, std::span<const kitchen::KitchenLayout> layouts,
                            int timeout, int episodes_per_layout, std::uint64_t seed) {
  struct Episode {
    bool success = false;
    bool missing = false;
    int turns = 0;
  };
  std::vector<std::shared_ptr<const kitchen::KitchenMdp>> mdps;
  for (const auto& l : layouts) mdps.push_back(std::make_shared<const kitchen::KitchenMdp>(task, l, timeout));
  const long per = episodes_per_layout;
  const long total = per * static_cast<long>(layouts.size());
  std::vector<Episode> eps(static_cast<std::size_t>(total));
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < total; ++i) {
    const auto& mdp = *mdps[static_cast<std::size_t>(i / per)];
    Episode& e = eps[static_cast<std::size_t>(i)];
    try {
      const auto out = rollout(mdp, policy, mdp.initial_state(), timeout, episode_seed(seed, static_cast<std::uint64_t>(i)));
      e.success = out.trajectory.success;
      e.turns = e.success ? out.turns_used : timeout;
    } catch (const PolicyStateMissing&) {
      e.missing = true;
      e.turns = timeout;
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  Metrics m;
  m.timeout = timeout;
  m.episodes = total;
  long all_turns = 0, ok_turns = 0;
  for (const auto& e : eps) {
    all_turns += e.turns;
    if (e.success) {
      ++m.successes;
      ok_turns += e.turns;
    }
    m.missing += e.missing;
  }
  m.sr = static_cast<double>(m.successes) / static_cast<double>(total);
  m.asat = static_cast<double>(all_turns) / static_cast<double>(total);
  if (m.successes > 0) m.asst = static_cast<double>(ok_turns) / static_cast<double>(m.successes);
  return m;
}

Metrics evaluate(const Policy& policy, TaskKind task, const ExperimentConfig& cfg) {
  const auto layouts = kitchen::sample_layouts(task, cfg.layout_seed, cfg.layout_count);
  const int timeout = cfg.timeout > 0 ? cfg.timeout : kitchen::default_timeout(task);
  return evaluate_on_layouts(policy, task, layouts, timeout, cfg.episodes_per_layout, cfg.eval_seed);
}

void write_metrics_csv_header(std::ostream& out) {
  out << "task,policy,layouts,episodes,successes,missing,sr,asat,asst\n";
}

void write_metrics_csv_row(std::ostream& out, std::string_view task, std::string_view policy, int layouts,
                           const Metrics& m) {
  out << task << ',' << policy << ',' << layouts << ',' << m.episodes << ',' << m.successes << ',' << m.missing << ','
      << fmt_fixed(m.sr) << ',' << fmt_fixed(m.asat) << ',' << m.asst_text() << '\n';
}

nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["sr"] = m.sr;
  j["asat"] = m.asat;
  j["asst"] = m.asst ? nlohmann::ordered_json(*m.asst) : nlohmann::ordered_json("---");
  j["episodes"] = m.episodes;
  j["successes"] = m.successes;
  j["missing"] = m.missing;
  j["timeout"] = m.timeout;
  return j;
}

std::vector<double> PlannerPolicy::distribution(const StateKey& s, std::span<const ActionId> actions) const {
  // Kitchen dynamics are read from the key, so any kitchen MDP can plan.
  static const kitchen::KitchenMdp dynamics(TaskKind::CheeseSandwich,
                                            kitchen::canonical_layout(TaskKind::CheeseSandwich));
  std::vector<double> out(actions.size(), 0.0);
  try {
    const ActionId best = plan_optimal(dynamics, s).at(0).action;
    for (std::size_t i = 0; i < actions.size(); ++i) out[i] = actions[i] == best ? 1.0 : 0.0;
  } catch (const GoalUnreachable&) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(actions.size()));
  }
  return out;
}

// ---- cross-task matrix ----

void GeneralizationMatrix::write_csv(std::ostream& out) const {
  out << "trained_on,evaluated_on,episodes,successes,sr,asat,asst\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const Metrics& m = cells[r][c];
      out << kitchen::task_name(rows[r]) << ',' << kitchen::task_name(cols[c]) << ',' << m.episodes << ','
          << m.successes << ',' << fmt_fixed(m.sr) << ',' << fmt_fixed(m.asat) << ',' << m.asst_text() << '\n';
    }
  }
}

nlohmann::ordered_json GeneralizationMatrix::to_json() const {
  nlohmann::ordered_json j;
  auto& jr = j["rows"] = nlohmann::ordered_json::array();
  for (auto t : rows) jr.push_back(kitchen::task_name(t));
  auto& jc = j["cols"] = nlohmann::ordered_json::array();
  for (auto t : cols) jc.push_back(kitchen::task_name(t));
  auto& cellj = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& row : cells) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& m : row) arr.push_back(harness::to_json(m));
    cellj.push_back(std::move(arr));
  }
  return j;
}

GeneralizationMatrix cross_task_matrix(const std::map<TaskKind, std::shared_ptr<const Policy>>& policies,
                                       const ExperimentConfig& cfg) {
  if (policies.empty()) throw UsageError("cross-task matrix needs at least one trained policy");
  GeneralizationMatrix out;
  out.cols.assign(kitchen::kAllTasks.begin(), kitchen::kAllTasks.end());
  for (const auto& [task, policy] : policies) {
    out.rows.push_back(task);
    std::vector<Metrics> row;
    for (auto col : out.cols) row.push_back(evaluate(*policy, col, cfg));
    out.cells.push_back(std::move(row));
  }
  return out;
}

GeneralizationMatrix cross_task_matrix(const std::map<TaskKind, FeaturizedPolicy>& policies,
                                       const ExperimentConfig& cfg) {
  std::map<TaskKind, std::shared_ptr<const Policy>> generic;
  std::optional<int> version;
  for (const auto& [task, p] : policies) {
    const int v = p.featurizer().schema_version();
    if (version && *version != v) throw SchemaMismatch("policies in a cross-task matrix use different feature schemas");
    version = v;
    generic.emplace(task, std::make_shared<const FeaturizedPolicy>(p));
  }
  return cross_task_matrix(generic, cfg);
}

// ---- training ----

std::shared_ptr<const kitchen::KitchenMdp> build_configured_task(const ExperimentConfig& cfg) {
  const kitchen::KitchenLayout layout =
      cfg.layout == "canonical" ? kitchen::canonical_layout(cfg.task) : kitchen::load_layout(cfg.layout);
  return kitchen::build_task(cfg.task, layout, cfg.effective_timeout());
}

FeaturizedTraining train_featurized(TaskKind task, const ExperimentConfig& cfg) {
  std::vector<kitchen::KitchenLayout> layouts{kitchen::canonical_layout(task)};
  for (auto& l : kitchen::sample_layouts(task, cfg.train_layout_seed, cfg.train_layout_count)) {
    layouts.push_back(std::move(l));
  }
  std::vector<SingleTurnDataset> parts;
  TabularPolicy ref;
  for (const auto& layout : layouts) {
    const auto mdp = kitchen::build_task(task, layout);
    const auto traj = plan_optimal(*mdp, mdp->initial_state());
    const auto states = reachable_states(*mdp, mdp->initial_state(), kUnboundedDepth);
    const auto expert = complete_expert_policy(*mdp, traj, states);
    parts.push_back(build_dataset(*mdp, expert, traj, states, DatasetMode::AllStates));
    std::vector<StateKey> labelled;
    for (const auto& e : parts.back().entries) labelled.push_back(e.state);
    const auto part_ref = make_reference(*mdp, expert, cfg.ref_policy, cfg.epsilon, labelled);
    for (const auto& s : labelled) ref.set(s, part_ref.row(s).actions, part_ref.row(s).probs);
  }
  const auto dataset = merge_datasets(parts);
  FeaturizedPolicy init(std::make_shared<const kitchen::KitchenFeaturizer>(), cfg.temperature);
  auto [policy, report] = sampled_update(init, ref, dataset, cfg.grpo);
  return {std::move(policy), report, dataset.size()};
}

OutputLock::OutputLock(const std::filesystem::path& dir) : path_(dir / ".planlab.lock") {
  std::filesystem::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) throw UsageError("output directory " + dir.string() + " is in use (lockfile present)");
  std::fclose(f);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

namespace {

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw UsageError("cannot write " + (dir_ / name).string());
    out << content;
    artifacts_.push_back({name, hex64(fnv1a64(content))});
  }

  void manifest(const std::string& config_hash, const std::string& stage, const std::string& error) {
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["config_hash"] = config_hash;
    j["status"] = error.empty() ? "ok" : "failed";
    if (!error.empty()) {
      j["failed_stage"] = stage;
      j["error"] = error;
    }
    auto& arr = j["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& a : artifacts_) arr.push_back({{"file", a.file}, {"fnv1a64", a.hash}});
    std::ofstream out(dir_ / "manifest.json", std::ios::binary);
    out << dump_json(j);
  }

  const std::vector<ArtifactEntry>& artifacts() const { return artifacts_; }

 private:
  std::filesystem::path dir_;
  std::vector<ArtifactEntry> artifacts_;
};

template <typename F>
std::string to_string_with(F&& f) {
  std::ostringstream o;
  f(o);
  return o.str();
}

}  // namespace

TrainingResult run_training(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.output_dir);
  OutputLock lock(dir);
  ArtifactWriter writer(dir);
  const std::string hash = config_hash(cfg);
  std::string stage = "config";
  TrainingResult result;
  try {
    writer.write("config.txt", result_relevant_text(cfg));
    stage = "build_task";
    const auto mdp = build_configured_task(cfg);
    stage = "plan";
    const TaskContext ctx = prepare_task(mdp);
    result.uniqueness = ctx.trajectory.uniqueness;
    writer.write("expert.traj.jsonl",
                 to_string_with([&](std::ostream& o) { write_trajectory_jsonl(o, *mdp, ctx.trajectory.steps); }));

    stage = "dataset";
    const auto dataset = build_dataset(*mdp, *ctx.expert, ctx.trajectory, ctx.reachable, cfg.tabular_dataset);
    writer.write("dataset.jsonl", to_string_with([&](std::ostream& o) { write_dataset_jsonl(o, dataset); }));

    stage = "reference";
    const auto ref = make_reference(*mdp, *ctx.expert, cfg.ref_policy, cfg.epsilon, ctx.reachable);
    writer.write("policy_ref.json", dump_json(to_json(ref)));

    nlohmann::ordered_json report;
    report["task"] = kitchen::task_name(cfg.task);
    report["layout"] = mdp->layout().name;
    report["config_hash"] = hash;
    report["expert_length"] = ctx.trajectory.t_gt + 1;
    report["t_gt"] = ctx.trajectory.t_gt;
    report["uniqueness"] = ctx.trajectory.uniqueness.describe();
    report["reachable_states"] = ctx.reachable.size();

    std::ostringstream metrics;
    write_metrics_csv_header(metrics);
    const int timeout = cfg.effective_timeout();
    const std::vector<kitchen::KitchenLayout> train_layout{mdp->layout()};
    const int train_episodes = cfg.episodes_per_layout * cfg.layout_count;

    if (cfg.policy_class != PolicyClass::Featurized) {
      stage = "tabular";
      auto [star, iters] = iterate_to_fixed_point(ref, dataset, cfg.grpo);
      writer.write("policy_tabular.json", dump_json(to_json(star)));
      writer.write("iterations.csv", to_string_with([&](std::ostream& o) { iters.write_csv(o); }));
      report["tabular"] = {{"p_ref", iters.p_ref},
                           {"p_star", iters.p_star},
                           {"fixed_point_reached", iters.fixed_point_reached},
                           {"iterations", iters.records.size()},
                           {"dataset_size", dataset.size()}};
      stage = "evaluate";
      const auto m_ref = evaluate_on_layouts(ref, cfg.task, train_layout, timeout, train_episodes, cfg.eval_seed);
      const auto m_star = evaluate_on_layouts(star, cfg.task, train_layout, timeout, train_episodes, cfg.eval_seed);
      write_metrics_csv_row(metrics, kitchen::task_name(cfg.task), "tabular_ref@train_layout", 1, m_ref);
      write_metrics_csv_row(metrics, kitchen::task_name(cfg.task), "tabular_grpo@train_layout", 1, m_star);
      result.tabular_report = std::move(iters);
    }
    if (cfg.policy_class != PolicyClass::Tabular) {
      stage = "featurized";
      auto trained = train_featurized(cfg.task, cfg);
      writer.write("policy_featurized.json", dump_json(to_json(trained.policy)));
      report["featurized"] = {{"p_ref", trained.report.p_ref},
                              {"p_final", trained.report.p_final},
                              {"steps", trained.report.steps},
                              {"groups", trained.report.groups},
                              {"degenerate_groups", trained.report.degenerate_groups},
                              {"dataset_size", trained.dataset_size}};
      stage = "evaluate";
      const auto m = evaluate(trained.policy, cfg.task, cfg);
      write_metrics_csv_row(metrics, kitchen::task_name(cfg.task), "featurized_grpo@heldout", cfg.layout_count, m);
      result.featurized = std::move(trained);
    }
    stage = "write";
    writer.write("metrics.csv", metrics.str());
    writer.write("report.json", dump_json(report));
    writer.manifest(hash, stage, "");
  } catch (const std::exception& e) {
    writer.manifest(hash, stage, e.what());
    throw;
  }
  result.artifacts = writer.artifacts();
  return result;
}

GeneralizationMatrix run_cross_task(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::filesystem::path dir(cfg.output_dir);
  OutputLock lock(dir);
  ArtifactWriter writer(dir);
  const std::string hash = config_hash(cfg);
  std::string stage = "config";
  try {
    writer.write("config.txt", result_relevant_text(cfg));
    std::map<TaskKind, FeaturizedPolicy> policies;
    for (auto task : kitchen::kAllTasks) {
      stage = "train_" + std::string(kitchen::task_name(task));
      auto trained = train_featurized(task, cfg);
      writer.write("policy_featurized_" + std::string(kitchen::task_name(task)) + ".json",
                   dump_json(to_json(trained.policy)));
      policies.emplace(task, std::move(trained.policy));
    }
    stage = "evaluate";
    const auto matrix = cross_task_matrix(policies, cfg);
    writer.write("matrix.csv", to_string_with([&](std::ostream& o) { matrix.write_csv(o); }));
    writer.write("matrix.json", dump_json(matrix.to_json()));
    writer.manifest(hash, "write", "");
    return matrix;
  } catch (const std::exception& e) {
    writer.manifest(hash, stage, e.what());
    throw;
  }
}

// ---- theory suites ----

SingleTurnInstance random_single_turn_instance(Rng& rng, double beta) {
  SingleTurnInstance inst;
  inst.beta = beta;
  const std::size_t n_states = 1 + rng.below(50);
  for (std::size_t i = 0; i < n_states; ++i) {
    const std::size_t n = 2 + rng.below(7);
    const double p_ref = 0.05 + 0.9 * rng.uniform();
    const std::size_t expert = rng.below(n);
    std::vector<ActionId> actions;
    for (std::size_t a = 0; a < n; ++a) actions.push_back(make_action(static_cast<std::int32_t>(a)));
    std::vector<double> w(n);
    double rest = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      w[a] = a == expert ? 0.0 : 0.1 + rng.uniform();
      rest += w[a];
    }
    for (std::size_t a = 0; a < n; ++a) w[a] = a == expert ? p_ref : (1.0 - p_ref) * w[a] / rest;
    const StateKey s("s" + std::to_string(i));
    inst.dataset.entries.push_back({s, actions[expert], actions});
    inst.reference.set(s, std::move(actions), std::move(w));
  }
  inst.dataset.weights.assign(n_states, 1.0 / static_cast<double>(n_states));
  return inst;
}

namespace {

constexpr std::array<double, 4> kBetas = {0.1, 0.5, 1.0, 5.0};
constexpr std::array<double, 3> kEpsilons = {0.2, 0.5, 0.8};

struct Fixture {
  std::string name;
  TaskContext ctx;
};

std::vector<Fixture> theory_fixtures() {
  std::vector<Fixture> out;
  out.push_back({"chain3", prepare_task(std::make_shared<const ChainMdp>(3))});
  for (auto task : kitchen::kAllTasks) {
    out.push_back({std::string(kitchen::task_name(task)),
                   prepare_task(kitchen::build_task(task, kitchen::canonical_layout(task)))});
  }
  return out;
}

nlohmann::ordered_json suite_amplify(const TheoryOptions& opt, bool& passed) {
  Rng rng(opt.seed);
  int failures = 0, not_converged = 0;
  double min_margin = 1.0;
  for (int i = 0; i < opt.amplify_instances; ++i) {
    const double beta = kBetas[static_cast<std::size_t>(i) % kBetas.size()];
    const auto inst = random_single_turn_instance(rng, beta);
    GrpoConfig cfg;
    cfg.beta = beta;
    const auto [star, report] = iterate_to_fixed_point(inst.reference, inst.dataset, cfg);
    const double margin = report.p_star - report.p_ref;
    min_margin = std::min(min_margin, margin);
    not_converged += !report.fixed_point_reached;
    if (!(margin > 1e-9) || !report.fixed_point_reached) ++failures;
  }
  passed = failures == 0;
  return {{"instances", opt.amplify_instances},
          {"failures", failures},
          {"not_converged", not_converged},
          {"min_margin", min_margin},
          {"required_margin", 1e-9},
          {"passed", passed}};
}

nlohmann::ordered_json suite_recursion(const TheoryOptions& opt, const std::vector<Fixture>& fixtures, bool& passed) {
  passed = true;
  nlohmann::ordered_json j;
  {
    ChainMdp chain(3);
    TabularPolicy pi;
    for (int i = 0; i <= 3; ++i) {
      const auto s = ChainMdp::link(i);
      auto actions = chain.valid_actions(s);
      std::vector<double> probs = actions.size() == 2 ? std::vector<double>{0.8, 0.2} : std::vector<double>{1.0};
      pi.set(s, std::move(actions), std::move(probs));
    }
    const auto& ctx = fixtures.front().ctx;
    const std::vector<StateKey> root{chain.initial_state()};
    const double dp = dp_success_prob(chain, pi, *ctx.expert, root).at(root[0]);
    const bool ok = dp == 0.8 * 0.8 * 0.8;
    passed = passed && ok;
    j["spot_chain3_p08"] = {{"dp", dp}, {"expected", 0.512}, {"passed", ok}};
  }
  auto& cases = j["cases"] = nlohmann::ordered_json::array();
  std::uint64_t case_seed = opt.seed;
  for (const auto& f : fixtures) {
    const StateKey s0 = f.ctx.mdp->initial_state();
    const std::vector<StateKey> root{s0};
    for (double eps : kEpsilons) {
      const auto pi = make_reference(*f.ctx.mdp, *f.ctx.expert, RefKind::EpsilonMixture, eps, f.ctx.reachable);
      const double dp = dp_success_prob(*f.ctx.mdp, pi, *f.ctx.expert, root).at(s0);
      const auto mc = mc_success_prob(*f.ctx.mdp, pi, s0, opt.episodes, case_seed);
      case_seed += static_cast<std::uint64_t>(opt.episodes);
      const bool ok = std::abs(dp - mc.estimate) <= mc.ci_halfwidth;
      passed = passed && ok;
      cases.push_back({{"fixture", f.name},
                       {"epsilon", eps},
                       {"dp", dp},
                       {"mc", mc.estimate},
                       {"successes", mc.successes},
                       {"episodes", mc.episodes},
                       {"ci_halfwidth", mc.ci_halfwidth},
                       {"abs_diff", std::abs(dp - mc.estimate)},
                       {"passed", ok}});
    }
  }
  j["passed"] = passed;
  return j;
}

struct FixedPoint {
  TabularPolicy ref;
  TabularPolicy star;
  IterationReport report;
};

FixedPoint fixed_point_for(const TaskContext& ctx, double eps) {
  FixedPoint fp;
  fp.ref = make_reference(*ctx.mdp, *ctx.expert, RefKind::EpsilonMixture, eps, ctx.reachable);
  const auto ds = build_dataset(*ctx.mdp, *ctx.expert, ctx.trajectory, ctx.reachable, DatasetMode::AllStates);
  auto [star, report] = iterate_to_fixed_point(fp.ref, ds, GrpoConfig{});
  fp.star = std::move(star);
  fp.report = std::move(report);
  return fp;
}

// pi with pi(a*|s0) lowered below the reference; used to prove the detector fires.
TabularPolicy adversarial(const TabularPolicy& ref, const StateKey& s0, ActionId expert_action) {
  TabularPolicy out = ref;
  const auto& row = ref.row(s0);
  std::vector<double> probs(row.probs.size());
  const double n = static_cast<double>(row.probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = row.actions[i] == expert_action ? 0.1 / n : (1.0 - 0.1 / n) / (n - 1.0);
  }
  out.set(s0, row.actions, std::move(probs));
  return out;
}

nlohmann::ordered_json suite_improve(const std::vector<Fixture>& fixtures, bool& passed) {
  passed = true;
  nlohmann::ordered_json j;
  auto& cases = j["cases"] = nlohmann::ordered_json::array();
  for (const auto& f : fixtures) {
    if (!f.ctx.trajectory.uniqueness.unique()) {
      cases.push_back({{"fixture", f.name}, {"skipped", f.ctx.trajectory.uniqueness.describe()}});
      continue;
    }
    const auto fp = fixed_point_for(f.ctx, 0.5);
    const auto rep = improvement_report(*f.ctx.mdp, fp.star, fp.ref, *f.ctx.expert, f.ctx.reachable);
    const bool ok = rep.violations_multi_turn.empty();
    passed = passed && ok;
    auto c = rep.to_json();
    c["fixture"] = f.name;
    c["p_ref"] = fp.report.p_ref;
    c["p_star"] = fp.report.p_star;
    c["passed"] = ok;
    cases.push_back(std::move(c));
  }
  {
    const auto& ctx = fixtures.front().ctx;
    const StateKey s0 = ctx.mdp->initial_state();
    const auto ref = make_reference(*ctx.mdp, *ctx.expert, RefKind::EpsilonMixture, 0.5, ctx.reachable);
    const auto bad = adversarial(ref, s0, ctx.expert->action_of(s0));
    const auto rep = improvement_report(*ctx.mdp, bad, ref, *ctx.expert, ctx.reachable);
    bool flagged = false;
    for (const auto& v : rep.violations_multi_turn) flagged = flagged || v.state == s0;
    passed = passed && flagged;
    j["detector_self_test"] = {{"fixture", fixtures.front().name}, {"s0_flagged", flagged}, {"passed", flagged}};
  }
  {
    const auto tied = prepare_task(std::make_shared<const TwoPathMdp>());
    j["tied_fixture"] = {{"fixture", "two_path"},
                         {"certificate", tied.trajectory.uniqueness.describe()},
                         {"skipped", !tied.trajectory.uniqueness.unique()}};
  }
  j["passed"] = passed;
  return j;
}

nlohmann::ordered_json suite_subtask(const std::vector<Fixture>& fixtures, bool& passed) {
  passed = true;
  nlohmann::ordered_json j;
  const Fixture* dcb = nullptr;
  for (const auto& f : fixtures) {
    if (f.name == kitchen::task_name(TaskKind::DoubleCheeseBurger)) dcb = &f;
  }
  const auto fp = fixed_point_for(dcb->ctx, 0.5);
  auto& cases = j["cases"] = nlohmann::ordered_json::array();
  const int t_gt = dcb->ctx.trajectory.t_gt;
  for (double frac : {0.25, 0.5, 0.75}) {
    const int k = static_cast<int>(std::floor(frac * t_gt));
    const double p_ref = subtask_success_prob(dcb->ctx.mdp, dcb->ctx.trajectory, k, fp.ref);
    const double p_star = subtask_success_prob(dcb->ctx.mdp, dcb->ctx.trajectory, k, fp.star);
    const bool ok = p_star >= p_ref && (p_ref >= 1.0 || p_star > p_ref);
    passed = passed && ok;
    cases.push_back({{"fraction", frac}, {"k_star", k}, {"p_ref", p_ref}, {"p_star", p_star}, {"passed", ok}});
  }
  j["fixture"] = dcb->name;
  j["t_gt"] = t_gt;
  j["passed"] = passed;
  return j;
}

}  // namespace

TheoryReport verify_theory(std::string_view suite, const TheoryOptions& options) {
  const bool all = suite == "all";
  if (!all && suite != "amplify" && suite != "recursion" && suite != "improve" && suite != "subtask") {
    throw UsageError("unknown theory suite '" + std::string(suite) + "'");
  }
  TheoryReport out;
  out.json["suite"] = std::string(suite);
  out.json["episodes"] = options.episodes;
  out.json["seed"] = options.seed;
  std::vector<Fixture> fixtures;
  if (all || suite != "amplify") fixtures = theory_fixtures();
  auto run = [&](const char* name, auto&& fn) {
    if (!all && suite != name) return;
    bool ok = true;
    out.json[name] = fn(ok);
    out.passed = out.passed && ok;
  };
  run("amplify", [&](bool& ok) { return suite_amplify(options, ok); });
  run("recursion", [&](bool& ok) { return suite_recursion(options, fixtures, ok); });
  run("improve", [&](bool& ok) { return suite_improve(fixtures, ok); });
  run("subtask", [&](bool& ok) { return suite_subtask(fixtures, ok); });
  out.json["passed"] = out.passed;
  return out;
}

}  // namespace planlab::harness
