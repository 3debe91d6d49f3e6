// planlab: command line front end for planning, training, evaluation and the
// theory suites. Exit codes: 0 success, 1 failed check or runtime error, 2
// usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "planlab/harness.hpp"

namespace fs = std::filesystem;
using namespace planlab;
using kitchen::TaskKind;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

kitchen::KitchenLayout layout_for(TaskKind task, const std::string& layout) {
  return layout.empty() || layout == "canonical" ? kitchen::canonical_layout(task) : kitchen::load_layout(layout);
}

int cmd_plan(const std::string& task_name, const std::string& layout_path, const std::string& out) {
  const TaskKind task = kitchen::parse_task(task_name);
  const auto mdp = kitchen::build_task(task, layout_for(task, layout_path));
  auto traj = plan_optimal(*mdp, mdp->initial_state());
  traj.uniqueness = certify_uniqueness(*mdp, mdp->initial_state(), traj.t_gt);
  std::ostringstream o;
  write_trajectory_jsonl(o, *mdp, traj.steps);
  write_or_print(out, o.str());
  std::cerr << kitchen::task_name(task) << ": expert length " << traj.t_gt + 1 << ", "
            << traj.uniqueness.describe() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  const auto cfg = harness::load_config(config_path);
  const auto result = harness::run_training(cfg);
  for (const auto& a : result.artifacts) std::cout << a.file << " " << a.hash << "\n";
  return 0;
}

int cmd_eval(const std::string& policy_path, const std::string& task_name, const std::string& config_path) {
  auto cfg = harness::load_config(config_path);
  cfg.task = kitchen::parse_task(task_name);
  const auto j = nlohmann::json::parse(read_file(policy_path));
  const std::string kind = j.value("kind", "");
  const fs::path dir(cfg.output_dir);
  harness::OutputLock lock(dir);
  std::ostringstream csv;
  harness::write_metrics_csv_header(csv);
  const std::string tname(kitchen::task_name(cfg.task));
  if (kind == "featurized") {
    const auto policy = featurized_policy_from_json(j, std::make_shared<const kitchen::KitchenFeaturizer>());
    harness::write_metrics_csv_row(csv, tname, "featurized@heldout", cfg.layout_count,
                                   harness::evaluate(policy, cfg.task, cfg));
  } else if (kind == "tabular") {
    const auto policy = tabular_policy_from_json(j);
    const std::vector<kitchen::KitchenLayout> own{harness::build_configured_task(cfg)->layout()};
    harness::write_metrics_csv_row(
        csv, tname, "tabular@train_layout", 1,
        harness::evaluate_on_layouts(policy, cfg.task, own, cfg.effective_timeout(),
                                     cfg.episodes_per_layout * cfg.layout_count, cfg.eval_seed));
    harness::write_metrics_csv_row(csv, tname, "tabular@heldout", cfg.layout_count,
                                   harness::evaluate(policy, cfg.task, cfg));
  } else {
    throw UsageError("policy file has unknown kind '" + kind + "'");
  }
  std::ofstream(dir / "metrics.csv", std::ios::binary) << csv.str();
  std::cout << csv.str();
  return 0;
}

int cmd_xmatrix(const std::string& config_path) {
  const auto cfg = harness::load_config(config_path);
  const auto matrix = harness::run_cross_task(cfg);
  matrix.write_csv(std::cout);
  return 0;
}

int cmd_theory(const std::string& suite, const std::string& out, long episodes, std::uint64_t seed) {
  harness::TheoryOptions opt;
  opt.episodes = episodes;
  opt.seed = seed;
  const auto report = harness::verify_theory(suite, opt);
  write_or_print(out, dump_json(report.json));
  std::cerr << "theory suite " << suite << ": " << (report.passed ? "PASS" : "FAIL") << "\n";
  return report.passed ? 0 : kExitCheckFailed;
}

int cmd_export(const std::string& task_name, const std::string& layout_path, const std::string& mode,
               const std::string& out) {
  const TaskKind task = kitchen::parse_task(task_name);
  DatasetMode dm;
  if (mode == "trajectory") dm = DatasetMode::TrajectoryOnly;
  else if (mode == "all_states") dm = DatasetMode::AllStates;
  else throw UsageError("--mode must be trajectory or all_states");
  const auto ctx = prepare_task(kitchen::build_task(task, layout_for(task, layout_path)));
  const auto ds = build_dataset(*ctx.mdp, *ctx.expert, ctx.trajectory, ctx.reachable, dm);
  std::ostringstream o;
  write_dataset_jsonl(o, ds);
  write_or_print(out, o.str());
  return 0;
}

int cmd_layouts(const std::string& task_name, std::uint64_t seed, int count, bool canonical, const std::string& out) {
  const TaskKind task = kitchen::parse_task(task_name);
  std::vector<kitchen::KitchenLayout> layouts;
  if (canonical) {
    layouts.push_back(kitchen::canonical_layout(task));
  } else {
    layouts = kitchen::sample_layouts(task, seed, count);
  }
  if (out.empty()) {
    for (const auto& l : layouts) std::cout << to_json(l).dump() << "\n";
    return 0;
  }
  fs::create_directories(out);
  for (const auto& l : layouts) kitchen::save_layout(fs::path(out) / (l.name + ".json"), l);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planlab: multi-turn task planning with GRPO on a kitchen domain"};
  app.require_subcommand(1);

  std::string task, layout, out, config, policy, suite = "all", mode = "trajectory";
  long episodes = 100000;
  std::uint64_t seed = 1;
  int count = 10;
  bool canonical = false;

  auto* plan = app.add_subcommand("plan", "Print the expert trajectory of a task as JSONL");
  plan->add_option("task", task, "CheeseSandwich | Burger | CheeseBurger | DoubleCheeseBurger")->required();
  plan->add_option("--layout", layout, "Layout JSON file (default: canonical)");
  plan->add_option("--out", out, "Output file (default: stdout)");

  auto* train = app.add_subcommand("train", "Run a training pipeline from a config file");
  train->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a policy file on a task");
  eval->add_option("policy", policy, "Policy JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("task", task, "Task name")->required();
  eval->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

  auto* xmatrix = app.add_subcommand("xmatrix", "Train per-task featurized policies and build the 4x4 matrix");
  xmatrix->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

  auto* theory = app.add_subcommand("theory", "Run the theorem verification suites");
  theory->add_option("--suite", suite, "all | amplify | recursion | improve | subtask")
      ->check(CLI::IsMember({"all", "amplify", "recursion", "improve", "subtask"}));
  theory->add_option("--out", out, "Report file (default: stdout)");
  theory->add_option("--episodes", episodes, "Monte-Carlo episodes per case")->check(CLI::PositiveNumber);
  theory->add_option("--seed", seed, "Base seed");

  auto* exp = app.add_subcommand("export-dataset", "Write the single-turn dataset of a task as JSONL");
  exp->add_option("task", task, "Task name")->required();
  exp->add_option("--layout", layout, "Layout JSON file (default: canonical)");
  exp->add_option("--mode", mode, "trajectory | all_states");
  exp->add_option("--out", out, "Output file (default: stdout)");

  auto* lay = app.add_subcommand("layouts", "Write canonical or sampled kitchen layouts");
  lay->add_option("task", task, "Task name")->required();
  lay->add_option("--seed", seed, "Sampler seed");
  lay->add_option("--count", count, "Number of sampled layouts")->check(CLI::PositiveNumber);
  lay->add_flag("--canonical", canonical, "Write the canonical layout instead");
  lay->add_option("--out", out, "Output directory (default: JSON lines on stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*plan) return cmd_plan(task, layout, out);
    if (*train) return cmd_train(config);
    if (*eval) return cmd_eval(policy, task, config);
    if (*xmatrix) return cmd_xmatrix(config);
    if (*theory) return cmd_theory(suite, out, episodes, seed);
    if (*exp) return cmd_export(task, layout, mode, out);
    if (*lay) return cmd_layouts(task, seed, count, canonical, out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SchemaMismatch& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
