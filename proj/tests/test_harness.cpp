#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "planlab/errors.hpp"
#include "planlab/harness.hpp"

using namespace planlab;
using namespace planlab::harness;
using kitchen::TaskKind;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("planlab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class FeaturizerV2 final : public Featurizer {
 public:
  int schema_version() const override { return 2; }
  std::size_t dim() const override { return kitchen::FeatureLayout::kDim; }
  std::vector<double> features(const StateKey& s, std::span<const ActionId> actions) const override {
    return kitchen::KitchenFeaturizer().features(s, actions);
  }
};

}  // namespace

TEST_CASE("fnv1a64 reference vectors") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config(
      "# demo\nversion = 1\ntask = Burger\nbeta = 0.25\npolicy_class = both\n"
      "tabular_dataset = all_states\nref_policy = uniform\n  seed=9  \noutput_dir = out/x\n");
  CHECK(cfg.task == TaskKind::Burger);
  CHECK(cfg.grpo.beta == 0.25);
  CHECK(cfg.grpo.seed == 9);
  CHECK(cfg.policy_class == PolicyClass::Both);
  CHECK(cfg.tabular_dataset == DatasetMode::AllStates);
  CHECK(cfg.ref_policy == RefKind::Uniform);
  CHECK(cfg.output_dir == "out/x");
  CHECK(cfg.effective_timeout() == 15);
  CHECK(to_text(parse_config(to_text(cfg))) == to_text(cfg));

  CHECK_THROWS_AS(parse_config("task = Burger\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 2\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 1\ncolour = red\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 1\nbeta = fast\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 1\nbeta 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 1\ntask = Pizza\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 1\nepsilon = 1.5\n"), UsageError);
  CHECK_THROWS_AS(parse_config("version = 1\nbeta = 0\n"), UsageError);
  CHECK_THROWS_AS(load_config("/nonexistent/planlab.cfg"), UsageError);
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"cheese_sandwich.cfg", "xmatrix.cfg"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(fs::path(PLANLAB_SOURCE_DIR) / "configs" / name));
  }
}

TEST_CASE("config hash follows result-relevant fields only") {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  b.grpo.beta = 0.5;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("reference policies") {
  const auto ctx = prepare_task(kitchen::build_task(TaskKind::CheeseSandwich,
                                                    kitchen::canonical_layout(TaskKind::CheeseSandwich)));
  const auto mix = make_reference(*ctx.mdp, *ctx.expert, RefKind::EpsilonMixture, 0.4, ctx.reachable);
  const auto uni = make_reference(*ctx.mdp, *ctx.expert, RefKind::Uniform, 0.4, ctx.reachable);
  for (const auto& s : ctx.reachable) {
    const auto& row = mix.row(s);
    const double n = static_cast<double>(row.actions.size());
    const ActionId a = ctx.expert->action_of(s);
    for (std::size_t i = 0; i < row.actions.size(); ++i) {
      const double want = a == kNoAction ? 1 / n : (row.actions[i] == a ? 0.6 : 0.0) + 0.4 / n;
      CHECK(row.probs[i] == doctest::Approx(want));
      CHECK(uni.row(s).probs[i] == doctest::Approx(1 / n));
    }
  }
  CHECK_THROWS_AS(make_reference(*ctx.mdp, *ctx.expert, RefKind::EpsilonMixture, -0.1, ctx.reachable), UsageError);
}

TEST_CASE("metric algebra") {
  Metrics m;
  m.timeout = 15;
  m.sr = 0;
  m.asat = 15;
  CHECK(metric_algebra_holds(m));
  CHECK(m.asst_text() == "---");
  m.asat = 14;
  CHECK_FALSE(metric_algebra_holds(m));
  m.sr = 0.5;
  m.asst = 9;
  m.asat = 12;
  CHECK(metric_algebra_holds(m));
  m.asst = 13;
  CHECK_FALSE(metric_algebra_holds(m));
  m.asst.reset();
  CHECK_FALSE(metric_algebra_holds(m));
}

TEST_CASE("the planner policy solves held-out layouts in minimal turns") {
  ExperimentConfig cfg;
  cfg.layout_count = 3;
  cfg.episodes_per_layout = 2;
  const PlannerPolicy planner;
  for (TaskKind k : {TaskKind::CheeseSandwich, TaskKind::CheeseBurger}) {
    const auto m = evaluate(planner, k, cfg);
    CHECK(m.sr == 1.0);
    CHECK(m.episodes == 6);
    CHECK(metric_algebra_holds(m));
    double mean_len = 0;
    for (const auto& l : kitchen::sample_layouts(k, cfg.layout_seed, 3)) {
      const auto mdp = kitchen::build_task(k, l);
      mean_len += plan_optimal(*mdp, mdp->initial_state()).t_gt + 1;
    }
    CHECK(*m.asst == doctest::Approx(mean_len / 3));
    CHECK(m.asat == *m.asst);
  }
}

TEST_CASE("uncovered states end episodes as failures") {
  ExperimentConfig cfg;
  cfg.layout_count = 2;
  cfg.episodes_per_layout = 3;
  const TabularPolicy empty;
  const auto m = evaluate(empty, TaskKind::Burger, cfg);
  CHECK(m.sr == 0.0);
  CHECK(m.missing == 6);
  CHECK(m.asat == 15);
  CHECK_FALSE(m.asst.has_value());
  CHECK(metric_algebra_holds(m));
  std::ostringstream csv;
  write_metrics_csv_header(csv);
  write_metrics_csv_row(csv, "Burger", "empty", 2, m);
  CHECK(csv.str().find(",---\n") != std::string::npos);
}

TEST_CASE("cross-task matrices need a shared feature schema") {
  ExperimentConfig cfg;
  std::map<TaskKind, FeaturizedPolicy> policies;
  policies.emplace(TaskKind::CheeseSandwich, FeaturizedPolicy(std::make_shared<kitchen::KitchenFeaturizer>()));
  policies.emplace(TaskKind::Burger, FeaturizedPolicy(std::make_shared<FeaturizerV2>()));
  CHECK_THROWS_AS(cross_task_matrix(policies, cfg), SchemaMismatch);
  CHECK_THROWS_AS(cross_task_matrix(std::map<TaskKind, std::shared_ptr<const Policy>>{}, cfg), UsageError);

  const auto j = to_json(FeaturizedPolicy(std::make_shared<kitchen::KitchenFeaturizer>()));
  auto wrong = nlohmann::json::parse(j.dump());
  wrong["feature_version"] = 2;
  CHECK_THROWS_AS(featurized_policy_from_json(wrong, std::make_shared<kitchen::KitchenFeaturizer>()), SchemaMismatch);
}

TEST_CASE("output directories are locked") {
  const auto dir = scratch("lock");
  {
    OutputLock first(dir);
    CHECK_THROWS_AS(OutputLock{dir}, UsageError);
  }
  CHECK_NOTHROW(OutputLock{dir});
  fs::remove_all(dir);
}

TEST_CASE("training runs are deterministic and write a manifest") {
  ExperimentConfig cfg = parse_config("version = 1\ntask = CheeseSandwich\npolicy_class = tabular\n");
  cfg.layout_count = 2;
  cfg.episodes_per_layout = 5;
  cfg.output_dir = scratch("run_a").string();
  const auto a = run_training(cfg);
  cfg.output_dir = scratch("run_b").string();
  const auto b = run_training(cfg);
  REQUIRE(a.artifacts.size() == b.artifacts.size());
  for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
    CHECK(a.artifacts[i].file == b.artifacts[i].file);
    CHECK(a.artifacts[i].hash == b.artifacts[i].hash);
  }
  CHECK(a.tabular_report.fixed_point_reached);
  CHECK(a.tabular_report.p_star > a.tabular_report.p_ref);
  CHECK(a.uniqueness.unique());

  const auto manifest = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "manifest.json"));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["config_hash"] == config_hash(cfg));
  for (const auto& entry : manifest["artifacts"]) {
    const fs::path file = fs::path(cfg.output_dir) / entry["file"].get<std::string>();
    REQUIRE(fs::exists(file));
    CHECK(entry["fnv1a64"] == hex64(fnv1a64(slurp(file))));
  }
  for (const char* name : {"config.txt", "expert.traj.jsonl", "dataset.jsonl", "policy_ref.json", "policy_tabular.json",
                           "iterations.csv", "metrics.csv", "report.json"}) {
    CHECK(fs::exists(fs::path(cfg.output_dir) / name));
  }
  CHECK_FALSE(fs::exists(fs::path(cfg.output_dir) / ".planlab.lock"));

  const auto reloaded = tabular_policy_from_json(nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "policy_tabular.json")));
  CHECK(reloaded.size() > 0);
  fs::remove_all(cfg.output_dir);
  fs::remove_all(scratch("run_a"));
}

TEST_CASE("failed runs record the failing stage") {
  ExperimentConfig cfg = parse_config("version = 1\nlayout = /nonexistent/layout.json\n");
  cfg.output_dir = scratch("fail").string();
  CHECK_THROWS(run_training(cfg));
  const auto manifest = nlohmann::json::parse(slurp(fs::path(cfg.output_dir) / "manifest.json"));
  CHECK(manifest["status"] == "failed");
  CHECK(manifest["failed_stage"] == "build_task");
  fs::remove_all(cfg.output_dir);
}
