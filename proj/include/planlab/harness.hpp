#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "planlab/evalprob.hpp"
#include "planlab/grpo.hpp"
#include "planlab/kitchen.hpp"
#include "planlab/policy.hpp"

namespace planlab::harness {

inline constexpr int kConfigVersion = 1;

enum class RefKind { EpsilonMixture, Uniform };
enum class PolicyClass { Tabular, Featurized, Both };

// Plain `key = value` lines; `#` starts a comment. Unknown keys are errors.
struct ExperimentConfig {
  kitchen::TaskKind task = kitchen::TaskKind::CheeseSandwich;
  std::string layout = "canonical";  // or a layout JSON path
  std::uint64_t layout_seed = 1000;  // held-out evaluation layouts
  int layout_count = 10;
  RefKind ref_policy = RefKind::EpsilonMixture;
  double epsilon = 0.5;
  PolicyClass policy_class = PolicyClass::Tabular;
  DatasetMode tabular_dataset = DatasetMode::TrajectoryOnly;
  GrpoConfig grpo;
  double temperature = 1.0;
  std::uint64_t train_layout_seed = 5000;  // featurized training layouts
  int train_layout_count = 8;
  int timeout = 0;  // 0: the task's default
  int episodes_per_layout = 20;
  std::uint64_t eval_seed = 4242;
  std::string output_dir = "out";

  int effective_timeout() const { return timeout > 0 ? timeout : kitchen::default_timeout(task); }
  void validate() const;  // throws UsageError
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Every field as `key = value`, one per line, fixed order.
std::string to_text(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string config_hash(const ExperimentConfig& cfg);

// epsilon-mixture: (1 - eps) 1{a = expert(s)} + eps / |valid(s)|; uniform at
// dead ends. Uniform: 1 / |valid(s)|.
TabularPolicy make_reference(const TaskMdp& mdp, const ExpertPolicy& expert, RefKind kind, double epsilon,
                             std::span<const StateKey> states);

struct Metrics {
  double sr = 0.0;
  double asat = 0.0;
  std::optional<double> asst;
  long episodes = 0;
  long successes = 0;
  long missing = 0;  // episodes cut short by a state the policy does not cover
  int timeout = 0;

  std::string asst_text() const;  // "---" when absent
};

// SR = 0 <=> ASST absent; ASST <= ASAT <= timeout; SR = 0 => ASAT = timeout.
bool metric_algebra_holds(const Metrics& m);

// Episodes capped at `timeout` actions; episode e on layout l uses seed
// episode_seed(seed, l * episodes_per_layout + e). Missing policy states end
// the episode as a failure at the timeout.
Metrics evaluate_on_layouts(const Policy& policy, kitchen::TaskKind task,
                            std::span<const kitchen::KitchenLayout> layouts, int timeout, int episodes_per_layout,
                            std::uint64_t seed);

// Held-out layouts from cfg.layout_seed / cfg.layout_count.
Metrics evaluate(const Policy& policy, kitchen::TaskKind task, const ExperimentConfig& cfg);

// task,policy,layouts,episodes,successes,missing,sr,asat,asst
void write_metrics_csv_header(std::ostream& out);
void write_metrics_csv_row(std::ostream& out, std::string_view task, std::string_view policy, int layouts,
                           const Metrics& m);
nlohmann::ordered_json to_json(const Metrics& m);

// Plays the first action of an optimal plan re-rooted at the current state;
// works on any kitchen layout.
class PlannerPolicy final : public Policy {
 public:
  std::vector<double> distribution(const StateKey& s, std::span<const ActionId> actions) const override;
};

struct GeneralizationMatrix {
  std::vector<kitchen::TaskKind> rows;  // trained on
  std::vector<kitchen::TaskKind> cols;  // evaluated on
  std::vector<std::vector<Metrics>> cells;

  void write_csv(std::ostream& out) const;
  nlohmann::ordered_json to_json() const;
};

// Each row's policy is evaluated on every task's held-out layouts. Throws
// UsageError on an empty map.
GeneralizationMatrix cross_task_matrix(const std::map<kitchen::TaskKind, std::shared_ptr<const Policy>>& policies,
                                       const ExperimentConfig& cfg);
// Throws SchemaMismatch unless all policies share a feature schema.
GeneralizationMatrix cross_task_matrix(const std::map<kitchen::TaskKind, FeaturizedPolicy>& policies,
                                       const ExperimentConfig& cfg);

struct FeaturizedTraining {
  FeaturizedPolicy policy;
  SampledReport report;
  std::size_t dataset_size = 0;
};

// Featurized GRPO on the canonical layout plus cfg.train_layout_count sampled
// training layouts (all reachable states, labelled by the expert), starting
// from zero weights with the reference of cfg.ref_policy.
FeaturizedTraining train_featurized(kitchen::TaskKind task, const ExperimentConfig& cfg);

std::shared_ptr<const kitchen::KitchenMdp> build_configured_task(const ExperimentConfig& cfg);

struct ArtifactEntry {
  std::string file;
  std::string hash;
};

struct TrainingResult {
  std::vector<ArtifactEntry> artifacts;
  IterationReport tabular_report;
  std::optional<FeaturizedTraining> featurized;
  UniquenessCertificate uniqueness;
};

// Writes into cfg.output_dir: expert.traj.jsonl, dataset.jsonl,
// policy_ref.json, then per policy class policy_tabular.json + iterations.csv
// and/or policy_featurized.json, plus metrics.csv, report.json and
// manifest.json. On failure the manifest records the failed stage and the
// error is rethrown.
TrainingResult run_training(const ExperimentConfig& cfg);

// Trains one featurized policy per task and writes matrix.csv, matrix.json
// and policy_featurized_<task>.json into cfg.output_dir.
GeneralizationMatrix run_cross_task(const ExperimentConfig& cfg);

// Exclusive claim on an output directory for the lifetime of the object.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);  // throws UsageError if held
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct TheoryOptions {
  long episodes = 100000;
  std::uint64_t seed = 1;
  int amplify_instances = 200;
};

struct TheoryReport {
  nlohmann::ordered_json json;
  bool passed = true;
};

// Suites: amplify, recursion, improve, subtask, or all.
TheoryReport verify_theory(std::string_view suite, const TheoryOptions& options = {});

// Random single-turn instance used by the amplification suite.
struct SingleTurnInstance {
  SingleTurnDataset dataset;
  TabularPolicy reference;
  double beta = 1.0;
};
SingleTurnInstance random_single_turn_instance(Rng& rng, double beta);

}  // namespace planlab::harness
