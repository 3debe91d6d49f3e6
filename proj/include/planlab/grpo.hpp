#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "planlab/env_core.hpp"
#include "planlab/expert.hpp"
#include "planlab/policy.hpp"

namespace planlab {

struct GrpoConfig {
  double beta = 1.0;
  int group_size = 8;
  double learning_rate = 0.5;
  int max_iterations = 10000;
  double fixed_point_tol = 1e-10;
  double variance_floor = 1e-8;
  std::uint64_t seed = 0;
  // Featurized training only: states per gradient step, and number of steps.
  int batch_size = 16;
  int steps = 200;

  void validate() const;  // throws UsageError
};

struct Advantage {
  double value = 0.0;
  bool degenerate = false;  // p in {0, 1}: zero variance, value forced to 0
};

// (r - p) / sqrt(p (1 - p)).
Advantage advantage_binary(int r, double p);

// One exact GRPO step over the dataset states: pi_new(a|s) proportional to
// pi_ref(a|s) exp(A(s,a) / beta), with A computed from p = pi_old(expert|s).
// States with p in {0, 1} and states outside the dataset keep pi_old.
// Throws RatioUndefined, PolicyStateMissing, SupportMismatch.
TabularPolicy exact_update(const TabularPolicy& pi_old, const TabularPolicy& pi_ref,
                           const SingleTurnDataset& dataset, double beta);

// Single-threaded reference for exact_update; bit-identical results.
TabularPolicy exact_update_serial(const TabularPolicy& pi_old, const TabularPolicy& pi_ref,
                                  const SingleTurnDataset& dataset, double beta);

struct IterationRecord {
  int iter = 0;
  double p_n = 0.0;
  double mean_kl = 0.0;
  double max_tv = 0.0;
};

struct IterationReport {
  std::vector<IterationRecord> records;
  bool fixed_point_reached = false;
  double p_ref = 0.0;
  double p_star = 0.0;

  // Columns iter,p_n,mean_kl,max_tv.
  void write_csv(std::ostream& out) const;
};

// Runs exact_update from pi_0 = pi_ref until the largest per-state total
// variation change drops below cfg.fixed_point_tol or cfg.max_iterations.
std::pair<TabularPolicy, IterationReport> iterate_to_fixed_point(const TabularPolicy& pi_ref,
                                                                 const SingleTurnDataset& dataset,
                                                                 const GrpoConfig& cfg);

// Sum over entries of weight * pi(expert | s). Exact, no sampling.
double success_prob_single_turn(const Policy& policy, const SingleTurnDataset& dataset);

// Weighted mean over entries of KL(pi(.|s) || pi_ref(.|s)). Throws
// SupportMismatch when pi puts mass where pi_ref has none.
double kl_to_ref(const Policy& policy, const Policy& pi_ref, const SingleTurnDataset& dataset);

double kl_divergence(std::span<const double> p, std::span<const double> q);

// One sampled group: G actions drawn at one state from the sampling policy.
struct Group {
  std::size_t n_actions = 0;
  std::vector<double> phi;        // n_actions x dim features
  std::vector<double> old_probs;  // sampling policy
  std::vector<double> ref_probs;
  std::vector<std::size_t> picks;  // indices into the state's valid actions
  std::vector<double> advantages;  // group-normalized
};

struct GroupBatch {
  std::vector<Group> groups;  // non-degenerate groups only
  int degenerate = 0;
  double beta = 1.0;
};

// Mean over groups of (1/G) sum_i ratio_i A_i - beta KL(pi_w || pi_ref) at
// the policy's current weights; the ratio is anchored at the sampling policy.
double surrogate(const GroupBatch& batch, const FeaturizedPolicy& policy);
std::vector<double> surrogate_gradient(const GroupBatch& batch, const FeaturizedPolicy& policy);

// Draws cfg.batch_size states by the dataset weights, then G actions per state
// from `policy`; rewards are 1{a = expert}. Degenerate groups are counted and
// dropped.
GroupBatch sample_batch(const FeaturizedPolicy& policy, const Policy& pi_ref, const SingleTurnDataset& dataset,
                        const GrpoConfig& cfg, Rng& rng);

struct SampledReport {
  int steps = 0;
  long groups = 0;
  long degenerate_groups = 0;
  double p_ref = 0.0;    // success_prob_single_turn of the initial policy
  double p_final = 0.0;
};

// cfg.steps gradient ascent steps of size cfg.learning_rate; deterministic
// given cfg.seed.
std::pair<FeaturizedPolicy, SampledReport> sampled_update(const FeaturizedPolicy& policy, const Policy& pi_ref,
                                                          const SingleTurnDataset& dataset,
                                                          const GrpoConfig& cfg);

}  // namespace planlab
