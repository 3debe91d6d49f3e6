#pragma once

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "planlab/env_core.hpp"
#include "planlab/expert.hpp"

namespace planlab {

inline constexpr int kPolicySchema = 1;

// Maps (state, action) pairs to fixed-length real vectors.
class Featurizer {
 public:
  virtual ~Featurizer() = default;
  virtual int schema_version() const = 0;
  virtual std::size_t dim() const = 0;
  // Row-major |actions| x dim() matrix.
  virtual std::vector<double> features(const StateKey& s, std::span<const ActionId> actions) const = 0;
};

struct PolicyRow {
  std::vector<ActionId> actions;
  std::vector<double> probs;
};

// Exact per-state categorical distributions over each state's valid actions.
class TabularPolicy final : public Policy {
 public:
  TabularPolicy() = default;

  void set(const StateKey& s, std::vector<ActionId> actions, std::vector<double> probs);
  bool covers(const StateKey& s) const { return rows_.contains(s); }
  const PolicyRow& row(const StateKey& s) const;  // throws PolicyStateMissing
  double prob(const StateKey& s, ActionId a) const;
  std::size_t size() const { return rows_.size(); }
  std::vector<StateKey> states() const;  // sorted

  std::vector<double> distribution(const StateKey& s, std::span<const ActionId> actions) const override;

  bool operator==(const TabularPolicy&) const;

 private:
  std::unordered_map<StateKey, PolicyRow, StateKeyHash> rows_;
};

// pi(a|s) = softmax over valid actions of weights . phi(s, a) / temperature.
class FeaturizedPolicy final : public Policy {
 public:
  FeaturizedPolicy(std::shared_ptr<const Featurizer> featurizer, std::vector<double> weights,
                   double temperature = 1.0);
  // Zero weights: uniform over valid actions.
  explicit FeaturizedPolicy(std::shared_ptr<const Featurizer> featurizer, double temperature = 1.0);

  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& mutable_weights() { return weights_; }
  double temperature() const { return temperature_; }
  const Featurizer& featurizer() const { return *featurizer_; }
  const std::shared_ptr<const Featurizer>& featurizer_ptr() const { return featurizer_; }

  // Probabilities from a precomputed feature matrix (row per action).
  std::vector<double> distribution_from_features(std::span<const double> phi, std::size_t n_actions) const;

  std::vector<double> distribution(const StateKey& s, std::span<const ActionId> actions) const override;

 private:
  std::shared_ptr<const Featurizer> featurizer_;
  std::vector<double> weights_;
  double temperature_;
};

// Deterministic policy playing the expert's action (uniform at dead ends).
class ExpertActionPolicy final : public Policy {
 public:
  explicit ExpertActionPolicy(std::shared_ptr<const ExpertPolicy> expert) : expert_(std::move(expert)) {}
  std::vector<double> distribution(const StateKey& s, std::span<const ActionId> actions) const override;

 private:
  std::shared_ptr<const ExpertPolicy> expert_;
};

// Total variation distance between two distributions over the same support.
double total_variation(std::span<const double> p, std::span<const double> q);

// {schema, states: [{state_key, actions[], probs[]}]}, states sorted by key.
nlohmann::ordered_json to_json(const TabularPolicy& policy);
TabularPolicy tabular_policy_from_json(const nlohmann::json& j);

// {schema, feature_version, temperature, weights[]}.
nlohmann::ordered_json to_json(const FeaturizedPolicy& policy);
// The caller supplies the featurizer matching feature_version.
FeaturizedPolicy featurized_policy_from_json(const nlohmann::json& j,
                                             std::shared_ptr<const Featurizer> featurizer);

// Stable text form of a JSON document (doubles printed round-trip exact).
std::string dump_json(const nlohmann::ordered_json& j);

}  // namespace planlab
