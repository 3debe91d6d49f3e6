#include "planlab/policy.hpp"

#include <algorithm>
#include <cmath>

namespace planlab {

void TabularPolicy::set(const StateKey& s, std::vector<ActionId> actions, std::vector<double> probs) {
  if (actions.size() != probs.size()) throw UsageError("policy row has mismatched actions and probs");
  rows_[s] = PolicyRow{std::move(actions), std::move(probs)};
}

const PolicyRow& TabularPolicy::row(const StateKey& s) const {
  const auto it = rows_.find(s);
  if (it == rows_.end()) throw PolicyStateMissing("tabular policy has no row for state " + s.hex());
  return it->second;
}

double TabularPolicy::prob(const StateKey& s, ActionId a) const {
  const auto& r = row(s);
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    if (r.actions[i] == a) return r.probs[i];
  }
  return 0.0;
}

std::vector<StateKey> TabularPolicy::states() const {
  std::vector<StateKey> out;
  out.reserve(rows_.size());
  for (const auto& [k, r] : rows_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> TabularPolicy::distribution(const StateKey& s, std::span<const ActionId> actions) const {
  const auto& r = row(s);
  if (!std::equal(r.actions.begin(), r.actions.end(), actions.begin(), actions.end())) {
    throw SupportMismatch("tabular policy row does not match the valid actions of state " + s.hex());
  }
  return r.probs;
}

bool TabularPolicy::operator==(const TabularPolicy& other) const {
  if (rows_.size() != other.rows_.size()) return false;
  for (const auto& [k, r] : rows_) {
    const auto it = other.rows_.find(k);
    if (it == other.rows_.end() || it->second.actions != r.actions || it->second.probs != r.probs) return false;
  }
  return true;
}

FeaturizedPolicy::FeaturizedPolicy(std::shared_ptr<const Featurizer> featurizer, std::vector<double> weights,
                                   double temperature)
    : featurizer_(std::move(featurizer)), weights_(std::move(weights)), temperature_(temperature) {
  if (!featurizer_) throw UsageError("featurized policy needs a featurizer");
  if (weights_.size() != featurizer_->dim()) throw SchemaMismatch("weight vector length does not match features");
  if (!(temperature_ > 0.0)) throw UsageError("temperature must be positive");
}

FeaturizedPolicy::FeaturizedPolicy(std::shared_ptr<const Featurizer> featurizer, double temperature)
    : FeaturizedPolicy(featurizer, std::vector<double>(featurizer ? featurizer->dim() : 0, 0.0), temperature) {}

std::vector<double> FeaturizedPolicy::distribution_from_features(std::span<const double> phi,
                                                                 std::size_t n_actions) const {
  const std::size_t d = weights_.size();
  std::vector<double> logits(n_actions);
  for (std::size_t i = 0; i < n_actions; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < d; ++k) z += weights_[k] * phi[i * d + k];
    logits[i] = z / temperature_;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - top);
    total += z;
  }
  for (auto& z : logits) z /= total;
  return logits;
}

std::vector<double> FeaturizedPolicy::distribution(const StateKey& s, std::span<const ActionId> actions) const {
  const auto phi = featurizer_->features(s, actions);
  return distribution_from_features(phi, actions.size());
}

std::vector<double> ExpertActionPolicy::distribution(const StateKey& s, std::span<const ActionId> actions) const {
  const ActionId best = expert_->action_of(s);
  std::vector<double> out(actions.size(), 0.0);
  if (best == kNoAction) {
    std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(actions.size()));
    return out;
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] == best) out[i] = 1.0;
  }
  return out;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

nlohmann::ordered_json to_json(const TabularPolicy& policy) {
  nlohmann::ordered_json j;
  j["schema"] = kPolicySchema;
  j["kind"] = "tabular";
  auto& states = j["states"] = nlohmann::ordered_json::array();
  for (const auto& s : policy.states()) {
    const auto& r = policy.row(s);
    nlohmann::ordered_json row;
    row["state_key"] = s.hex();
    auto& actions = row["actions"] = nlohmann::ordered_json::array();
    for (ActionId a : r.actions) actions.push_back(index_of(a));
    row["probs"] = r.probs;
    states.push_back(std::move(row));
  }
  return j;
}

TabularPolicy tabular_policy_from_json(const nlohmann::json& j) {
  if (j.value("schema", -1) != kPolicySchema) throw SchemaMismatch("unsupported tabular policy schema");
  TabularPolicy out;
  for (const auto& row : j.at("states")) {
    std::vector<ActionId> actions;
    for (const auto& a : row.at("actions")) actions.push_back(make_action(a.get<std::int32_t>()));
    out.set(StateKey::from_hex(row.at("state_key").get<std::string>()), std::move(actions),
            row.at("probs").get<std::vector<double>>());
  }
  return out;
}

nlohmann::ordered_json to_json(const FeaturizedPolicy& policy) {
  nlohmann::ordered_json j;
  j["schema"] = kPolicySchema;
  j["kind"] = "featurized";
  j["feature_version"] = policy.featurizer().schema_version();
  j["temperature"] = policy.temperature();
  j["weights"] = policy.weights();
  return j;
}

FeaturizedPolicy featurized_policy_from_json(const nlohmann::json& j, std::shared_ptr<const Featurizer> featurizer) {
  if (j.value("schema", -1) != kPolicySchema) throw SchemaMismatch("unsupported featurized policy schema");
  if (j.at("feature_version").get<int>() != featurizer->schema_version()) {
    throw SchemaMismatch("policy feature_version does not match the featurizer");
  }
  return FeaturizedPolicy(std::move(featurizer), j.at("weights").get<std::vector<double>>(),
                          j.at("temperature").get<double>());
}

std::string dump_json(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace planlab
