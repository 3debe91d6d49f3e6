#include "planlab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>

namespace planlab {

void GrpoConfig::validate() const {
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  if (group_size < 2) throw UsageError("group_size must be at least 2");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (max_iterations < 1) throw UsageError("max_iterations must be at least 1");
  if (!(fixed_point_tol > 0.0)) throw UsageError("fixed_point_tol must be positive");
  if (!(variance_floor >= 0.0)) throw UsageError("variance_floor must be nonnegative");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (steps < 0) throw UsageError("steps must be nonnegative");
}

Advantage advantage_binary(int r, double p) {
  if (p <= 0.0 || p >= 1.0) return {0.0, true};
  return {(static_cast<double>(r) - p) / std::sqrt(p * (1.0 - p)), false};
}

namespace {

std::size_t expert_index(const DatasetEntry& e) {
  const auto it = std::find(e.valid_actions.begin(), e.valid_actions.end(), e.expert_action);
  if (it == e.valid_actions.end()) throw SupportMismatch("expert action is not valid at " + e.state.hex());
  return static_cast<std::size_t>(it - e.valid_actions.begin());
}

const PolicyRow& checked_row(const TabularPolicy& pi, const DatasetEntry& e) {
  const PolicyRow& row = pi.row(e.state);
  if (row.actions != e.valid_actions) {
    throw SupportMismatch("policy row does not match the valid actions of " + e.state.hex());
  }
  return row;
}

// New row for one dataset state, or nullopt when the state is degenerate.
std::optional<std::vector<double>> tilt(const TabularPolicy& pi_old, const TabularPolicy& pi_ref,
                                        const DatasetEntry& e, double beta) {
  const PolicyRow& old_row = checked_row(pi_old, e);
  const PolicyRow& ref_row = checked_row(pi_ref, e);
  const std::size_t ex = expert_index(e);
  const double p = old_row.probs[ex];
  if (advantage_binary(1, p).degenerate) return std::nullopt;
  for (double q : old_row.probs) {
    if (q <= 0.0) throw RatioUndefined("old policy has a zero-probability action at " + e.state.hex());
  }
  const double a_hit = advantage_binary(1, p).value / beta;
  const double a_miss = advantage_binary(0, p).value / beta;
  const std::size_t n = ref_row.probs.size();
  std::vector<double> logw(n);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    logw[i] = std::log(ref_row.probs[i]) + (i == ex ? a_hit : a_miss);
    top = std::max(top, logw[i]);
  }
  double total = 0.0;
  for (auto& v : logw) {
    v = std::exp(v - top);
    total += v;
  }
  for (auto& v : logw) v /= total;
  return logw;
}

TabularPolicy exact_update_impl(const TabularPolicy& pi_old, const TabularPolicy& pi_ref,
                                const SingleTurnDataset& dataset, double beta, bool parallel) {
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  const auto n = static_cast<std::ptrdiff_t>(dataset.size());
  std::vector<std::optional<std::vector<double>>> rows(dataset.size());
  if (parallel) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        rows[i] = tilt(pi_old, pi_ref, dataset.entries[i], beta);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
  } else {
    for (std::ptrdiff_t i = 0; i < n; ++i) rows[i] = tilt(pi_old, pi_ref, dataset.entries[i], beta);
  }
  TabularPolicy out = pi_old;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]) out.set(dataset.entries[i].state, dataset.entries[i].valid_actions, std::move(*rows[i]));
  }
  return out;
}

}  // namespace

TabularPolicy exact_update(const TabularPolicy& pi_old, const TabularPolicy& pi_ref,
                           const SingleTurnDataset& dataset, double beta) {
  return exact_update_impl(pi_old, pi_ref, dataset, beta, true);
}

TabularPolicy exact_update_serial(const TabularPolicy& pi_old, const TabularPolicy& pi_ref,
                                  const SingleTurnDataset& dataset, double beta) {
  return exact_update_impl(pi_old, pi_ref, dataset, beta, false);
}

void IterationReport::write_csv(std::ostream& out) const {
  char buf[128];
  out << "iter,p_n,mean_kl,max_tv\n";
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.iter, r.p_n, r.mean_kl, r.max_tv);
    out << buf;
  }
}

std::pair<TabularPolicy, IterationReport> iterate_to_fixed_point(const TabularPolicy& pi_ref,
                                                                 const SingleTurnDataset& dataset,
                                                                 const GrpoConfig& cfg) {
  cfg.validate();
  if (dataset.entries.empty()) throw EmptyDataset("cannot iterate on an empty dataset");
  IterationReport report;
  report.p_ref = success_prob_single_turn(pi_ref, dataset);
  TabularPolicy current = pi_ref;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    TabularPolicy next = exact_update(current, pi_ref, dataset, cfg.beta);
    double max_tv = 0.0;
    for (const auto& e : dataset.entries) {
      max_tv = std::max(max_tv, total_variation(next.row(e.state).probs, current.row(e.state).probs));
    }
    current = std::move(next);
    report.records.push_back({it, success_prob_single_turn(current, dataset), kl_to_ref(current, pi_ref, dataset),
                              max_tv});
    if (max_tv < cfg.fixed_point_tol) {
      report.fixed_point_reached = true;
      break;
    }
  }
  report.p_star = report.records.back().p_n;
  return {std::move(current), std::move(report)};
}

double success_prob_single_turn(const Policy& policy, const SingleTurnDataset& dataset) {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& e = dataset.entries[i];
    const auto probs = policy.distribution(e.state, e.valid_actions);
    total += dataset.weights[i] * probs[expert_index(e)];
  }
  return total;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw SupportMismatch("reference has no mass where the policy does");
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

double kl_to_ref(const Policy& policy, const Policy& pi_ref, const SingleTurnDataset& dataset) {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& e = dataset.entries[i];
    total += dataset.weights[i] *
             kl_divergence(policy.distribution(e.state, e.valid_actions), pi_ref.distribution(e.state, e.valid_actions));
  }
  return total;
}

// ---- sampled updates ----

namespace {

struct GroupTerms {
  double value = 0.0;
  std::vector<double> grad;
};

GroupTerms group_terms(const Group& g, const FeaturizedPolicy& policy, double beta, bool with_grad) {
  const std::size_t d = policy.weights().size();
  const double temp = policy.temperature();
  const auto pi = policy.distribution_from_features(g.phi, g.n_actions);
  const double inv_g = 1.0 / static_cast<double>(g.picks.size());

  GroupTerms out;
  double kl = 0.0;
  std::vector<double> coef(g.n_actions, 0.0);  // d objective / d z_a, z = logits before temperature
  for (std::size_t i = 0; i < g.picks.size(); ++i) {
    const std::size_t a = g.picks[i];
    out.value += inv_g * pi[a] / g.old_probs[a] * g.advantages[i];
  }
  for (std::size_t a = 0; a < g.n_actions; ++a) {
    if (pi[a] > 0.0) kl += pi[a] * (std::log(pi[a]) - std::log(g.ref_probs[a]));
  }
  out.value -= beta * kl;
  if (!with_grad) return out;

  // d pi(a) / d w = pi(a) (phi_a - phi_bar) / T.
  std::vector<double> phi_bar(d, 0.0);
  for (std::size_t a = 0; a < g.n_actions; ++a) {
    for (std::size_t k = 0; k < d; ++k) phi_bar[k] += pi[a] * g.phi[a * d + k];
  }
  for (std::size_t i = 0; i < g.picks.size(); ++i) {
    const std::size_t a = g.picks[i];
    coef[a] += inv_g * g.advantages[i] / g.old_probs[a];
  }
  for (std::size_t a = 0; a < g.n_actions; ++a) {
    if (pi[a] > 0.0) coef[a] -= beta * (std::log(pi[a]) - std::log(g.ref_probs[a]));
  }
  out.grad.assign(d, 0.0);
  for (std::size_t a = 0; a < g.n_actions; ++a) {
    const double c = coef[a] * pi[a] / temp;
    if (c == 0.0) continue;
    for (std::size_t k = 0; k < d; ++k) out.grad[k] += c * (g.phi[a * d + k] - phi_bar[k]);
  }
  return out;
}

}  // namespace

double surrogate(const GroupBatch& batch, const FeaturizedPolicy& policy) {
  if (batch.groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : batch.groups) total += group_terms(g, policy, batch.beta, false).value;
  return total / static_cast<double>(batch.groups.size());
}

std::vector<double> surrogate_gradient(const GroupBatch& batch, const FeaturizedPolicy& policy) {
  const std::size_t d = policy.weights().size();
  std::vector<double> grad(d, 0.0);
  if (batch.groups.empty()) return grad;
  const auto n = static_cast<std::ptrdiff_t>(batch.groups.size());
  std::vector<std::vector<double>> parts(batch.groups.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) parts[i] = group_terms(batch.groups[i], policy, batch.beta, true).grad;
  const double inv = 1.0 / static_cast<double>(batch.groups.size());
  for (const auto& p : parts) {
    for (std::size_t k = 0; k < d; ++k) grad[k] += inv * p[k];
  }
  return grad;
}

GroupBatch sample_batch(const FeaturizedPolicy& policy, const Policy& pi_ref, const SingleTurnDataset& dataset,
                        const GrpoConfig& cfg, Rng& rng) {
  if (dataset.entries.empty()) throw EmptyDataset("cannot sample from an empty dataset");
  std::vector<std::size_t> chosen(static_cast<std::size_t>(cfg.batch_size));
  for (auto& c : chosen) c = rng.categorical(dataset.weights);

  const auto n = static_cast<std::ptrdiff_t>(chosen.size());
  std::vector<Group> groups(chosen.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& e = dataset.entries[chosen[i]];
      Group& g = groups[i];
      g.n_actions = e.valid_actions.size();
      g.phi = policy.featurizer().features(e.state, e.valid_actions);
      g.old_probs = policy.distribution_from_features(g.phi, g.n_actions);
      g.ref_probs = pi_ref.distribution(e.state, e.valid_actions);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  GroupBatch batch;
  batch.beta = cfg.beta;
  const auto gsize = static_cast<std::size_t>(cfg.group_size);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    Group& g = groups[i];
    const std::size_t ex = expert_index(dataset.entries[chosen[i]]);
    std::vector<double> rewards(gsize);
    g.picks.resize(gsize);
    for (std::size_t j = 0; j < gsize; ++j) {
      g.picks[j] = rng.categorical(g.old_probs);
      rewards[j] = g.picks[j] == ex ? 1.0 : 0.0;
    }
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(gsize);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(gsize));
    if (sd == 0.0) {
      ++batch.degenerate;
      continue;
    }
    const double denom = std::max(sd, cfg.variance_floor);
    g.advantages.resize(gsize);
    for (std::size_t j = 0; j < gsize; ++j) g.advantages[j] = (rewards[j] - mean) / denom;
    batch.groups.push_back(std::move(g));
  }
  return batch;
}

std::pair<FeaturizedPolicy, SampledReport> sampled_update(const FeaturizedPolicy& policy, const Policy& pi_ref,
                                                          const SingleTurnDataset& dataset,
                                                          const GrpoConfig& cfg) {
  cfg.validate();
  SampledReport report;
  report.p_ref = success_prob_single_turn(policy, dataset);
  FeaturizedPolicy current = policy;
  Rng rng(cfg.seed);
  for (int step = 0; step < cfg.steps; ++step) {
    const GroupBatch batch = sample_batch(current, pi_ref, dataset, cfg, rng);
    report.groups += static_cast<long>(batch.groups.size()) + batch.degenerate;
    report.degenerate_groups += batch.degenerate;
    ++report.steps;
    if (batch.groups.empty()) continue;
    const auto grad = surrogate_gradient(batch, current);
    auto& w = current.mutable_weights();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += cfg.learning_rate * grad[k];
  }
  report.p_final = success_prob_single_turn(current, dataset);
  return {std::move(current), report};
}

}  // namespace planlab
