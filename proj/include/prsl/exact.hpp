#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prsl/model.hpp"
#include "prsl/numeric.hpp"

namespace prsl {

// ---------------------------------------------------------------------------
// Evidence for a query: per-rule states (true, false, or marginalized out)
// and hard-clamped labels. The default — empty maps — conditions on every
// rule being true, the standard inference setting.
// ---------------------------------------------------------------------------

struct EvidenceSpec {
  enum class RuleState { True, False, Marginalized };

  std::map<std::size_t, RuleState> rule_states;      // absent rule index => True
  std::map<std::string, std::string> clamped_labels;  // label name -> category name

  RuleState state_of(std::size_t k) const {
    const auto it = rule_states.find(k);
    return it == rule_states.end() ? RuleState::True : it->second;
  }

  static EvidenceSpec all_rules_true() { return {}; }

  EvidenceSpec with_rule(std::size_t k, RuleState s) const {
    EvidenceSpec out = *this;
    out.rule_states[k] = s;
    return out;
  }

  EvidenceSpec with_clamp(std::string label, std::string category) const {
    EvidenceSpec out = *this;
    out.clamped_labels[std::move(label)] = std::move(category);
    return out;
  }
};

struct MpeResult {
  std::map<std::string, std::string> assignment;
  double probability = 0.0;
};

struct QueryResult {
  std::map<std::string, CategoricalDist> marginals;
  std::optional<MpeResult> mpe;
};

// log P(...) with probability-zero events made explicit.
struct LogLik {
  double value = 0.0;
  bool impossible = false;

  double value_or_neg_inf() const { return impossible ? numeric::neg_inf : value; }
};

inline constexpr std::size_t kExactStateGuard = 1000000;

// ---------------------------------------------------------------------------
// Joint posterior over the unclamped labels by direct enumeration:
// unnormalized weight(l) = prod_j prior_j(l_j) * prod_k P(R_k = r_k | l),
// accumulated in log space and normalized at the end. Guarded at 10^6
// states; beyond that the loopy engine is the tool.
// ---------------------------------------------------------------------------

class JointPosterior {
 public:
  // Category indices of the full assignment behind table slot `index`
  // (clamped labels sit at their fixed category).
  std::vector<std::size_t> assignment_at(std::size_t index) const {
    std::vector<std::size_t> full = fixed_;
    std::vector<std::size_t> free_digits;
    radix_.decode(index, free_digits);
    for (std::size_t i = 0; i < free_labels_.size(); ++i)
      full[free_labels_[i]] = free_digits[i];
    return full;
  }

  std::size_t size() const { return radix_.total(); }
  double prob(std::size_t index) const { return probs_[index]; }
  const std::vector<double>& probs() const { return probs_; }
  const std::vector<std::size_t>& free_labels() const { return free_labels_; }
  const std::vector<std::size_t>& fixed_assignment() const { return fixed_; }

  // log of the total unnormalized weight (the evidence term).
  double log_norm() const { return log_norm_; }

  double prob_of(std::span<const std::size_t> full_assignment) const {
    std::vector<std::size_t> digits(free_labels_.size());
    for (std::size_t i = 0; i < free_labels_.size(); ++i) {
      const std::size_t j = free_labels_[i];
      if (fixed_has_[j] && full_assignment[j] != fixed_[j]) return 0.0;
      digits[i] = full_assignment[j];
    }
    for (std::size_t j = 0; j < fixed_.size(); ++j)
      if (fixed_has_[j] && full_assignment[j] != fixed_[j]) return 0.0;
    return probs_[radix_.encode(digits)];
  }

 private:
  friend JointPosterior joint_posterior(const Model&, const Observation&, const EvidenceSpec&,
                                        const Calibrator&, std::size_t);

  std::vector<std::size_t> free_labels_;
  std::vector<std::size_t> fixed_;       // full length; meaningful where fixed_has_
  std::vector<char> fixed_has_;
  numeric::MixedRadix radix_{{}};
  std::vector<double> probs_;
  double log_norm_ = numeric::neg_inf;
};

namespace exact_detail {

// Per-rule CPT tabulated over the rule's free scope, with clamped labels
// folded in. log-values; evidence state already applied.
struct TabulatedRule {
  std::vector<std::size_t> scope;        // free-label positions (index into free_labels)
  std::vector<std::size_t> strides;      // within the rule table
  std::vector<double> log_value;         // size prod M(scope)
};

}  // namespace exact_detail

inline JointPosterior joint_posterior(const Model& model, const Observation& obs,
                                      const EvidenceSpec& ev = {},
                                      const Calibrator& calibrator = identity_calibrator(),
                                      std::size_t state_guard = kExactStateGuard) {
  JointPosterior post;
  const std::size_t J = model.num_labels();
  post.fixed_.assign(J, 0);
  post.fixed_has_.assign(J, 0);

  for (const auto& [name, category] : ev.clamped_labels) {
    const auto j = model.label_index(name);
    if (!j) throw ValidationError("clamp references unknown label '" + name + "'");
    const auto m = model.labels[*j].category_index(category);
    if (!m)
      throw ValidationError("clamp '" + category + "' is not a category of '" + name + "'");
    post.fixed_[*j] = *m;
    post.fixed_has_[*j] = 1;
  }
  for (const auto& [k, state] : ev.rule_states) {
    (void)state;
    if (k >= model.num_rules())
      throw ValidationError("evidence references rule index " + std::to_string(k) +
                            " outside the model");
  }

  const std::vector<CategoricalDist> priors = resolve_priors(model, obs, calibrator);

  std::vector<std::size_t> free_sizes;
  std::vector<std::size_t> free_position(J, SIZE_MAX);
  std::size_t states = 1;
  for (std::size_t j = 0; j < J; ++j) {
    if (post.fixed_has_[j]) continue;
    free_position[j] = post.free_labels_.size();
    post.free_labels_.push_back(j);
    free_sizes.push_back(model.labels[j].num_categories());
    if (states > state_guard / std::max<std::size_t>(free_sizes.back(), 1))
      throw InfeasibleError("exact engine infeasible: joint state space exceeds " +
                            std::to_string(state_guard) + " states, use the loopy engine");
    states *= free_sizes.back();
  }
  post.radix_ = numeric::MixedRadix(free_sizes);

  // Tabulate each non-marginalized rule over its free scope once, so the
  // sweep below is pure table lookups.
  std::vector<exact_detail::TabulatedRule> tabs;
  std::vector<std::size_t> full(J, 0);
  for (std::size_t j = 0; j < J; ++j)
    if (post.fixed_has_[j]) full[j] = post.fixed_[j];
  for (std::size_t k = 0; k < model.num_rules(); ++k) {
    const auto state = ev.state_of(k);
    if (state == EvidenceSpec::RuleState::Marginalized) continue;
    exact_detail::TabulatedRule tab;
    std::vector<std::size_t> scope_sizes;
    for (std::size_t j : rule_scope(model, k)) {
      if (post.fixed_has_[j]) continue;
      tab.scope.push_back(free_position[j]);
      scope_sizes.push_back(model.labels[j].num_categories());
    }
    numeric::MixedRadix scope_radix(scope_sizes);
    tab.strides.resize(tab.scope.size());
    for (std::size_t i = 0; i < tab.scope.size(); ++i) tab.strides[i] = scope_radix.stride(i);
    tab.log_value.resize(scope_radix.total());
    std::vector<std::size_t> digits(scope_sizes.size(), 0);
    for (std::size_t t = 0; t < scope_radix.total(); ++t) {
      for (std::size_t i = 0; i < tab.scope.size(); ++i)
        full[post.free_labels_[tab.scope[i]]] = digits[i];
      const double p_true = rule_true_prob(model, k, full);
      const double p = state == EvidenceSpec::RuleState::True ? p_true : 1.0 - p_true;
      tab.log_value[t] = std::log(p);  // log(0) = -inf is fine
      scope_radix.next(digits);
    }
    tabs.push_back(std::move(tab));
  }

  // Enumerate. Digit order matches the radix, so index order is the
  // lexicographic order of free-label assignments.
  std::size_t max_m = 1;
  for (std::size_t i = 0; i < post.free_labels_.size(); ++i)
    max_m = std::max(max_m, free_sizes[i]);
  std::vector<double> log_prior(post.free_labels_.size() * max_m, numeric::neg_inf);
  for (std::size_t i = 0; i < post.free_labels_.size(); ++i) {
    const auto& d = priors[post.free_labels_[i]];
    for (std::size_t m = 0; m < d.size(); ++m) log_prior[i * max_m + m] = std::log(d[m]);
  }
  double log_clamped = 0.0;
  for (std::size_t j = 0; j < J; ++j)
    if (post.fixed_has_[j]) log_clamped += std::log(priors[j][post.fixed_[j]]);

  std::vector<double>& logw = post.probs_;
  logw.assign(post.radix_.total(), 0.0);
  std::vector<std::size_t> digits(post.free_labels_.size(), 0);
  for (std::size_t idx = 0; idx < post.radix_.total(); ++idx) {
    double lw = log_clamped;
    for (std::size_t i = 0; i < digits.size(); ++i) lw += log_prior[i * max_m + digits[i]];
    for (const auto& tab : tabs) {
      std::size_t t = 0;
      for (std::size_t i = 0; i < tab.scope.size(); ++i)
        t += digits[tab.scope[i]] * tab.strides[i];
      lw += tab.log_value[t];
    }
    logw[idx] = lw;
    post.radix_.next(digits);
  }

  post.log_norm_ = numeric::logsumexp(logw);
  if (!std::isfinite(post.log_norm_))
    throw ContradictionError("evidence has zero probability: every joint assignment is ruled out");
  for (double& v : logw) v = std::exp(v - post.log_norm_);
  return post;
}

// ---------------------------------------------------------------------------
// Queries on top of the joint table.
// ---------------------------------------------------------------------------

inline QueryResult marginal_query_exact(const Model& model, const Observation& obs,
                                        const EvidenceSpec& ev = {},
                                        const Calibrator& calibrator = identity_calibrator()) {
  const JointPosterior post = joint_posterior(model, obs, ev, calibrator);
  QueryResult result;

  std::vector<std::vector<double>> acc(model.num_labels());
  for (std::size_t j = 0; j < model.num_labels(); ++j)
    acc[j].assign(model.labels[j].num_categories(), 0.0);

  std::vector<std::size_t> digits(post.free_labels().size(), 0);
  numeric::MixedRadix radix([&] {
    std::vector<std::size_t> sizes;
    for (std::size_t j : post.free_labels()) sizes.push_back(model.labels[j].num_categories());
    return sizes;
  }());
  for (std::size_t idx = 0; idx < post.size(); ++idx) {
    for (std::size_t i = 0; i < digits.size(); ++i)
      acc[post.free_labels()[i]][digits[i]] += post.prob(idx);
    radix.next(digits);
  }

  for (std::size_t j = 0; j < model.num_labels(); ++j) {
    const auto& name = model.labels[j].name;
    const auto it = ev.clamped_labels.find(name);
    if (it != ev.clamped_labels.end()) {
      const auto m = model.labels[j].category_index(it->second);
      result.marginals.emplace(
          name, CategoricalDist::point_mass(model.labels[j].num_categories(), *m));
      continue;
    }
    double sum = 0.0;
    for (double v : acc[j]) sum += v;
    for (double& v : acc[j]) v /= sum;  // strip accumulated rounding
    result.marginals.emplace(name, CategoricalDist(std::move(acc[j])));
  }
  return result;
}

inline QueryResult mpe_query_exact(const Model& model, const Observation& obs,
                                   const EvidenceSpec& ev = {},
                                   const Calibrator& calibrator = identity_calibrator()) {
  const JointPosterior post = joint_posterior(model, obs, ev, calibrator);
  // The table is in lexicographic order, so scanning with a strict `>` makes
  // ties resolve to the lexicographically smallest assignment.
  std::size_t best = 0;
  for (std::size_t idx = 1; idx < post.size(); ++idx)
    if (post.prob(idx) > post.prob(best)) best = idx;

  QueryResult result;
  MpeResult mpe;
  const auto assignment = post.assignment_at(best);
  for (std::size_t j = 0; j < model.num_labels(); ++j)
    mpe.assignment[model.labels[j].name] = model.labels[j].categories[assignment[j]];
  mpe.probability = post.prob(best);
  result.mpe = std::move(mpe);
  return result;
}

// log P(L' = l' | evidence, x) where `truth` may cover any subset of labels
// (complete truth gives the plain joint log-likelihood). Sums the joint
// table over assignments consistent with the known labels.
inline LogLik joint_loglik_exact(const Model& model, const Observation& obs,
                                 const std::map<std::string, std::string>& truth,
                                 const EvidenceSpec& ev = {},
                                 const Calibrator& calibrator = identity_calibrator()) {
  if (truth.empty()) return {0.0, false};  // P(empty statement) = 1
  const JointPosterior post = joint_posterior(model, obs, ev, calibrator);

  std::vector<std::optional<std::size_t>> want(model.num_labels());
  for (const auto& [name, category] : truth) {
    const auto j = model.label_index(name);
    if (!j) throw ValidationError("truth references unknown label '" + name + "'");
    const auto m = model.labels[*j].category_index(category);
    if (!m)
      throw ValidationError("truth '" + category + "' is not a category of '" + name + "'");
    want[*j] = *m;
  }

  double total = 0.0;
  std::vector<std::size_t> digits(post.free_labels().size(), 0);
  numeric::MixedRadix radix([&] {
    std::vector<std::size_t> sizes;
    for (std::size_t j : post.free_labels()) sizes.push_back(model.labels[j].num_categories());
    return sizes;
  }());
  // Clamped labels disagreeing with the truth zero the whole sum.
  for (std::size_t j = 0; j < model.num_labels(); ++j) {
    if (!want[j]) continue;
    const auto it = ev.clamped_labels.find(model.labels[j].name);
    if (it == ev.clamped_labels.end()) continue;
    if (model.labels[j].category_index(it->second) != want[j]) return {0.0, true};
  }
  for (std::size_t idx = 0; idx < post.size(); ++idx) {
    bool match = true;
    for (std::size_t i = 0; i < digits.size() && match; ++i) {
      const auto& w = want[post.free_labels()[i]];
      match = !w || *w == digits[i];
    }
    if (match) total += post.prob(idx);
    radix.next(digits);
  }
  if (total <= 0.0) return {0.0, true};
  return {std::log(std::min(total, 1.0)), false};
}

// P(R_k = 1 | ev, x): expectation of rule k's CPT under a posterior in which
// rule k itself is marginalized out. Rule k's state in `ev` is ignored.
inline double rule_true_prob_exact(const Model& model, const Observation& obs, std::size_t k,
                                   const EvidenceSpec& ev = {},
                                   const Calibrator& calibrator = identity_calibrator()) {
  const EvidenceSpec marg = ev.with_rule(k, EvidenceSpec::RuleState::Marginalized);
  const JointPosterior post = joint_posterior(model, obs, marg, calibrator);
  double acc = 0.0;
  for (std::size_t idx = 0; idx < post.size(); ++idx)
    acc += post.prob(idx) * rule_true_prob(model, k, post.assignment_at(idx));
  return std::min(acc, 1.0);
}

}  // namespace prsl
