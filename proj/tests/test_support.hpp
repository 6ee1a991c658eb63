#pragma once

// Shared fixtures and independent oracles for the test suites. Everything
// here stays deliberately simple and separate from the library's own
// computation paths so it can serve as a cross-check.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "prsl/exact.hpp"
#include "prsl/model.hpp"

namespace prsl::testing {

// The three-sensor warehouse model used as the running example: a camera
// (walking / normal / overhead), sensor shoes (gait / standing), and a
// wristband (high / centered / low), tied together by three rules.
inline Model warehouse_model() {
  Model model;
  model.labels = {
      {"L1", {"w", "n", "o"}},
      {"L2", {"g", "s"}},
      {"L3", {"h", "c", "l"}},
  };
  model.rules.push_back(FormulaRule{parse_formula("(h & s) -> o", model.labels), 0.8,
                                    "(h & s) -> o"});
  model.rules.push_back(FormulaRule{parse_formula("n -> (c | l)", model.labels), 0.9,
                                    "n -> (c | l)"});
  model.rules.push_back(FormulaRule{parse_formula("w <-> g", model.labels), 1.0, "w <-> g"});
  return model;
}

inline Observation warehouse_observation() {
  Observation obs;
  obs.id = "warehouse-1";
  obs.predictions.emplace("L1", CategoricalDist({0.1, 0.4, 0.5}));
  obs.predictions.emplace("L2", CategoricalDist({0.05, 0.95}));
  obs.predictions.emplace("L3", CategoricalDist({0.5, 0.3, 0.2}));
  return obs;
}

// Brute-force unnormalized weight of one full assignment, written as the
// flattest possible loop over prior entries and rule CPTs.
inline double brute_force_weight(const Model& model, const std::vector<CategoricalDist>& priors,
                                 const std::vector<std::size_t>& assignment) {
  double w = 1.0;
  for (std::size_t j = 0; j < model.num_labels(); ++j) w *= priors[j][assignment[j]];
  for (std::size_t k = 0; k < model.num_rules(); ++k)
    w *= rule_true_prob(model, k, assignment);
  return w;
}

// Random model generator for property tests: J labels with 2..max_m
// categories, K noisy-or rules with q drawn from [q_lo, q_hi] (interior by
// default so finite differences stay well-defined).
struct RandomModelOptions {
  std::size_t max_labels = 4;
  std::size_t max_rules = 3;
  std::size_t max_categories = 3;
  double q_lo = 0.05;
  double q_hi = 0.95;
  double sparse_row_prob = 0.25;  // chance a (rule, label) row is left out
};

inline Model random_noisy_or_model(std::mt19937_64& rng, const RandomModelOptions& opt = {}) {
  std::uniform_int_distribution<std::size_t> labels_dist(2, opt.max_labels);
  std::uniform_int_distribution<std::size_t> rules_dist(1, opt.max_rules);
  std::uniform_int_distribution<std::size_t> cats_dist(2, opt.max_categories);
  std::uniform_real_distribution<double> q_dist(opt.q_lo, opt.q_hi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Model model;
  const std::size_t J = labels_dist(rng);
  for (std::size_t j = 0; j < J; ++j) {
    LabelSpec spec;
    spec.name = "L" + std::to_string(j + 1);
    const std::size_t M = cats_dist(rng);
    for (std::size_t m = 0; m < M; ++m) spec.categories.push_back("c" + std::to_string(m + 1));
    model.labels.push_back(std::move(spec));
  }
  const std::size_t K = rules_dist(rng);
  for (std::size_t k = 0; k < K; ++k) {
    NoisyOrRule rule;
    std::size_t connected = 0;
    for (const auto& spec : model.labels) {
      if (unit(rng) < opt.sparse_row_prob) continue;
      std::vector<double> row(spec.num_categories());
      for (double& q : row) q = q_dist(rng);
      rule.q.emplace(spec.name, std::move(row));
      ++connected;
    }
    if (connected == 0) {
      // keep at least one connected label so the rule is not a constant
      const auto& spec = model.labels[k % model.labels.size()];
      std::vector<double> row(spec.num_categories());
      for (double& q : row) q = q_dist(rng);
      rule.q.emplace(spec.name, std::move(row));
    }
    model.rules.push_back(std::move(rule));
  }
  return model;
}

inline Observation random_observation(std::mt19937_64& rng, const Model& model,
                                      double missing_prob = 0.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  Observation obs;
  obs.id = "random";
  for (const auto& spec : model.labels) {
    if (unit(rng) < missing_prob) continue;
    std::vector<double> v(spec.num_categories());
    double sum = 0.0;
    for (double& x : v) {
      do { x = expo(rng); } while (x <= 0.0);
      sum += x;
    }
    for (double& x : v) x /= sum;
    obs.predictions.emplace(spec.name, CategoricalDist(std::move(v)));
  }
  return obs;
}

}  // namespace prsl::testing
