#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prsl/exact.hpp"
#include "prsl/model.hpp"
#include "prsl/numeric.hpp"

namespace prsl {

// ---------------------------------------------------------------------------
// Loopy belief propagation on the bipartite label/rule factor graph.
// Synchronous flooding schedule, damped factor-to-variable updates,
// convergence on the largest absolute message change.
// ---------------------------------------------------------------------------

struct BPOptions {
  double damping = 0.5;       // in [0, 1)
  double tol = 1e-6;          // positive
  std::size_t max_iters = 200;
  std::size_t max_formula_scope = 5;  // tabulation guard for formula factors

  void validate() const {
    if (!(damping >= 0.0 && damping < 1.0)) throw ValidationError("BP damping outside [0, 1)");
    if (!(tol > 0.0)) throw ValidationError("BP tol must be positive");
    if (max_iters == 0) throw ValidationError("BP max_iters must be positive");
  }
};

struct FactorGraph {
  struct Variable {
    std::size_t label = 0;             // model label index
    std::vector<double> prior;         // psi_j, calibrated prediction or dummy prior
    std::vector<std::size_t> factors;  // incident factor ids
  };

  // One rule with its evidence state absorbed. Noisy-or factors keep the
  // product structure (value = 1 - coeff * prod_v q[v][l_v] for R=1, or
  // coeff * prod for R=0); everything else is tabulated.
  struct Factor {
    std::size_t rule = 0;
    bool noisy_or = false;
    bool evidence_true = true;
    double coeff = 1.0;                      // q-product over clamped scope labels
    std::vector<std::size_t> vars;           // variable ids in scope
    std::vector<std::vector<double>> q;      // noisy-or: per scope var, per category
    std::vector<double> table;               // tabulated: mixed radix over vars
    std::vector<std::size_t> sizes;          // categories per scope var

    double value(std::span<const std::size_t> digits) const {
      if (noisy_or) {
        double prod = coeff;
        for (std::size_t i = 0; i < vars.size(); ++i) prod *= q[i][digits[i]];
        return evidence_true ? 1.0 - prod : prod;
      }
      std::size_t idx = 0;
      for (std::size_t i = 0; i < vars.size(); ++i) idx = idx * sizes[i] + digits[i];
      return table[idx];
    }
  };

  std::vector<Variable> vars;
  std::vector<Factor> factors;
  std::vector<std::string> var_names;  // label names, aligned with vars
};

inline FactorGraph build_factor_graph(const Model& model, const Observation& obs,
                                      const EvidenceSpec& ev = {}, const BPOptions& opts = {},
                                      const Calibrator& calibrator = identity_calibrator()) {
  opts.validate();
  FactorGraph g;
  const auto priors = resolve_priors(model, obs, calibrator);

  std::vector<std::size_t> clamped(model.num_labels(), SIZE_MAX);
  for (const auto& [name, category] : ev.clamped_labels) {
    const auto j = model.label_index(name);
    if (!j) throw ValidationError("clamp references unknown label '" + name + "'");
    const auto m = model.labels[*j].category_index(category);
    if (!m)
      throw ValidationError("clamp '" + category + "' is not a category of '" + name + "'");
    clamped[*j] = *m;
  }

  std::vector<std::size_t> var_of_label(model.num_labels(), SIZE_MAX);
  for (std::size_t j = 0; j < model.num_labels(); ++j) {
    if (clamped[j] != SIZE_MAX) continue;
    var_of_label[j] = g.vars.size();
    g.vars.push_back({j, priors[j].probs(), {}});
    g.var_names.push_back(model.labels[j].name);
  }

  for (std::size_t k = 0; k < model.num_rules(); ++k) {
    const auto state = ev.state_of(k);
    if (state == EvidenceSpec::RuleState::Marginalized) continue;
    const auto scope = rule_scope(model, k);

    FactorGraph::Factor f;
    f.rule = k;
    f.evidence_true = state == EvidenceSpec::RuleState::True;

    if (const auto* nor = std::get_if<NoisyOrRule>(&model.rules[k])) {
      f.noisy_or = true;
      for (std::size_t j : scope) {
        const auto& row = nor->q.at(model.labels[j].name);
        if (clamped[j] != SIZE_MAX) {
          f.coeff *= row[clamped[j]];
          continue;
        }
        f.vars.push_back(var_of_label[j]);
        f.q.push_back(row);
        f.sizes.push_back(row.size());
      }
      if (f.vars.empty()) continue;  // constant factor, cancels in normalization
    } else {
      std::vector<std::size_t> free_scope;
      for (std::size_t j : scope)
        if (clamped[j] == SIZE_MAX) free_scope.push_back(j);
      if (free_scope.size() > opts.max_formula_scope)
        throw InfeasibleError("formula rule #" + std::to_string(k + 1) + " spans " +
                              std::to_string(free_scope.size()) +
                              " unclamped labels, above the tabulation guard of " +
                              std::to_string(opts.max_formula_scope));
      std::vector<std::size_t> sizes;
      for (std::size_t j : free_scope) sizes.push_back(model.labels[j].num_categories());
      numeric::MixedRadix radix(sizes);
      std::vector<std::size_t> full(model.num_labels(), 0);
      for (std::size_t j = 0; j < model.num_labels(); ++j)
        if (clamped[j] != SIZE_MAX) full[j] = clamped[j];
      f.table.resize(radix.total());
      std::vector<std::size_t> digits(sizes.size(), 0);
      for (std::size_t t = 0; t < radix.total(); ++t) {
        for (std::size_t i = 0; i < free_scope.size(); ++i) full[free_scope[i]] = digits[i];
        const double p_true = rule_true_prob(model, k, full);
        f.table[t] = f.evidence_true ? p_true : 1.0 - p_true;
        radix.next(digits);
      }
      if (free_scope.empty()) continue;  // fully clamped, constant
      for (std::size_t j : free_scope) {
        f.vars.push_back(var_of_label[j]);
        f.sizes.push_back(model.labels[j].num_categories());
      }
    }
    const std::size_t fid = g.factors.size();
    for (std::size_t v : f.vars) g.vars[v].factors.push_back(fid);
    g.factors.push_back(std::move(f));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Messages.
// ---------------------------------------------------------------------------

namespace bp_detail {

inline constexpr double kMessageFloor = 1e-300;

// Normalize in place. Returns false when the whole message collapsed below
// the floor, in which case entries are floored instead of silently uniformed.
inline bool normalize_message(std::vector<double>& msg) {
  double sum = 0.0;
  for (double v : msg) sum += v;
  if (!(sum >= kMessageFloor) || !std::isfinite(sum)) {
    for (double& v : msg) v = kMessageFloor;
    return false;
  }
  for (double& v : msg) v /= sum;
  return true;
}

}  // namespace bp_detail

namespace bp_detail {

// Unnormalized noisy-or sum message; normalization is the caller's job so
// the schedule can floor-and-flag instead of throwing.
inline std::vector<double> noisy_or_sum_message_raw(const FactorGraph::Factor& factor,
                                                    std::size_t target_slot,
                                                    std::span<const std::vector<double>> incoming) {
  double other = factor.coeff;
  for (std::size_t i = 0; i < factor.vars.size(); ++i) {
    if (i == target_slot) continue;
    double dot = 0.0;
    for (std::size_t m = 0; m < factor.q[i].size(); ++m) dot += incoming[i][m] * factor.q[i][m];
    other *= dot;
  }
  std::vector<double> msg(factor.q[target_slot].size());
  for (std::size_t m = 0; m < msg.size(); ++m) {
    const double prod = factor.q[target_slot][m] * other;
    msg[m] = factor.evidence_true ? 1.0 - prod : prod;
  }
  return msg;
}

}  // namespace bp_detail

// Factor-to-variable message for a noisy-or factor in sum mode, using the
// product shortcut: for R=1 evidence msg(m) ~ 1 - coeff * q_{jm} * prod over
// other scope vars of sum_m' mu(m') q(m'); for R=0, msg(m) ~ coeff * q_{jm} *
// same product. Linear in scope size and category count.
inline std::vector<double> noisy_or_message_sum(const FactorGraph::Factor& factor,
                                                std::size_t target_slot,
                                                std::span<const std::vector<double>> incoming) {
  if (!factor.noisy_or) throw ValidationError("noisy_or_message_sum: factor is not a noisy-or");
  std::vector<double> msg = bp_detail::noisy_or_sum_message_raw(factor, target_slot, incoming);
  if (!bp_detail::normalize_message(msg))
    throw NumericError("noisy-or message collapsed to zero");
  return msg;
}

enum class MessageMode { Sum, Max };

// Generic factor-to-variable message by enumerating the rest of the scope.
// Serves formula factors in sum mode and every factor in max mode.
inline std::vector<double> factor_message_enumerate(const FactorGraph::Factor& factor,
                                                    std::size_t target_slot,
                                                    std::span<const std::vector<double>> incoming,
                                                    MessageMode mode,
                                                    std::size_t state_guard = 100000) {
  std::vector<std::size_t> rest_sizes;
  std::vector<std::size_t> rest_slots;
  std::size_t states = 1;
  for (std::size_t i = 0; i < factor.vars.size(); ++i) {
    if (i == target_slot) continue;
    rest_slots.push_back(i);
    rest_sizes.push_back(factor.sizes[i]);
    states *= factor.sizes[i];
    if (states > state_guard)
      throw InfeasibleError("factor message enumeration exceeds " + std::to_string(state_guard) +
                            " states");
  }
  numeric::MixedRadix radix(rest_sizes);
  const std::size_t m_count = factor.sizes[target_slot];
  std::vector<double> msg(m_count, 0.0);
  std::vector<std::size_t> digits(rest_sizes.size(), 0);
  std::vector<std::size_t> full(factor.vars.size(), 0);
  for (std::size_t t = 0; t < radix.total(); ++t) {
    double weight = 1.0;
    for (std::size_t i = 0; i < rest_slots.size(); ++i) {
      full[rest_slots[i]] = digits[i];
      weight *= incoming[rest_slots[i]][digits[i]];
    }
    for (std::size_t m = 0; m < m_count; ++m) {
      full[target_slot] = m;
      const double contrib = weight * factor.value(full);
      if (mode == MessageMode::Sum)
        msg[m] += contrib;
      else
        msg[m] = std::max(msg[m], contrib);
    }
    radix.next(digits);
  }
  if (!bp_detail::normalize_message(msg))
    throw NumericError("factor message collapsed to zero");
  return msg;
}

// ---------------------------------------------------------------------------
// Schedules.
// ---------------------------------------------------------------------------

struct BPResult {
  std::map<std::string, CategoricalDist> beliefs;
  bool converged = false;
  std::size_t iterations = 0;
  bool numeric_warning = false;
};

struct MaxProductResult {
  std::vector<std::size_t> argmax;  // per graph variable, category index
  bool converged = false;
  std::size_t iterations = 0;
  bool numeric_warning = false;
};

namespace bp_detail {

struct MessageStore {
  // to_var[f][slot] and to_fac[f][slot], both over factor-local slots.
  std::vector<std::vector<std::vector<double>>> to_var, to_fac;

  explicit MessageStore(const FactorGraph& g) {
    to_var.resize(g.factors.size());
    to_fac.resize(g.factors.size());
    for (std::size_t f = 0; f < g.factors.size(); ++f) {
      const auto& factor = g.factors[f];
      to_var[f].resize(factor.vars.size());
      to_fac[f].resize(factor.vars.size());
      for (std::size_t i = 0; i < factor.vars.size(); ++i) {
        const std::size_t m = factor.sizes[i];
        to_var[f][i].assign(m, 1.0 / static_cast<double>(m));
        to_fac[f][i].assign(m, 1.0 / static_cast<double>(m));
      }
    }
  }
};

// Variable-to-factor messages from the current factor-to-variable ones:
// mu_{j->k} ~ psi_j * prod of messages from the other incident factors.
inline bool update_var_messages(const FactorGraph& g, MessageStore& store) {
  bool warned = false;
  for (std::size_t f = 0; f < g.factors.size(); ++f) {
    const auto& factor = g.factors[f];
    for (std::size_t i = 0; i < factor.vars.size(); ++i) {
      const auto& var = g.vars[factor.vars[i]];
      std::vector<double> msg = var.prior;
      for (std::size_t other : var.factors) {
        if (other == f) continue;
        const auto& of = g.factors[other];
        for (std::size_t s = 0; s < of.vars.size(); ++s) {
          if (of.vars[s] != factor.vars[i]) continue;
          for (std::size_t m = 0; m < msg.size(); ++m) msg[m] *= store.to_var[other][s][m];
        }
      }
      warned |= !normalize_message(msg);
      store.to_fac[f][i] = std::move(msg);
    }
  }
  return warned;
}

inline void check_finite(const MessageStore& store) {
  for (const auto& per_factor : {&store.to_var, &store.to_fac})
    for (const auto& slots : *per_factor)
      for (const auto& msg : slots)
        for (double v : msg)
          if (!std::isfinite(v)) throw NumericError("belief propagation produced NaN/Inf");
}

}  // namespace bp_detail

inline BPResult sum_product(const FactorGraph& g, const BPOptions& opts = {}) {
  opts.validate();
  bp_detail::MessageStore store(g);
  BPResult result;

  for (std::size_t iter = 1; iter <= opts.max_iters; ++iter) {
    result.iterations = iter;
    result.numeric_warning |= bp_detail::update_var_messages(g, store);
    double max_change = 0.0;
    for (std::size_t f = 0; f < g.factors.size(); ++f) {
      const auto& factor = g.factors[f];
      for (std::size_t i = 0; i < factor.vars.size(); ++i) {
        std::vector<double> msg;
        if (factor.noisy_or) {
          msg = bp_detail::noisy_or_sum_message_raw(factor, i, store.to_fac[f]);
          result.numeric_warning |= !bp_detail::normalize_message(msg);
        } else {
          try {
            msg = factor_message_enumerate(factor, i, store.to_fac[f], MessageMode::Sum);
          } catch (const NumericError&) {
            msg.assign(factor.sizes[i], bp_detail::kMessageFloor);
            bp_detail::normalize_message(msg);
            result.numeric_warning = true;
          }
        }
        auto& slot = store.to_var[f][i];
        for (std::size_t m = 0; m < msg.size(); ++m) {
          const double updated = (1.0 - opts.damping) * msg[m] + opts.damping * slot[m];
          max_change = std::max(max_change, std::fabs(updated - slot[m]));
          slot[m] = updated;
        }
      }
    }
    bp_detail::check_finite(store);
    if (max_change < opts.tol) {
      result.converged = true;
      break;
    }
  }

  for (std::size_t v = 0; v < g.vars.size(); ++v) {
    std::vector<double> belief = g.vars[v].prior;
    for (std::size_t f : g.vars[v].factors) {
      const auto& factor = g.factors[f];
      for (std::size_t s = 0; s < factor.vars.size(); ++s)
        if (factor.vars[s] == v)
          for (std::size_t m = 0; m < belief.size(); ++m) belief[m] *= store.to_var[f][s][m];
    }
    result.numeric_warning |= !bp_detail::normalize_message(belief);
    result.beliefs.emplace(g.var_names[v], CategoricalDist(std::move(belief)));
  }
  return result;
}

inline MaxProductResult max_product(const FactorGraph& g, const BPOptions& opts = {}) {
  opts.validate();
  bp_detail::MessageStore store(g);
  MaxProductResult result;

  for (std::size_t iter = 1; iter <= opts.max_iters; ++iter) {
    result.iterations = iter;
    result.numeric_warning |= bp_detail::update_var_messages(g, store);
    double max_change = 0.0;
    for (std::size_t f = 0; f < g.factors.size(); ++f) {
      const auto& factor = g.factors[f];
      for (std::size_t i = 0; i < factor.vars.size(); ++i) {
        std::vector<double> msg;
        try {
          // No product shortcut exists for max of 1 - prod q, so max mode
          // always enumerates the factor scope.
          msg = factor_message_enumerate(factor, i, store.to_fac[f], MessageMode::Max);
        } catch (const NumericError&) {
          msg.assign(factor.sizes[i], bp_detail::kMessageFloor);
          bp_detail::normalize_message(msg);
          result.numeric_warning = true;
        }
        auto& slot = store.to_var[f][i];
        for (std::size_t m = 0; m < msg.size(); ++m) {
          const double updated = (1.0 - opts.damping) * msg[m] + opts.damping * slot[m];
          max_change = std::max(max_change, std::fabs(updated - slot[m]));
          slot[m] = updated;
        }
      }
    }
    bp_detail::check_finite(store);
    if (max_change < opts.tol) {
      result.converged = true;
      break;
    }
  }

  // Decode: per-variable argmax of the max-belief, ties to the lowest index.
  result.argmax.resize(g.vars.size());
  for (std::size_t v = 0; v < g.vars.size(); ++v) {
    std::vector<double> belief = g.vars[v].prior;
    for (std::size_t f : g.vars[v].factors) {
      const auto& factor = g.factors[f];
      for (std::size_t s = 0; s < factor.vars.size(); ++s)
        if (factor.vars[s] == v)
          for (std::size_t m = 0; m < belief.size(); ++m) belief[m] *= store.to_var[f][s][m];
    }
    std::size_t best = 0;
    for (std::size_t m = 1; m < belief.size(); ++m)
      if (belief[m] > belief[best]) best = m;
    result.argmax[v] = best;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model-level conveniences: build, run, translate category indices back to
// names, and fill in clamped labels.
// ---------------------------------------------------------------------------

struct LoopyMarginalResult {
  std::map<std::string, CategoricalDist> marginals;
  bool converged = false;
  std::size_t iterations = 0;
  bool numeric_warning = false;
};

inline LoopyMarginalResult marginal_query_loopy(const Model& model, const Observation& obs,
                                                const EvidenceSpec& ev = {},
                                                const BPOptions& opts = {},
                                                const Calibrator& calibrator = identity_calibrator()) {
  const FactorGraph g = build_factor_graph(model, obs, ev, opts, calibrator);
  BPResult bp = sum_product(g, opts);
  LoopyMarginalResult out;
  out.converged = bp.converged;
  out.iterations = bp.iterations;
  out.numeric_warning = bp.numeric_warning;
  out.marginals = std::move(bp.beliefs);
  for (const auto& spec : model.labels) {
    const auto it = ev.clamped_labels.find(spec.name);
    if (it == ev.clamped_labels.end()) continue;
    out.marginals.emplace(spec.name, CategoricalDist::point_mass(
                                         spec.num_categories(), *spec.category_index(it->second)));
  }
  return out;
}

struct LoopyMpeResult {
  std::map<std::string, std::string> assignment;
  bool converged = false;
  std::size_t iterations = 0;
  bool numeric_warning = false;
};

inline LoopyMpeResult mpe_query_loopy(const Model& model, const Observation& obs,
                                      const EvidenceSpec& ev = {}, const BPOptions& opts = {},
                                      const Calibrator& calibrator = identity_calibrator()) {
  const FactorGraph g = build_factor_graph(model, obs, ev, opts, calibrator);
  MaxProductResult mp = max_product(g, opts);
  LoopyMpeResult out;
  out.converged = mp.converged;
  out.iterations = mp.iterations;
  out.numeric_warning = mp.numeric_warning;
  for (std::size_t v = 0; v < g.vars.size(); ++v) {
    const auto& spec = model.labels[g.vars[v].label];
    out.assignment[spec.name] = spec.categories[mp.argmax[v]];
  }
  for (const auto& [name, category] : ev.clamped_labels) out.assignment[name] = category;
  return out;
}

}  // namespace prsl
