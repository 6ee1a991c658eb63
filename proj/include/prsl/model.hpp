#pragma once

#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "prsl/core.hpp"
#include "prsl/formula.hpp"
#include "prsl/noisy_or.hpp"

namespace prsl {

using Rule = std::variant<FormulaRule, NoisyOrRule>;

// ---------------------------------------------------------------------------
// The whole network minus observation-specific priors: an ordered list of
// labels, a list of rules over them, and optional per-label default priors
// used when an observation carries no prediction for a label. The structure
// is bipartite by construction (rules reference labels only), so it is
// always acyclic.
//
// Models are immutable in spirit: build one, validate it, then share it
// freely across threads.
// ---------------------------------------------------------------------------

struct Model {
  std::vector<LabelSpec> labels;
  std::vector<Rule> rules;
  std::map<std::string, CategoricalDist> priors;

  std::optional<std::size_t> label_index(const std::string& name) const {
    for (std::size_t j = 0; j < labels.size(); ++j)
      if (labels[j].name == name) return j;
    return std::nullopt;
  }

  std::size_t num_labels() const { return labels.size(); }
  std::size_t num_rules() const { return rules.size(); }
};

// P(R_k = 1 | assignment) for either rule kind.
inline double rule_true_prob(const Model& model, std::size_t k,
                             std::span<const std::size_t> assignment) {
  const Rule& rule = model.rules.at(k);
  if (const auto* fr = std::get_if<FormulaRule>(&rule)) return rule_prob_formula(*fr, assignment);
  return rule_prob_noisy_or(std::get<NoisyOrRule>(rule), assignment, model.labels);
}

// Label indices a rule depends on.
inline std::set<std::size_t> rule_scope(const Model& model, std::size_t k) {
  const Rule& rule = model.rules.at(k);
  if (const auto* fr = std::get_if<FormulaRule>(&rule)) return formula_scope(fr->expr);
  std::set<std::size_t> out;
  for (const auto& [name, row] : std::get<NoisyOrRule>(rule).q) {
    bool connected = false;
    for (double v : row) connected |= v < 1.0;
    if (!connected) continue;
    if (const auto j = model.label_index(name)) out.insert(*j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation. Violations are data, not failures: the list is empty exactly
// when every structural invariant holds.
// ---------------------------------------------------------------------------

inline std::vector<std::string> validate_model(const Model& model) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t j = 0; j < model.labels.size(); ++j) {
    const auto& spec = model.labels[j];
    const std::string where = "label '" + spec.name + "'";
    if (spec.name.empty()) out.push_back("label #" + std::to_string(j) + " has an empty name");
    if (!seen.insert(spec.name).second) out.push_back("duplicate " + where);
    if (spec.num_categories() < 2) out.push_back(where + " needs at least 2 categories");
    std::set<std::string> cats;
    for (const auto& c : spec.categories)
      if (!cats.insert(c).second)
        out.push_back(where + " repeats category '" + c + "'");
  }

  for (std::size_t k = 0; k < model.rules.size(); ++k) {
    const std::string where = "rule #" + std::to_string(k + 1);
    if (const auto* fr = std::get_if<FormulaRule>(&model.rules[k])) {
      if (!(fr->p >= 0.0 && fr->p <= 1.0))
        out.push_back(where + ": p outside [0, 1]");
      for (std::size_t j : formula_scope(fr->expr)) {
        if (j >= model.labels.size()) {
          out.push_back(where + ": formula references label index " + std::to_string(j) +
                        " outside the model");
          continue;
        }
        // Category indices are checked against the owning label.
        std::vector<const Formula*> stack{&fr->expr};
        while (!stack.empty()) {
          const Formula* f = stack.back();
          stack.pop_back();
          if (f->kind == Formula::Kind::Atom && f->label == j &&
              f->category >= model.labels[j].num_categories())
            out.push_back(where + ": atom category index " + std::to_string(f->category) +
                          " outside label '" + model.labels[j].name + "'");
          for (const auto& c : f->children) stack.push_back(&c);
        }
      }
    } else {
      const auto& nor = std::get<NoisyOrRule>(model.rules[k]);
      for (const auto& [name, row] : nor.q) {
        const auto j = model.label_index(name);
        if (!j) {
          out.push_back(where + ": q references unknown label '" + name + "'");
          continue;
        }
        if (row.size() != model.labels[*j].num_categories()) {
          out.push_back(where + ": q row for '" + name + "' has length " +
                        std::to_string(row.size()) + ", expected " +
                        std::to_string(model.labels[*j].num_categories()));
          continue;
        }
        const double lo = nor.crisp ? 0.0 : std::numeric_limits<double>::min();
        for (std::size_t m = 0; m < row.size(); ++m) {
          if (!(row[m] >= lo && row[m] <= 1.0))
            out.push_back(where + ": q[" + name + "][" + model.labels[*j].categories[m] +
                          "] = " + std::to_string(row[m]) +
                          (nor.crisp ? " outside [0, 1]" : " outside (0, 1]"));
        }
      }
    }
  }

  for (const auto& [name, dist] : model.priors) {
    const auto j = model.label_index(name);
    if (!j) {
      out.push_back("prior references unknown label '" + name + "'");
      continue;
    }
    if (dist.size() != model.labels[*j].num_categories())
      out.push_back("prior for '" + name + "' has length " + std::to_string(dist.size()) +
                    ", expected " + std::to_string(model.labels[*j].num_categories()));
  }
  return out;
}

inline void require_valid(const Model& model) {
  const auto violations = validate_model(model);
  if (violations.empty()) return;
  std::string msg = "invalid model:";
  for (const auto& v : violations) msg += "\n  - " + v;
  throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Dummy priors for latent / zero-shot labels: the configured prior when one
// exists, else uniform.
// ---------------------------------------------------------------------------

inline CategoricalDist dummy_prior(const LabelSpec& spec, const Model& model) {
  if (!model.label_index(spec.name))
    throw ValidationError("dummy_prior: label '" + spec.name + "' is not part of the model");
  const auto it = model.priors.find(spec.name);
  if (it != model.priors.end()) return it->second;
  return CategoricalDist::uniform(spec.num_categories());
}

// Per-label potentials for one observation: calibrated predictions where
// present, dummy priors elsewhere. Resolution happens at query time so one
// dataset can be reused under different model priors.
inline std::vector<CategoricalDist> resolve_priors(
    const Model& model, const Observation& obs,
    const Calibrator& calibrator = identity_calibrator()) {
  std::vector<CategoricalDist> out;
  out.reserve(model.labels.size());
  for (const auto& spec : model.labels) {
    const auto it = obs.predictions.find(spec.name);
    if (it == obs.predictions.end()) {
      out.push_back(dummy_prior(spec, model));
      continue;
    }
    if (it->second.size() != spec.num_categories())
      throw ValidationError("observation '" + obs.id + "': prediction for '" + spec.name +
                            "' has length " + std::to_string(it->second.size()) + ", expected " +
                            std::to_string(spec.num_categories()));
    out.push_back(calibrate(it->second, calibrator));
  }
  return out;
}

inline std::vector<std::string> validate_observation(const Model& model, const Observation& obs) {
  std::vector<std::string> out;
  const std::string where = "observation '" + obs.id + "'";
  for (const auto& [name, dist] : obs.predictions) {
    const auto j = model.label_index(name);
    if (!j) {
      out.push_back(where + ": prediction for unknown label '" + name + "'");
      continue;
    }
    if (dist.size() != model.labels[*j].num_categories())
      out.push_back(where + ": prediction for '" + name + "' has length " +
                    std::to_string(dist.size()) + ", expected " +
                    std::to_string(model.labels[*j].num_categories()));
  }
  for (const auto& [name, category] : obs.truth) {
    const auto j = model.label_index(name);
    if (!j) {
      out.push_back(where + ": truth for unknown label '" + name + "'");
      continue;
    }
    if (!model.labels[*j].category_index(category))
      out.push_back(where + ": truth '" + category + "' is not a category of '" + name + "'");
  }
  return out;
}

// Truth map -> category indices; nullopt entries are unknown labels.
inline std::vector<std::optional<std::size_t>> truth_indices(const Model& model,
                                                             const Observation& obs) {
  std::vector<std::optional<std::size_t>> out(model.labels.size());
  for (const auto& [name, category] : obs.truth) {
    const auto j = model.label_index(name);
    if (!j) throw ValidationError("truth references unknown label '" + name + "'");
    const auto m = model.labels[*j].category_index(category);
    if (!m)
      throw ValidationError("truth '" + category + "' is not a category of '" + name + "'");
    out[*j] = *m;
  }
  return out;
}

}  // namespace prsl
