#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "prsl/core.hpp"
#include "prsl/formula.hpp"
#include "prsl/numeric.hpp"

namespace prsl {

// ---------------------------------------------------------------------------
// Multicategorical noisy-or rule: P(R=1|l) = 1 - prod_j q[j][l_j].
//
// q maps label name -> one inhibition probability per category. Labels
// absent from the map contribute factor 1 (disconnected); the rule's scope
// is the set of labels with at least one entry < 1. Entries are in (0, 1];
// only the crisp disjunction constructor may emit exact zeros, marked by the
// `crisp` flag so validation does not reject them.
// ---------------------------------------------------------------------------

struct NoisyOrRule {
  std::map<std::string, std::vector<double>> q;
  bool crisp = false;

  std::vector<std::string> scope() const {
    std::vector<std::string> out;
    for (const auto& [label, row] : q)
      for (double v : row)
        if (v < 1.0) {
          out.push_back(label);
          break;
        }
    return out;
  }
};

inline double rule_prob_noisy_or(const NoisyOrRule& rule, std::span<const std::size_t> assignment,
                                 std::span<const LabelSpec> labels) {
  double inhibit = 1.0;
  for (const auto& [name, row] : rule.q) {
    std::size_t j = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i].name == name) { j = i; break; }
    if (j == labels.size())
      throw ValidationError("noisy-or rule references unknown label '" + name + "'");
    if (j >= assignment.size())
      throw ValidationError("assignment misses label '" + name + "'");
    inhibit *= row.at(assignment[j]);
  }
  return 1.0 - inhibit;
}

inline double rule_prob_noisy_or(const NoisyOrRule& rule,
                                 const std::map<std::string, std::string>& assignment,
                                 std::span<const LabelSpec> labels) {
  std::vector<std::size_t> idx(labels.size(), 0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto it = assignment.find(labels[j].name);
    if (it == assignment.end()) continue;  // only scope labels are required
    const auto m = labels[j].category_index(it->second);
    if (!m)
      throw ValidationError("'" + it->second + "' is not a category of label '" +
                            labels[j].name + "'");
    idx[j] = *m;
  }
  for (const auto& [name, row] : rule.q) {
    (void)row;
    if (!assignment.contains(name))
      throw ValidationError("assignment misses rule scope label '" + name + "'");
  }
  return rule_prob_noisy_or(rule, idx, labels);
}

// ---------------------------------------------------------------------------
// Crisp equivalence: a disjunction of literals becomes a noisy-or rule with
// q = 0 on every (label, category) satisfying some literal and q = 1
// elsewhere, so the CPT equals the indicator of the formula. Implications
// are eliminated and negations pushed down first; several literals on the
// same label merge by union of their satisfying category sets (exact under
// the product form, tautologies like `w | !w` included).
// ---------------------------------------------------------------------------

namespace noisy_or_detail {

// Negation normal form restricted to what a disjunction check needs.
inline Formula to_nnf(const Formula& f, bool negated) {
  using K = Formula::Kind;
  switch (f.kind) {
    case K::Atom: {
      Formula a = Formula::atom(f.label, f.category);
      return negated ? Formula::negate(std::move(a)) : a;
    }
    case K::Not:
      return to_nnf(f.children[0], !negated);
    case K::And:
    case K::Or: {
      const K kind = (f.kind == K::And) == !negated ? K::And : K::Or;
      return Formula::make(kind, to_nnf(f.children[0], negated), to_nnf(f.children[1], negated));
    }
    case K::Implies:
      // a -> b  ==  !a | b
      return negated ? Formula::make(K::And, to_nnf(f.children[0], false),
                                     to_nnf(f.children[1], true))
                     : Formula::make(K::Or, to_nnf(f.children[0], true),
                                     to_nnf(f.children[1], false));
    case K::Iff: {
      // a <-> b  ==  (a & b) | (!a & !b); never a plain disjunction of
      // literals, so the caller's shape check will reject it.
      Formula both = Formula::make(K::And, to_nnf(f.children[0], negated),
                                   to_nnf(f.children[1], false));
      Formula neither = Formula::make(K::And, to_nnf(f.children[0], !negated),
                                      to_nnf(f.children[1], true));
      return Formula::make(K::Or, std::move(both), std::move(neither));
    }
  }
  throw NumericError("unreachable formula kind");
}

inline void collect_literals(const Formula& f, std::vector<std::pair<Formula, bool>>& out) {
  using K = Formula::Kind;
  if (f.kind == K::Or) {
    collect_literals(f.children[0], out);
    collect_literals(f.children[1], out);
    return;
  }
  if (f.kind == K::Atom) {
    out.emplace_back(f, false);
    return;
  }
  if (f.kind == K::Not && f.children[0].kind == K::Atom) {
    out.emplace_back(f.children[0], true);
    return;
  }
  throw ValidationError("formula is not a disjunction of literals");
}

}  // namespace noisy_or_detail

inline NoisyOrRule noisy_or_from_disjunction(const Formula& f, std::span<const LabelSpec> labels) {
  std::vector<std::pair<Formula, bool>> literals;
  noisy_or_detail::collect_literals(noisy_or_detail::to_nnf(f, false), literals);

  NoisyOrRule rule;
  rule.crisp = true;
  for (const auto& [atom, negated] : literals) {
    const LabelSpec& spec = labels[atom.label];
    auto [it, inserted] =
        rule.q.try_emplace(spec.name, std::vector<double>(spec.num_categories(), 1.0));
    auto& row = it->second;
    for (std::size_t m = 0; m < row.size(); ++m) {
      const bool satisfies = negated ? (m != atom.category) : (m == atom.category);
      if (satisfies) row[m] = 0.0;
    }
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Test oracle: evaluate the rule CPT through the auxiliary-indicator
// construction instead of the product form. Each scope label L_j is split
// into binary indicators L_{jm} with P(L_{jm}=1|L_j=a) = 1 iff a = m, the
// indicators feed a classical binary noisy-or, and the indicator layer is
// marginalized out per label (valid because both the indicator CPTs and the
// binary gate factorize over labels).
// ---------------------------------------------------------------------------

struct NoisyOrTable {
  std::vector<std::string> scope;         // label names, in model order
  std::vector<std::size_t> sizes;         // categories per scope label
  std::vector<double> prob_true;          // P(R=1 | scope assignment), mixed radix
};

inline NoisyOrTable decompose_binary(const NoisyOrRule& rule, std::span<const LabelSpec> labels,
                                     std::size_t max_states = 1000000) {
  NoisyOrTable table;
  std::vector<const std::vector<double>*> rows;
  for (const auto& spec : labels) {
    const auto it = rule.q.find(spec.name);
    if (it == rule.q.end()) continue;
    if (it->second.size() != spec.num_categories())
      throw ValidationError("noisy-or q row for '" + spec.name + "' has wrong length");
    table.scope.push_back(spec.name);
    table.sizes.push_back(spec.num_categories());
    rows.push_back(&it->second);
  }

  numeric::MixedRadix radix(table.sizes);
  if (radix.total() > max_states)
    throw InfeasibleError("noisy-or decomposition scope exceeds " + std::to_string(max_states) +
                          " assignments");

  table.prob_true.resize(radix.total());
  std::vector<std::size_t> assignment(table.sizes.size(), 0);
  for (std::size_t idx = 0; idx < radix.total(); ++idx) {
    // P(R=0 | assignment) = prod_j sum over indicator blocks b in {0,1}^M of
    // P(block | l_j) * prod_m q_{jm}^{b_m}; only the XOR-consistent block per
    // label survives, but the sum is carried out in full.
    double prob_off = 1.0;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto& q_row = *rows[j];
      const std::size_t m_count = q_row.size();
      double label_sum = 0.0;
      for (std::size_t block = 0; block < (std::size_t{1} << m_count); ++block) {
        double term = 1.0;
        for (std::size_t m = 0; m < m_count && term != 0.0; ++m) {
          const bool indicator_on = (block >> m) & 1u;
          const double p_indicator = (indicator_on == (assignment[j] == m)) ? 1.0 : 0.0;
          term *= p_indicator;
          if (indicator_on) term *= q_row[m];
        }
        label_sum += term;
      }
      prob_off *= label_sum;
    }
    table.prob_true[idx] = 1.0 - prob_off;
    radix.next(assignment);
  }
  return table;
}

}  // namespace prsl
