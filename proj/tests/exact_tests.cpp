#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "prsl/exact.hpp"
#include "test_support.hpp"

using namespace prsl;

namespace {

double table_prob(const JointPosterior& post, const Model& model,
                  const std::map<std::string, std::string>& assignment) {
  std::vector<std::size_t> idx(model.num_labels());
  for (const auto& [name, cat] : assignment)
    idx[*model.label_index(name)] = *model.labels[*model.label_index(name)].category_index(cat);
  return post.prob_of(idx);
}

}  // namespace

TEST_CASE("warehouse joint posterior reproduces the published six rows") {
  const Model model = testing::warehouse_model();
  const Observation obs = testing::warehouse_observation();
  const JointPosterior post = joint_posterior(model, obs);

  REQUIRE(post.size() == 18);
  double sum = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) sum += post.prob(i);
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));

  const auto row = [&](const char* a, const char* b, const char* c) {
    return table_prob(post, model, {{"L1", a}, {"L2", b}, {"L3", c}});
  };
  CHECK_THAT(row("w", "s", "h"), Catch::Matchers::WithinAbs(0.0, 1e-4));
  CHECK_THAT(row("n", "s", "h"), Catch::Matchers::WithinAbs(0.0078, 1e-4));
  CHECK_THAT(row("o", "s", "h"), Catch::Matchers::WithinAbs(0.3517, 1e-4));
  CHECK_THAT(row("w", "g", "l"), Catch::Matchers::WithinAbs(0.0015, 1e-4));
  CHECK_THAT(row("n", "s", "c"), Catch::Matchers::WithinAbs(0.1688, 1e-4));
  CHECK_THAT(row("o", "s", "c"), Catch::Matchers::WithinAbs(0.2110, 1e-4));
}

TEST_CASE("joint posterior equals the brute-force weights on random models") {
  std::mt19937_64 rng(404);
  for (int i = 0; i < 40; ++i) {
    const Model model = testing::random_noisy_or_model(rng);
    const Observation obs = testing::random_observation(rng, model, 0.2);
    const auto priors = resolve_priors(model, obs);
    const JointPosterior post = joint_posterior(model, obs);

    double z = 0.0;
    std::vector<std::size_t> sizes;
    for (const auto& l : model.labels) sizes.push_back(l.num_categories());
    numeric::MixedRadix radix(sizes);
    std::vector<std::size_t> a(sizes.size(), 0);
    for (std::size_t s = 0; s < radix.total(); ++s) {
      z += testing::brute_force_weight(model, priors, a);
      radix.next(a);
    }
    std::fill(a.begin(), a.end(), 0);
    for (std::size_t s = 0; s < radix.total(); ++s) {
      const double expected = testing::brute_force_weight(model, priors, a) / z;
      REQUIRE_THAT(post.prob_of(a), Catch::Matchers::WithinAbs(expected, 1e-12));
      radix.next(a);
    }
    CHECK_THAT(post.log_norm(), Catch::Matchers::WithinAbs(std::log(z), 1e-9));
  }
}

TEST_CASE("zero rules or constant rules leave the priors untouched") {
  Model model = testing::warehouse_model();
  const Observation obs = testing::warehouse_observation();
  const auto priors = resolve_priors(model, obs);

  SECTION("no rules at all") {
    model.rules.clear();
    const JointPosterior post = joint_posterior(model, obs);
    std::vector<std::size_t> a{2, 1, 0};  // (o, s, h)
    CHECK_THAT(post.prob_of(a),
               Catch::Matchers::WithinAbs(priors[0][2] * priors[1][1] * priors[2][0], 1e-12));
    const auto marg = marginal_query_exact(model, obs);
    for (std::size_t j = 0; j < model.num_labels(); ++j)
      for (std::size_t m = 0; m < priors[j].size(); ++m)
        CHECK_THAT(marg.marginals.at(model.labels[j].name)[m],
                   Catch::Matchers::WithinAbs(priors[j][m], 1e-12));
  }

  SECTION("formula rules with p = 0.5 cancel in normalization") {
    for (auto& rule : model.rules) std::get<FormulaRule>(rule).p = 0.5;
    const auto marg = marginal_query_exact(model, obs);
    for (std::size_t j = 0; j < model.num_labels(); ++j)
      for (std::size_t m = 0; m < priors[j].size(); ++m)
        CHECK_THAT(marg.marginals.at(model.labels[j].name)[m],
                   Catch::Matchers::WithinAbs(priors[j][m], 1e-12));
  }
}

TEST_CASE("warehouse marginals are the row sums of the joint table") {
  const Model model = testing::warehouse_model();
  const Observation obs = testing::warehouse_observation();
  const auto result = marginal_query_exact(model, obs);

  // Frozen from the verified joint table: marginal(m) = sum of rows with
  // that category (e.g. L1=o collects (o,s,h), (o,s,c), (o,s,l)).
  const auto& l1 = result.marginals.at("L1");
  CHECK_THAT(l1[0], Catch::Matchers::WithinAbs(0.0036 / 0.4862, 1e-4));
  CHECK_THAT(l1[1], Catch::Matchers::WithinAbs(0.1406 / 0.4862, 1e-4));
  CHECK_THAT(l1[2], Catch::Matchers::WithinAbs(0.3420 / 0.4862, 1e-4));

  const auto& l2 = result.marginals.at("L2");
  CHECK_THAT(l2[0], Catch::Matchers::WithinAbs(0.0036 / 0.4862, 1e-4));
  CHECK_THAT(l2[1], Catch::Matchers::WithinAbs(0.4826 / 0.4862, 1e-4));

  const auto& l3 = result.marginals.at("L3");
  CHECK_THAT(l3[0], Catch::Matchers::WithinAbs(0.1766 / 0.4862, 1e-4));
  CHECK_THAT(l3[1], Catch::Matchers::WithinAbs(0.18576 / 0.4862, 1e-4));
  CHECK_THAT(l3[2], Catch::Matchers::WithinAbs(0.12384 / 0.4862, 1e-4));

  for (const auto& [name, dist] : result.marginals) {
    double sum = 0.0;
    for (std::size_t m = 0; m < dist.size(); ++m) sum += dist[m];
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("clamped marginals equal the renormalized restricted table") {
  const Model model = testing::warehouse_model();
  const Observation obs = testing::warehouse_observation();

  const EvidenceSpec ev = EvidenceSpec{}.with_clamp("L2", "g");
  const auto result = marginal_query_exact(model, obs, ev);

  // Restrict the full table to l2 = g and renormalize by hand.
  const JointPosterior full = joint_posterior(model, obs);
  std::vector<double> l1_mass(3, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto a = full.assignment_at(i);
    if (a[1] != 0) continue;  // keep g rows
    l1_mass[a[0]] += full.prob(i);
    z += full.prob(i);
  }
  const auto& l1 = result.marginals.at("L1");
  for (std::size_t m = 0; m < 3; ++m)
    CHECK_THAT(l1[m], Catch::Matchers::WithinAbs(l1_mass[m] / z, 1e-12));

  // The clamped label itself reports a point mass.
  CHECK(result.marginals.at("L2")[0] == Catch::Approx(1.0));
}

TEST_CASE("warehouse MPE is (o, s, h) with the published probability") {
  const Model model = testing::warehouse_model();
  const Observation obs = testing::warehouse_observation();
  const auto result = mpe_query_exact(model, obs);

  REQUIRE(result.mpe.has_value());
  CHECK(result.mpe->assignment.at("L1") == "o");
  CHECK(result.mpe->assignment.at("L2") == "s");
  CHECK(result.mpe->assignment.at("L3") == "h");
  CHECK_THAT(result.mpe->probability, Catch::Matchers::WithinAbs(0.3517, 1e-4));
}

TEST_CASE("MPE on a rule-free model is the per-label prior argmax") {
  Model model = testing::warehouse_model();
  model.rules.clear();
  const Observation obs = testing::warehouse_observation();
  const auto result = mpe_query_exact(model, obs);
  CHECK(result.mpe->assignment.at("L1") == "o");
  CHECK(result.mpe->assignment.at("L2") == "s");
  CHECK(result.mpe->assignment.at("L3") == "h");
}

TEST_CASE("MPE ties break to the lexicographically smallest assignment") {
  Model model;
  model.labels = {{"A", {"a1", "a2"}}, {"B", {"b1", "b2", "b3"}}};
  Observation obs;
  obs.id = "uniform";
  const auto result = mpe_query_exact(model, obs);
  CHECK(result.mpe->assignment.at("A") == "a1");
  CHECK(result.mpe->assignment.at("B") == "b1");
}

TEST_CASE("joint log-likelihood: exact values, impossibility, partial truth") {
  const Model model = testing::warehouse_model();
  const Observation obs = testing::warehouse_observation();

  const LogLik full = joint_loglik_exact(model, obs, {{"L1", "o"}, {"L2", "s"}, {"L3", "h"}});
  REQUIRE_FALSE(full.impossible);
  CHECK_THAT(full.value, Catch::Matchers::WithinAbs(std::log(0.3517), 3e-4));

  const LogLik impossible = joint_loglik_exact(model, obs,
                                               {{"L1", "w"}, {"L2", "s"}, {"L3", "h"}});
  CHECK(impossible.impossible);
  CHECK(impossible.value_or_neg_inf() == numeric::neg_inf);

  // Partial truth sums all rows with l2 = s.
  const LogLik partial = joint_loglik_exact(model, obs, {{"L2", "s"}});
  const JointPosterior post = joint_posterior(model, obs);
  double s_mass = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i)
    if (post.assignment_at(i)[1] == 1) s_mass += post.prob(i);
  CHECK_THAT(partial.value, Catch::Matchers::WithinAbs(std::log(s_mass), 1e-12));

  // Empty truth is the probability-one statement.
  const LogLik empty = joint_loglik_exact(model, obs, {});
  CHECK(empty.value == 0.0);
  CHECK_FALSE(empty.impossible);
}

TEST_CASE("contradictory evidence raises instead of returning a silent uniform") {
  Model model;
  model.labels = {{"A", {"a1", "a2"}}};
  model.rules.push_back(FormulaRule{parse_formula("a1 & !a1", model.labels), 1.0, ""});
  Observation obs;
  obs.id = "doomed";
  CHECK_THROWS_AS(joint_posterior(model, obs), ContradictionError);
}

TEST_CASE("state-space guard reports infeasibility") {
  Model model;
  for (int j = 0; j < 21; ++j)
    model.labels.push_back({"L" + std::to_string(j + 1), {"a", "b"}});
  Observation obs;
  obs.id = "big";
  CHECK_THROWS_AS(joint_posterior(model, obs), InfeasibleError);

  // Clamping enough labels brings it back under the guard.
  EvidenceSpec ev;
  for (int j = 0; j < 10; ++j) ev.clamped_labels["L" + std::to_string(j + 1)] = "a";
  CHECK_NOTHROW(joint_posterior(model, obs, ev));
}

TEST_CASE("replacing a crisp disjunction rule by its noisy-or form leaves the posterior unchanged") {
  Model crisp_base = testing::warehouse_model();
  std::get<FormulaRule>(crisp_base.rules[0]).p = 1.0;  // make rule 1 a crisp disjunction
  const Observation obs = testing::warehouse_observation();

  Model swapped = crisp_base;
  const Formula f = parse_formula("(h & s) -> o", crisp_base.labels);
  swapped.rules[0] = noisy_or_from_disjunction(f, crisp_base.labels);

  const JointPosterior a = joint_posterior(crisp_base, obs);
  const JointPosterior b = joint_posterior(swapped, obs);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK_THAT(a.prob(i), Catch::Matchers::WithinAbs(b.prob(i), 1e-12));
}

TEST_CASE("rule_true_prob_exact is consistent with evidence-ratio normalizers") {
  std::mt19937_64 rng(777);
  for (int i = 0; i < 20; ++i) {
    const Model model = testing::random_noisy_or_model(rng);
    const Observation obs = testing::random_observation(rng, model);
    for (std::size_t k = 0; k < model.num_rules(); ++k) {
      const double direct = rule_true_prob_exact(model, obs, k);
      const double z1 =
          joint_posterior(model, obs, EvidenceSpec{}.with_rule(k, EvidenceSpec::RuleState::True))
              .log_norm();
      const double z0 =
          joint_posterior(model, obs, EvidenceSpec{}.with_rule(k, EvidenceSpec::RuleState::False))
              .log_norm();
      const double expected = 1.0 / (1.0 + std::exp(z0 - z1));
      REQUIRE_THAT(direct, Catch::Matchers::WithinAbs(expected, 1e-10));
    }
  }
}
