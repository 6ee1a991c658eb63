#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace prsl {

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes: validation/parse -> 2,
// infeasible -> 3, numeric/contradiction -> 4.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class ContradictionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Label specification: a named categorical variable with >= 2 categories.
// ---------------------------------------------------------------------------

struct LabelSpec {
  std::string name;
  std::vector<std::string> categories;

  std::size_t num_categories() const { return categories.size(); }

  std::optional<std::size_t> category_index(const std::string& category) const {
    for (std::size_t m = 0; m < categories.size(); ++m)
      if (categories[m] == category) return m;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Probability vector over one label's categories.
//
// Inputs whose sum is within 1e-6 of 1 are renormalized silently; anything
// further off is rejected so corrupt files do not slip through. After
// construction the sum is within 1e-9 of 1.
// ---------------------------------------------------------------------------

class CategoricalDist {
 public:
  CategoricalDist() = default;

  explicit CategoricalDist(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw ValidationError("distribution must not be empty");
    double sum = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0)
        throw ValidationError("distribution entries must be finite and >= 0");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
      throw ValidationError("distribution sums to " + std::to_string(sum) +
                            ", outside renormalization tolerance 1e-6");
    for (double& p : probs_) p /= sum;
  }

  static CategoricalDist uniform(std::size_t m) {
    return CategoricalDist(std::vector<double>(m, 1.0 / static_cast<double>(m)));
  }

  static CategoricalDist point_mass(std::size_t m, std::size_t at) {
    std::vector<double> v(m, 0.0);
    v.at(at) = 1.0;
    return CategoricalDist(std::move(v));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

  bool operator==(const CategoricalDist&) const = default;

 private:
  std::vector<double> probs_;
};

// ---------------------------------------------------------------------------
// Calibration hook d_j: a per-label transform of raw classifier outputs.
// ---------------------------------------------------------------------------

using Calibrator = std::function<CategoricalDist(const CategoricalDist&)>;

inline Calibrator identity_calibrator() {
  return [](const CategoricalDist& d) { return d; };
}

// Power calibrator: probs^(1/T), renormalized. T = 1 is the identity,
// T > 1 flattens, T < 1 sharpens.
inline Calibrator temperature_calibrator(double temperature) {
  if (!(temperature > 0.0)) throw CalibrationError("temperature must be positive");
  return [temperature](const CategoricalDist& d) {
    std::vector<double> v(d.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      v[i] = std::pow(d[i], 1.0 / temperature);
      sum += v[i];
    }
    if (!(sum > 0.0)) throw CalibrationError("temperature calibration collapsed to zero");
    for (double& p : v) p /= sum;
    return CategoricalDist(std::move(v));
  };
}

inline CategoricalDist calibrate(const CategoricalDist& raw, const Calibrator& calibrator) {
  CategoricalDist out = calibrator(raw);
  if (out.size() != raw.size())
    throw CalibrationError("calibrator changed the number of categories");
  return out;  // CategoricalDist construction already enforced normalization
}

// ---------------------------------------------------------------------------
// One classifier observation: per-label probability vectors plus optional
// (possibly partial) ground truth. Labels absent from `predictions` fall
// back to the model's dummy prior at query time.
// ---------------------------------------------------------------------------

struct Observation {
  std::string id;
  std::map<std::string, CategoricalDist> predictions;
  std::map<std::string, std::string> truth;  // label -> category name, may be partial

  bool has_complete_truth(std::size_t num_labels) const { return truth.size() == num_labels; }
};

}  // namespace prsl
