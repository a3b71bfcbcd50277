#pragma once

#include "linequal/classifier.hpp"
#include "linequal/error.hpp"

#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

// Maps a raw Clean score s to logistic(a * s + b).
struct PlattParams {
  double a = 1.0;
  double b = 0.0;
};

struct PlattFile {
  PlattParams params;
  std::string fitted_on;  // dataset fingerprint
  std::size_t n = 0;

  nlohmann::json to_json() const;
  static PlattFile from_json(const nlohmann::json& j);
  static PlattFile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// Probability mass on Clean.
inline double clean_probability(const ClassDistribution& dist) { return dist.probs[0]; }

// Strictly inside (0, 1).
double apply_platt(const PlattParams& params, double score);

class CalibrationError : public Error {
public:
  using Error::Error;
};

struct PlattFit {
  PlattParams params;
  std::size_t iterations = 0;
  double gradient_norm = 0;  // of the mean negative log-likelihood
  double mean_log_loss = 0;
};

struct PlattOptions {
  double gradient_tolerance = 1e-8;
  std::size_t max_iterations = 100;
};

// Maximum-likelihood fit against Platt's smoothed targets
// t+ = (N+ + 1) / (N+ + 2) and t- = 1 / (N- + 2), by Newton's method with a
// backtracking line search. Needs at least 10 points.
PlattFit fit_platt(std::span<const double> scores, std::span<const bool> is_clean, const PlattOptions& options = {});

// Mean negative log-likelihood of the smoothed targets; exposed for
// independent checks of the optimum.
double platt_objective(const PlattParams& params, std::span<const double> scores, std::span<const bool> is_clean);

} // namespace linequal
