#include "linequal/calibration.hpp"

#include "linequal/io.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

json PlattFile::to_json() const { return {{"a", params.a}, {"b", params.b}, {"fitted_on", fitted_on}, {"n", n}}; }

PlattFile PlattFile::from_json(const json& j) {
  PlattFile f;
  f.params.a = j.at("a").get<double>();
  f.params.b = j.at("b").get<double>();
  if (!std::isfinite(f.params.a) || !std::isfinite(f.params.b)) throw CalibrationError("Platt parameters must be finite");
  f.fitted_on = j.value("fitted_on", std::string{});
  f.n = j.value("n", std::size_t{0});
  return f;
}

PlattFile PlattFile::load(const std::filesystem::path& path) {
  auto j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) throw CalibrationError("malformed Platt file " + path.string());
  return from_json(j);
}

void PlattFile::save(const std::filesystem::path& path) const { io::write_file_atomic(path, to_json().dump(2) + "\n"); }

double apply_platt(const PlattParams& params, double score) {
  const double f = params.a * score + params.b;
  double p = f >= 0 ? 1.0 / (1.0 + std::exp(-f)) : std::exp(f) / (1.0 + std::exp(f));
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::min(std::max(p, lo), hi);
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

struct Targets {
  double pos;
  double neg;
};

Targets smoothed_targets(std::span<const bool> is_clean) {
  double n_pos = 0;
  for (bool c : is_clean) n_pos += c ? 1 : 0;
  const double n_neg = static_cast<double>(is_clean.size()) - n_pos;
  return {(n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2)};
}

double objective(const PlattParams& prm, std::span<const double> s, std::span<const bool> y, const Targets& t) {
  double sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = prm.a * s[i] + prm.b;
    const double target = y[i] ? t.pos : t.neg;
    // -[t log p + (1 - t) log(1 - p)] with p = logistic(f)
    sum += (1 - target) * f + softplus(-f);
  }
  return sum / static_cast<double>(s.size());
}

} // namespace

double platt_objective(const PlattParams& params, std::span<const double> scores, std::span<const bool> is_clean) {
  return objective(params, scores, is_clean, smoothed_targets(is_clean));
}

PlattFit fit_platt(std::span<const double> scores, std::span<const bool> is_clean, const PlattOptions& options) {
  if (scores.size() != is_clean.size()) throw CalibrationError("scores and labels differ in length");
  if (scores.size() < 10) throw CalibrationError("Platt fitting needs at least 10 points");
  for (double s : scores)
    if (!std::isfinite(s)) throw CalibrationError("non-finite score");

  const auto targets = smoothed_targets(is_clean);
  const double n = static_cast<double>(scores.size());
  // Start from the prior log-odds, as Platt does.
  double n_pos = 0;
  for (bool c : is_clean) n_pos += c ? 1 : 0;
  PlattFit fit;
  fit.params = {0.0, std::log((n_pos + 1) / (n - n_pos + 1))};
  double value = objective(fit.params, scores, is_clean, targets);

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      const double p = apply_platt(fit.params, s);
      const double r = p - (is_clean[i] ? targets.pos : targets.neg);
      const double w = p * (1 - p);
      ga += r * s;
      gb += r;
      haa += w * s * s;
      hab += w * s;
      hbb += w;
    }
    ga /= n;
    gb /= n;
    fit.gradient_norm = std::hypot(ga, gb);
    fit.iterations = iter;
    if (fit.gradient_norm < options.gradient_tolerance) {
      fit.mean_log_loss = value;
      return fit;
    }
    constexpr double ridge = 1e-12;
    haa = haa / n + ridge;
    hbb = hbb / n + ridge;
    hab /= n;
    const double det = haa * hbb - hab * hab;
    const double da = -(hbb * ga - hab * gb) / det;
    const double db = -(-hab * ga + haa * gb) / det;
    const double slope = ga * da + gb * db;

    double step = 1.0;
    bool accepted = false;
    while (step >= 1e-10) {
      PlattParams trial{fit.params.a + step * da, fit.params.b + step * db};
      double v = objective(trial, scores, is_clean, targets);
      if (v <= value + 1e-4 * step * slope) {
        fit.params = trial;
        value = v;
        accepted = true;
        break;
      }
      step /= 2;
    }
    if (!accepted) {
      // No descent along the Newton direction: at the optimum up to rounding.
      if (fit.gradient_norm < 1e3 * options.gradient_tolerance) {
        fit.mean_log_loss = value;
        return fit;
      }
      throw CalibrationError("Platt line search failed at iteration " + std::to_string(iter) + " (a=" +
                             std::to_string(fit.params.a) + ", b=" + std::to_string(fit.params.b) +
                             ", |grad|=" + std::to_string(fit.gradient_norm) + ")");
    }
  }
  throw CalibrationError("Platt fit did not converge in " + std::to_string(options.max_iterations) +
                         " iterations (a=" + std::to_string(fit.params.a) + ", b=" + std::to_string(fit.params.b) +
                         ", |grad|=" + std::to_string(fit.gradient_norm) + ")");
}

} // namespace linequal
