#include "linequal/calibration.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>

using namespace linequal;

namespace {

struct Sample {
  std::vector<double> scores;
  std::unique_ptr<bool[]> flags;
  std::vector<bool> labels;
  std::size_t n = 0;

  std::span<const bool> span() const { return {flags.get(), n}; }
};

Sample logistic_sample(std::size_t n, double a, double b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Sample s;
  s.n = n;
  s.flags.reset(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) {
    double x = u(rng);
    bool y = u(rng) < 1 / (1 + std::exp(-(a * x + b)));
    s.scores.push_back(x);
    s.flags[i] = y;
    s.labels.push_back(y);
  }
  return s;
}

} // namespace

TEST(ApplyPlatt, DirectEvaluation) {
  EXPECT_NEAR(apply_platt({4, -2}, 1.0), 1 / (1 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(std::round(apply_platt({4, -2}, 1.0) * 1e4) / 1e4, 0.8808, 1e-12);
  EXPECT_EQ(apply_platt({1, 0}, 0.0), 0.5);
}

TEST(ApplyPlatt, StrictlyInsideUnitInterval) {
  for (double f : {-1e6, -800.0, -40.0, 40.0, 800.0, 1e6}) {
    double p = apply_platt({1, 0}, f);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(ApplyPlatt, MonotoneForPositiveSlope) {
  double prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    double p = apply_platt({3, -1.5}, i / 1000.0);
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(FitPlatt, AgreesWithIndependentSearch) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto s = logistic_sample(400, 2.5, -1.0, seed);
    auto fit = fit_platt(s.scores, s.span());
    auto [a, b] = oracle::platt_search(s.scores, s.labels);
    EXPECT_NEAR(fit.params.a, a, 1e-4);
    EXPECT_NEAR(fit.params.b, b, 1e-4);
    EXPECT_LE(oracle::platt_loss(fit.params.a, fit.params.b, s.scores, s.labels),
              oracle::platt_loss(a, b, s.scores, s.labels) + 1e-12);
    EXPECT_NEAR(platt_objective(fit.params, s.scores, s.span()),
                oracle::platt_loss(fit.params.a, fit.params.b, s.scores, s.labels), 1e-12);
    EXPECT_LT(fit.gradient_norm, 1e-8);
  }
}

TEST(FitPlatt, RecoversGeneratingParameters) {
  auto s = logistic_sample(10000, 3.0, -1.5, 42);
  auto fit = fit_platt(s.scores, s.span());
  EXPECT_NEAR(fit.params.a, 3.0, 0.15);
  EXPECT_NEAR(fit.params.b, -1.5, 0.15);
}

TEST(FitPlatt, UninformativeScoresGiveFlatSlope) {
  auto s = logistic_sample(10000, 0.0, 0.4, 5);
  auto fit = fit_platt(s.scores, s.span());
  EXPECT_LT(std::abs(fit.params.a), 0.1);
}

TEST(FitPlatt, SeparableDataStaysFinite) {
  Sample s;
  s.n = 20;
  s.flags.reset(new bool[20]);
  for (std::size_t i = 0; i < 20; ++i) {
    s.scores.push_back(i < 10 ? 0.1 : 0.9);
    s.flags[i] = i >= 10;
  }
  auto fit = fit_platt(s.scores, s.span());
  EXPECT_TRUE(std::isfinite(fit.params.a));
  EXPECT_GT(fit.params.a, 0);
}

TEST(FitPlatt, Errors) {
  std::vector<double> few(5, 0.5);
  bool flags[5] = {true, false, true, false, true};
  EXPECT_THROW(fit_platt(few, std::span<const bool>(flags, 5)), CalibrationError);
  EXPECT_THROW(fit_platt(few, std::span<const bool>(flags, 4)), CalibrationError);
}

TEST(PlattFile, RoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "linequal_platt_test.json";
  PlattFile f{{2.5, -0.75}, "abc123", 77};
  f.save(path);
  auto back = PlattFile::load(path);
  EXPECT_EQ(back.params.a, 2.5);
  EXPECT_EQ(back.params.b, -0.75);
  EXPECT_EQ(back.fitted_on, "abc123");
  EXPECT_EQ(back.n, 77u);
}
