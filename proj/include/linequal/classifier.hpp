#pragma once

#include "linequal/error.hpp"
#include "linequal/labeled.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace linequal {

using Probs = std::array<double, kNumCategories>;

struct ClassDistribution {
  LineKey line;
  Probs probs{};
};

// ---- Splitting -----------------------------------------------------------

struct SplitRatios {
  double train = 0.7;
  double dev = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  std::vector<LabeledLine> train;
  std::vector<LabeledLine> dev;
  std::vector<LabeledLine> test;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

// Per category: dev and test get round(n * ratio) lines, train the rest.
// Categories with fewer than three lines go wholly to train (with a warning).
// Every line must carry a category.
DatasetSplit stratified_split(const std::vector<LabeledLine>& lines, SplitRatios ratios = {},
                              std::uint64_t seed = 42);

// ---- Features ------------------------------------------------------------

struct FeatureConfig {
  std::size_t dim = std::size_t{1} << 18;
  std::size_t min_n = 1;
  std::size_t max_n = 4;
};

// Sorted by index, no duplicate indices.
struct SparseVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  bool empty() const { return indices.empty(); }
  bool operator==(const SparseVector&) const = default;
};

// Hashed character (code point) n-grams, L2-normalized counts.
SparseVector featurize(std::string_view text, const FeatureConfig& config);

// ---- Model ---------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 5;
  std::size_t patience = 5;  // evaluations without dev-loss improvement
  double label_smoothing = 0.1;
  std::size_t eval_interval = 50;  // optimizer steps between dev evaluations
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Multinomial logistic regression over hashed n-gram features.
class BaselineModel {
public:
  BaselineModel() = default;
  explicit BaselineModel(FeatureConfig features);

  const FeatureConfig& features() const { return features_; }
  std::size_t feature_dim() const { return features_.dim; }
  const std::vector<std::string>& classes() const { return classes_; }

  double& weight(std::size_t feature, std::size_t cls) { return weights_[feature * kNumCategories + cls]; }
  double weight(std::size_t feature, std::size_t cls) const { return weights_[feature * kNumCategories + cls]; }
  double& bias(std::size_t cls) { return bias_[cls]; }
  double bias(std::size_t cls) const { return bias_[cls]; }

  Probs logits(const SparseVector& x) const;
  Probs predict(const SparseVector& x) const;
  bool finite() const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra_header) const;
  void save(const std::filesystem::path& path) const;
  static BaselineModel load(const std::filesystem::path& path);

private:
  FeatureConfig features_;
  std::vector<std::string> classes_;
  std::vector<double> weights_;
  Probs bias_{};
};

Probs softmax(const Probs& logits);

// (1 - eps) on the true class plus eps / K everywhere.
Probs smoothed_target(std::size_t true_class, double epsilon);

struct Example {
  SparseVector x;
  std::size_t label = 0;
};

// Gradient restricted to the features present in a batch.
struct SparseGradient {
  std::map<std::uint32_t, Probs> weights;
  Probs bias{};
};

// Mean label-smoothed cross-entropy over `batch`. When `grad` is non-null it
// receives the gradient of that mean.
double smoothed_cross_entropy(const BaselineModel& model, std::span<const Example> batch, double epsilon,
                              SparseGradient* grad = nullptr);

// Patience-based early stopping on a loss that should decrease.
class EarlyStopping {
public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true once `patience` consecutive observations failed to improve
  // on the best loss.
  bool observe(double loss);
  bool last_improved() const { return last_improved_; }
  std::size_t best_index() const { return best_index_; }
  double best_loss() const { return best_loss_; }

private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t best_index_ = 0;
  std::size_t stale_ = 0;
  double best_loss_ = 0;
  bool last_improved_ = false;
};

class TrainingError : public Error {
public:
  using Error::Error;
};

struct TrainHooks {
  // Lets a caller replace the measured dev loss of evaluation `index`.
  std::function<double(std::size_t index, double dev_loss)> dev_loss_override;
  std::function<void(std::size_t step, double train_loss, double dev_loss)> on_eval;
};

struct TrainResult {
  BaselineModel model;  // best-dev checkpoint
  std::vector<double> dev_losses;
  std::size_t best_eval = 0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  bool stopped_early = false;
};

TrainResult train_baseline(const DatasetSplit& split, const TrainConfig& config, const FeatureConfig& features = {},
                           const TrainHooks& hooks = {});

std::vector<Example> make_examples(const std::vector<LabeledLine>& lines, const FeatureConfig& features);

// Lowest index wins ties.
std::size_t argmax(const Probs& p);

ClassDistribution predict_distribution(const BaselineModel& model, std::string_view text);

// ---- Evaluation ----------------------------------------------------------

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> confusion;  // rows: true, columns: predicted
  std::vector<ClassMetrics> per_class;
  double micro_f1 = 0;
  double macro_f1 = 0;  // mean over classes with non-zero support
  double accuracy = 0;
  std::size_t total = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion, std::vector<std::string> classes);
EvalReport report_from_pairs(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                             std::vector<std::string> classes);

EvalReport evaluate(const BaselineModel& model, const std::vector<LabeledLine>& test);

// ---- External scores -----------------------------------------------------

class ScoreImportError : public Error {
public:
  using Error::Error;
};

// Reads {doc_id, line_index, segment_index, probs[9]} rows. Every key in
// `lines` must be present; rows summing within 1e-3 of one are renormalized.
std::map<LineKey, ClassDistribution> import_external_scores(const std::filesystem::path& path,
                                                            const std::vector<LineKey>& lines);

} // namespace linequal
