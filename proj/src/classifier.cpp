#include "linequal/classifier.hpp"

#include "linequal/io.hpp"
#include "linequal/labeler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace linequal {

using nlohmann::json;

// ---- Splitting -----------------------------------------------------------

DatasetSplit stratified_split(const std::vector<LabeledLine>& lines, SplitRatios ratios, std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.dev + ratios.test - 1.0) > 1e-9 || ratios.train < 0 || ratios.dev < 0 ||
      ratios.test < 0)
    throw Error("split ratios must be non-negative and sum to 1");

  std::array<std::vector<std::size_t>, kNumCategories> by_class;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto c = category_index(lines[i].category);
    if (!c) throw Error("line " + to_string(lines[i].line.key()) + " has no valid category");
    by_class[*c].push_back(i);
  }

  DatasetSplit split;
  split.seed = seed;
  Shuffler rng(seed);
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    if (n < 3) {
      split.warnings.push_back("category \"" + std::string(kCategories[c]) + "\" has " + std::to_string(n) +
                               " line(s); placed wholly in train");
      for (auto i : idx) split.train.push_back(lines[i]);
      continue;
    }
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
    auto n_dev = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.dev));
    n_test = std::min(n_test, n);
    n_dev = std::min(n_dev, n - n_test);
    std::size_t k = 0;
    for (; k < n_test; ++k) split.test.push_back(lines[idx[k]]);
    for (; k < n_test + n_dev; ++k) split.dev.push_back(lines[idx[k]]);
    for (; k < n; ++k) split.train.push_back(lines[idx[k]]);
  }
  rng.shuffle(split.train);
  rng.shuffle(split.dev);
  rng.shuffle(split.test);
  return split;
}

// ---- Features ------------------------------------------------------------

SparseVector featurize(std::string_view text, const FeatureConfig& config) {
  SparseVector out;
  if (text.empty() || config.dim == 0 || config.min_n == 0 || config.max_n < config.min_n) return out;

  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < text.size(); ++i)
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80 || i == 0) starts.push_back(i);
  starts.push_back(text.size());
  const std::size_t cps = starts.size() - 1;

  std::unordered_map<std::uint32_t, double> counts;
  for (std::size_t n = config.min_n; n <= config.max_n; ++n) {
    for (std::size_t i = 0; i + n <= cps; ++i) {
      auto gram = text.substr(starts[i], starts[i + n] - starts[i]);
      auto index = static_cast<std::uint32_t>(io::fnv1a(gram) % config.dim);
      counts[index] += 1.0;
    }
  }
  std::vector<std::pair<std::uint32_t, double>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end());
  double norm = 0;
  for (const auto& e : entries) norm += e.second * e.second;
  norm = std::sqrt(norm);
  for (const auto& [index, count] : entries) {
    out.indices.push_back(index);
    out.values.push_back(count / norm);
  }
  return out;
}

// ---- Model ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw Error("learning_rate must be positive");
  if (batch_size == 0 || max_epochs == 0 || patience == 0 || eval_interval == 0)
    throw Error("batch_size, max_epochs, patience and eval_interval must be positive");
  if (!(label_smoothing >= 0 && label_smoothing < 1)) throw Error("label_smoothing must be in [0, 1)");
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"batch_size", batch_size},         {"max_epochs", max_epochs},
          {"patience", patience},           {"label_smoothing", label_smoothing}, {"eval_interval", eval_interval},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

BaselineModel::BaselineModel(FeatureConfig features)
    : features_(features), weights_(features.dim * kNumCategories, 0.0) {
  for (auto name : kCategories) classes_.emplace_back(name);
}

Probs BaselineModel::logits(const SparseVector& x) const {
  Probs z = bias_;
  for (std::size_t k = 0; k < x.indices.size(); ++k) {
    const double* row = &weights_[static_cast<std::size_t>(x.indices[k]) * kNumCategories];
    const double v = x.values[k];
    for (std::size_t c = 0; c < kNumCategories; ++c) z[c] += row[c] * v;
  }
  return z;
}

Probs BaselineModel::predict(const SparseVector& x) const { return softmax(logits(x)); }

bool BaselineModel::finite() const {
  return std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); }) &&
         std::all_of(bias_.begin(), bias_.end(), [](double b) { return std::isfinite(b); });
}

namespace {
constexpr std::string_view kModelMagic = "LQM1\n";
}

void BaselineModel::save(const std::filesystem::path& path) const { save(path, json::object()); }

// Layout: "LQM1\n", one line of JSON header, then feature_dim * 9 weights
// (feature-major) and 9 biases as little-endian float64.
void BaselineModel::save(const std::filesystem::path& path, const json& extra_header) const {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  json header = {{"format", "linequal-baseline"},
                 {"version", 1},
                 {"feature_dim", features_.dim},
                 {"ngram_min", features_.min_n},
                 {"ngram_max", features_.max_n},
                 {"classes", classes_}};
  for (const auto& [k, v] : extra_header.items()) header[k] = v;
  std::string buf(kModelMagic);
  buf += header.dump() + "\n";
  auto bytes = [&](const double* p, std::size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n * sizeof(double));
  };
  bytes(weights_.data(), weights_.size());
  bytes(bias_.data(), bias_.size());
  io::write_file_atomic(path, buf);
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model " + path.string());
  std::string magic(kModelMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (magic != kModelMagic) throw Error(path.string() + " is not a linequal model file");
  std::string header_line;
  std::getline(in, header_line);
  auto header = json::parse(header_line, nullptr, false);
  if (header.is_discarded() || header.value("version", 0) != 1)
    throw Error("unsupported model header in " + path.string());

  FeatureConfig fc;
  fc.dim = header.at("feature_dim").get<std::size_t>();
  fc.min_n = header.at("ngram_min").get<std::size_t>();
  fc.max_n = header.at("ngram_max").get<std::size_t>();
  BaselineModel m(fc);
  auto classes = header.at("classes").get<std::vector<std::string>>();
  if (classes != m.classes_) throw Error("model classes do not match the nine categories");
  in.read(reinterpret_cast<char*>(m.weights_.data()), static_cast<std::streamsize>(m.weights_.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(m.bias_.data()), static_cast<std::streamsize>(m.bias_.size() * sizeof(double)));
  if (!in) throw Error("truncated model file " + path.string());
  return m;
}

Probs softmax(const Probs& z) {
  double mx = *std::max_element(z.begin(), z.end());
  Probs p;
  double sum = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) sum += p[c] = std::exp(z[c] - mx);
  for (auto& v : p) v /= sum;
  return p;
}

Probs smoothed_target(std::size_t true_class, double epsilon) {
  Probs t;
  t.fill(epsilon / static_cast<double>(kNumCategories));
  t[true_class] += 1.0 - epsilon;
  return t;
}

double smoothed_cross_entropy(const BaselineModel& model, std::span<const Example> batch, double epsilon,
                              SparseGradient* grad) {
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  if (grad) *grad = SparseGradient{};
  double loss = 0;
  for (const auto& ex : batch) {
    auto z = model.logits(ex.x);
    double mx = *std::max_element(z.begin(), z.end());
    double lse = 0;
    for (double v : z) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    auto t = smoothed_target(ex.label, epsilon);
    for (std::size_t c = 0; c < kNumCategories; ++c) loss -= t[c] * (z[c] - lse);
    if (!grad) continue;
    Probs delta;
    for (std::size_t c = 0; c < kNumCategories; ++c) delta[c] = (std::exp(z[c] - lse) - t[c]) * scale;
    for (std::size_t c = 0; c < kNumCategories; ++c) grad->bias[c] += delta[c];
    for (std::size_t k = 0; k < ex.x.indices.size(); ++k) {
      auto& row = grad->weights[ex.x.indices[k]];
      for (std::size_t c = 0; c < kNumCategories; ++c) row[c] += delta[c] * ex.x.values[k];
    }
  }
  return loss * scale;
}

bool EarlyStopping::observe(double loss) {
  const std::size_t index = seen_++;
  if (index == 0 || loss < best_loss_) {
    best_loss_ = loss;
    best_index_ = index;
    stale_ = 0;
    last_improved_ = true;
    return false;
  }
  last_improved_ = false;
  return ++stale_ >= patience_;
}

std::vector<Example> make_examples(const std::vector<LabeledLine>& lines, const FeatureConfig& features) {
  std::vector<Example> out;
  out.reserve(lines.size());
  for (const auto& l : lines) {
    auto c = category_index(l.category);
    if (!c) throw Error("line " + to_string(l.line.key()) + " has no valid category");
    out.push_back({featurize(l.line.text, features), *c});
  }
  return out;
}

TrainResult train_baseline(const DatasetSplit& split, const TrainConfig& config, const FeatureConfig& features,
                           const TrainHooks& hooks) {
  config.validate();
  if (split.train.empty()) throw Error("training split is empty");
  if (split.dev.empty()) throw Error("dev split is empty; early stopping needs dev data");

  const auto train = make_examples(split.train, features);
  const auto dev = make_examples(split.dev, features);

  TrainResult result{BaselineModel(features), {}, 0, 0, 0, false};
  BaselineModel model(features);
  EarlyStopping stopper(config.patience);
  Shuffler rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  double last_train_loss = 0;
  bool evaluated_last_step = false;

  auto evaluate_dev = [&](std::size_t step) {
    double loss = smoothed_cross_entropy(model, dev, config.label_smoothing);
    const std::size_t index = result.dev_losses.size();
    if (hooks.dev_loss_override) loss = hooks.dev_loss_override(index, loss);
    if (!std::isfinite(loss))
      throw TrainingError("non-finite dev loss at step " + std::to_string(step) + " (eval " + std::to_string(index) + ")");
    result.dev_losses.push_back(loss);
    if (hooks.on_eval) hooks.on_eval(step, last_train_loss, loss);
    bool stop = stopper.observe(loss);
    if (stopper.last_improved()) {
      result.model = model;
      result.best_eval = index;
      result.best_step = step;
    }
    return stop;
  };

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i)
        batch.push_back(train[order[i]]);
      SparseGradient grad;
      last_train_loss = smoothed_cross_entropy(model, batch, config.label_smoothing, &grad);
      if (!std::isfinite(last_train_loss))
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step) + "; try a smaller learning rate (current " +
                            std::to_string(config.learning_rate) + ")");
      for (const auto& [feature, row] : grad.weights)
        for (std::size_t c = 0; c < kNumCategories; ++c) model.weight(feature, c) -= config.learning_rate * row[c];
      for (std::size_t c = 0; c < kNumCategories; ++c) model.bias(c) -= config.learning_rate * grad.bias[c];
      ++step;
      evaluated_last_step = false;
      if (step % config.eval_interval == 0) {
        evaluated_last_step = true;
        if (evaluate_dev(step)) {
          result.stopped_early = true;
          result.steps = step;
          return result;
        }
      }
    }
  }
  if (!evaluated_last_step) evaluate_dev(step);
  result.steps = step;
  return result;
}

std::size_t argmax(const Probs& p) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < p.size(); ++c)
    if (p[c] > p[best]) best = c;
  return best;
}

ClassDistribution predict_distribution(const BaselineModel& model, std::string_view text) {
  return {{}, model.predict(featurize(text, model.features()))};
}

// ---- Evaluation ----------------------------------------------------------

EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion, std::vector<std::string> classes) {
  const std::size_t k = confusion.size();
  for (const auto& row : confusion)
    if (row.size() != k) throw Error("confusion matrix must be square");
  if (classes.size() != k) throw Error("class names do not match confusion matrix size");

  EvalReport r;
  r.classes = std::move(classes);
  r.confusion = std::move(confusion);
  r.per_class.resize(k);
  std::size_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
  double f1_sum = 0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = r.confusion[c][c], row = 0, col = 0;
    for (std::size_t o = 0; o < k; ++o) {
      row += r.confusion[c][o];
      col += r.confusion[o][c];
    }
    auto& m = r.per_class[c];
    m.support = row;
    m.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    m.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    tp_sum += tp;
    fp_sum += col - tp;
    fn_sum += row - tp;
    r.total += row;
    if (row > 0) {
      f1_sum += m.f1;
      ++supported;
    }
  }
  double micro_p = tp_sum + fp_sum ? static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fp_sum) : 0.0;
  double micro_r = tp_sum + fn_sum ? static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fn_sum) : 0.0;
  r.micro_f1 = micro_p + micro_r > 0 ? 2 * micro_p * micro_r / (micro_p + micro_r) : 0.0;
  r.macro_f1 = supported ? f1_sum / static_cast<double>(supported) : 0.0;
  r.accuracy = r.total ? static_cast<double>(tp_sum) / static_cast<double>(r.total) : 0.0;
  return r;
}

EvalReport report_from_pairs(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                             std::vector<std::string> classes) {
  if (truth.size() != predicted.size()) throw Error("truth and prediction lengths differ");
  const std::size_t k = classes.size();
  std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= k || predicted[i] >= k) throw Error("class index out of range");
    ++confusion[truth[i]][predicted[i]];
  }
  return report_from_confusion(std::move(confusion), std::move(classes));
}

EvalReport evaluate(const BaselineModel& model, const std::vector<LabeledLine>& test) {
  if (test.empty()) throw Error("evaluate: empty test set");
  std::vector<std::size_t> truth, predicted;
  for (const auto& l : test) {
    auto c = category_index(l.category);
    if (!c) throw Error("line " + to_string(l.line.key()) + " has no valid category");
    truth.push_back(*c);
    predicted.push_back(argmax(predict_distribution(model, l.line.text).probs));
  }
  return report_from_pairs(truth, predicted, model.classes());
}

json EvalReport::to_json() const {
  json per = json::array();
  for (std::size_t c = 0; c < classes.size(); ++c)
    per.push_back({{"class", classes[c]},
                   {"precision", per_class[c].precision},
                   {"recall", per_class[c].recall},
                   {"f1", per_class[c].f1},
                   {"support", per_class[c].support}});
  json row_pct = json::array();
  for (const auto& row : confusion) {
    std::size_t sum = std::accumulate(row.begin(), row.end(), std::size_t{0});
    json r = json::array();
    for (auto v : row) r.push_back(sum ? 100.0 * static_cast<double>(v) / static_cast<double>(sum) : 0.0);
    row_pct.push_back(r);
  }
  return {{"classes", classes},
          {"confusion", confusion},
          {"confusion_row_percent", row_pct},
          {"per_class", per},
          {"micro_f1", micro_f1},
          {"macro_f1", macro_f1},
          {"macro_f1_note", "mean F1 over classes with non-zero support"},
          {"accuracy", accuracy},
          {"total", total}};
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof(buf), "%-40s %9s %9s %9s %9s\n", "class", "precision", "recall", "f1", "support");
  out << buf;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::snprintf(buf, sizeof(buf), "%-40s %9.4f %9.4f %9.4f %9zu\n", classes[c].c_str(), per_class[c].precision,
                  per_class[c].recall, per_class[c].f1, per_class[c].support);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "micro F1 %.4f  macro F1 %.4f (supported classes only)  n=%zu\n", micro_f1,
                macro_f1, total);
  out << buf;
  return out.str();
}

// ---- External scores -----------------------------------------------------

std::map<LineKey, ClassDistribution> import_external_scores(const std::filesystem::path& path,
                                                            const std::vector<LineKey>& lines) {
  std::map<LineKey, ClassDistribution> rows;
  io::for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (line.empty()) return;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ScoreImportError("line " + std::to_string(number) + ": malformed JSON");
    ClassDistribution d;
    try {
      d.line = {j.at("doc_id").get<std::string>(), j.at("line_index").get<std::size_t>(),
                j.value("segment_index", std::size_t{0})};
      auto probs = j.at("probs").get<std::vector<double>>();
      if (probs.size() != kNumCategories)
        throw ScoreImportError("line " + std::to_string(number) + ": expected 9 probabilities, got " +
                               std::to_string(probs.size()));
      std::copy(probs.begin(), probs.end(), d.probs.begin());
    } catch (const json::exception& e) {
      throw ScoreImportError("line " + std::to_string(number) + ": " + e.what());
    }
    double sum = 0;
    for (double p : d.probs) {
      if (!(p >= 0) || !std::isfinite(p))
        throw ScoreImportError("line " + std::to_string(number) + ": probabilities must be finite and non-negative");
      sum += p;
    }
    if (sum < 0.999 || sum > 1.001)
      throw ScoreImportError("line " + std::to_string(number) + ": probabilities sum to " + std::to_string(sum) +
                             ", outside [0.999, 1.001]");
    for (auto& p : d.probs) p /= sum;
    rows[d.line] = d;
  });

  std::map<LineKey, ClassDistribution> out;
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (const auto& key : lines) {
    auto it = rows.find(key);
    if (it == rows.end()) {
      if (missing.size() < 10) missing.push_back(to_string(key));
      ++missing_count;
      continue;
    }
    out.emplace(key, it->second);
  }
  if (missing_count) {
    std::string msg = std::to_string(missing_count) + " corpus line(s) missing from " + path.string() + ":";
    for (const auto& m : missing) msg += " " + m;
    throw ScoreImportError(msg);
  }
  return out;
}

} // namespace linequal
