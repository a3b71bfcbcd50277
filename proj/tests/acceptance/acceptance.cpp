// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "linequal/agreement.hpp"
#include "linequal/calibration.hpp"
#include "linequal/classifier.hpp"
#include "linequal/corpus.hpp"
#include "linequal/filter.hpp"
#include "linequal/io.hpp"
#include "linequal/labeler.hpp"
#include "linequal/taxonomy.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>

using namespace linequal;
namespace fs = std::filesystem;

namespace {

int failures = 0;

struct Outcome {
  bool ok = false;
  std::string detail;
};

void run(const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.ok) ++failures;
  std::printf("%s  %-28s %s\n", o.ok ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "linequal_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Printable ASCII with spaces and sentence enders, plus some multi-byte text.
std::string random_line(std::mt19937_64& rng, std::size_t len) {
  static const std::vector<std::string> pieces = {"a", "b", "k", "z", "Q", " ", " ", " ", ".", "!", "?", "\"", ")",
                                                  "'", "]", ",", "\xc3\xa9", "\xe2\x82\xac", "7"};
  std::string out;
  for (std::size_t i = 0; i < len; ++i) out += pieces[rng() % pieces.size()];
  // No trailing whitespace: lines are trimmed before segmentation.
  while (!out.empty() && out.back() == ' ') out.back() = 'x';
  return out;
}

Outcome segmentation() {
  std::mt19937_64 rng(2024);
  std::vector<std::string> lines;
  for (int i = 0; i < 10000; ++i) lines.push_back(random_line(rng, 1 + rng() % 2000));
  auto t0 = std::chrono::steady_clock::now();
  std::size_t segments = 0, too_long = 0, broken = 0;
  for (const auto& line : lines) {
    auto segs = segment_long_line(line, 200);
    segments += segs.size();
    for (const auto& s : segs) too_long += utf8_length(s.text) > 200;
    broken += join_segments(segs) != line;
  }
  double secs = seconds_since(t0);
  return {too_long == 0 && broken == 0 && secs < 5.0,
          fmt("%.0f segments, %.0f over 200, %.0f reconstruction failures, %.2fs", segments, too_long, broken, secs)};
}

Outcome kappa() {
  std::mt19937_64 rng(77);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + rng() % 50, k = 1 + rng() % 9;
    std::vector<std::string> a, b;
    for (std::size_t i = 0; i < n; ++i) {
      a.emplace_back(kCategories[rng() % k]);
      b.push_back(rng() % 2 ? a.back() : std::string(kCategories[rng() % k]));
    }
    worst = std::max(worst, std::abs(cohens_kappa(a, b) - oracle::kappa(a, b)));
  }
  double hand = cohens_kappa({"C", "C", "N", "N"}, {"C", "N", "N", "N"});
  return {worst <= 1e-12 && hand == 0.5, fmt("max |diff| %.3g over 1000 pairs, hand case %.17g", worst, hand)};
}

Outcome metrics() {
  std::mt19937_64 rng(5150);
  std::vector<std::string> names(kCategories.begin(), kCategories.end());
  double worst = 0, identity = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + rng() % 60;
    std::vector<std::size_t> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = rng() % 9;
      p[i] = rng() % 2 ? t[i] : rng() % 9;
    }
    auto r = report_from_pairs(t, p, names);
    auto o = oracle::metrics(t, p, 9);
    for (std::size_t c = 0; c < 9; ++c) {
      worst = std::max({worst, std::abs(r.per_class[c].precision - o.precision[c]),
                        std::abs(r.per_class[c].recall - o.recall[c]), std::abs(r.per_class[c].f1 - o.f1[c])});
      if (r.per_class[c].support != o.support[c]) worst = 1;
    }
    worst = std::max({worst, std::abs(r.micro_f1 - o.micro_f1), std::abs(r.macro_f1 - o.macro_f1)});
    identity = std::max(identity, std::abs(r.micro_f1 - o.accuracy));
  }
  return {worst <= 1e-12 && identity <= 1e-12,
          fmt("max |diff| %.3g, max |micro F1 - accuracy| %.3g", worst, identity)};
}

struct PlattData {
  std::vector<double> scores;
  std::unique_ptr<bool[]> flags;
  std::size_t n;
};

PlattData logistic_data(std::size_t n, double a, double b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  PlattData d{{}, std::make_unique<bool[]>(n), n};
  for (std::size_t i = 0; i < n; ++i) {
    double x = u(rng);
    d.scores.push_back(x);
    d.flags[i] = u(rng) < 1 / (1 + std::exp(-(a * x + b)));
  }
  return d;
}

Outcome platt() {
  auto t0 = std::chrono::steady_clock::now();
  auto d = logistic_data(10000, 3.0, -1.5, 31);
  auto fit = fit_platt(d.scores, std::span<const bool>(d.flags.get(), d.n));
  auto flat = logistic_data(10000, 0.0, 0.3, 32);
  auto flat_fit = fit_platt(flat.scores, std::span<const bool>(flat.flags.get(), flat.n));
  double secs = seconds_since(t0);
  bool ok = std::abs(fit.params.a - 3.0) <= 0.15 && std::abs(fit.params.b + 1.5) <= 0.15 &&
            std::abs(flat_fit.params.a) < 0.1 && secs < 10.0;
  return {ok, fmt("a=%.4f b=%.4f, uninformative a=%.4f, %.3fs", fit.params.a, fit.params.b, flat_fit.params.a, secs)};
}

Outcome gradient() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> g(0, 0.5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    FeatureConfig fc{8 + rng() % 16, 1, 3};
    BaselineModel m(fc);
    for (std::size_t f = 0; f < fc.dim; ++f)
      for (std::size_t c = 0; c < kNumCategories; ++c) m.weight(f, c) = g(rng);
    for (std::size_t c = 0; c < kNumCategories; ++c) m.bias(c) = g(rng);
    std::vector<Example> batch;
    for (std::size_t i = 0, n = 1 + rng() % 8; i < n; ++i)
      batch.push_back({featurize(fixture::random_words(rng, 1 + rng() % 3), fc), rng() % kNumCategories});
    SparseGradient grad;
    smoothed_cross_entropy(m, batch, 0.1, &grad);
    const double h = 1e-5;
    auto numeric = [&](double& param) {
      const double keep = param;
      param = keep + h;
      double up = smoothed_cross_entropy(m, batch, 0.1);
      param = keep - h;
      double down = smoothed_cross_entropy(m, batch, 0.1);
      param = keep;
      return (up - down) / (2 * h);
    };
    double diff = 0, norm_a = 0, norm_n = 0;
    for (std::size_t f = 0; f < fc.dim; ++f)
      for (std::size_t c = 0; c < kNumCategories; ++c) {
        auto it = grad.weights.find(static_cast<std::uint32_t>(f));
        double a = it == grad.weights.end() ? 0.0 : it->second[c];
        double n = numeric(m.weight(f, c));
        diff += (a - n) * (a - n);
        norm_a += a * a;
        norm_n += n * n;
      }
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      double a = grad.bias[c], n = numeric(m.bias(c));
      diff += (a - n) * (a - n);
      norm_a += a * a;
      norm_n += n * n;
    }
    double rel = std::sqrt(diff) / std::max(std::sqrt(norm_a) + std::sqrt(norm_n), 1e-12);
    worst = std::max(worst, rel);
  }
  return {worst < 1e-4, fmt("max relative error %.3g over 100 models", worst)};
}

Outcome baseline() {
  auto lines = fixture::marker_corpus(5000, 12);
  auto split = stratified_split(lines, {0.7, 0.1, 0.2}, 42);
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  auto result = train_baseline(split, cfg, FeatureConfig{1 << 18, 1, 4});
  auto report = evaluate(result.model, split.test);

  TrainConfig plateau_cfg = cfg;
  plateau_cfg.eval_interval = 5;
  plateau_cfg.max_epochs = 20;
  TrainHooks hooks;
  hooks.dev_loss_override = [](std::size_t index, double) { return index >= 3 ? 10.0 : 3.0 - static_cast<double>(index); };
  auto small = stratified_split(fixture::marker_corpus(600, 13), {}, 3);
  auto plateau = train_baseline(small, plateau_cfg, FeatureConfig{1 << 14, 1, 4}, hooks);
  bool stopped = plateau.stopped_early && plateau.best_eval == 2;
  return {report.micro_f1 >= 0.95 && stopped,
          fmt("test micro F1 %.4f on %.0f lines; plateau run: %.0f evals, best eval %.0f", report.micro_f1,
              static_cast<double>(split.test.size()), static_cast<double>(plateau.dev_losses.size()),
              static_cast<double>(plateau.best_eval)) +
              (stopped ? ", stopped early" : ", did not stop early")};
}

std::string concat_shards(const fs::path& dir) {
  std::string all;
  for (const auto& p : manifest_shards(dir)) all += io::read_file(p);
  return all;
}

Outcome filter_pipeline() {
  std::string detail;
  bool ok = true;

  // (a) monotone in the threshold.
  auto corpus = fixture::scored_corpus(1000, 8, 0.08, 99);
  std::size_t previous = SIZE_MAX;
  bool monotone = true, sums = true;
  std::set<LineKey> prev_kept;
  for (int t = 0; t <= 10; ++t) {
    auto r = filter_corpus(corpus, t / 10.0);
    std::set<LineKey> kept;
    for (const auto& d : corpus)
      for (const auto& l : d.lines)
        if (l.quality_score >= t / 10.0) kept.insert(l.line.key());
    if (r.stats.kept.lines > previous || r.stats.kept.lines != kept.size()) monotone = false;
    if (t > 0 && !std::includes(prev_kept.begin(), prev_kept.end(), kept.begin(), kept.end())) monotone = false;
    previous = r.stats.kept.lines;
    prev_kept = std::move(kept);
    // (c) histogram closure.
    std::size_t sum = 0;
    for (auto c : r.stats.histogram) sum += c;
    if (sum != r.stats.original.lines) sums = false;
  }
  ok = ok && monotone && sums;
  detail += std::string("monotone ") + (monotone ? "yes" : "no") + ", histogram sums " + (sums ? "yes" : "no");

  // (b) sharded scoring is bit-identical to one shard.
  auto dir = scratch("filter");
  fixture::write_documents(dir / "corpus.jsonl", fixture::random_documents(1000, 7));
  fixture::HashScorer scorer;
  ShardPlan one, many;
  one.shard_size = 1000000;
  many.shard_size = 100;
  many.workers = 2;
  auto r1 = score_corpus(dir / "corpus.jsonl", scorer, {8, -4}, one, dir / "one");
  auto r2 = score_corpus(dir / "corpus.jsonl", scorer, {8, -4}, many, dir / "many");
  bool identical = r1.ok() && r2.ok() && r2.shards == 10 && concat_shards(dir / "one") == concat_shards(dir / "many");
  ok = ok && identical;
  detail += std::string(", 10 shards bit-identical ") + (identical ? "yes" : "no");

  // (d) 8% of lines below 0.5.
  auto r = filter_corpus(corpus, 0.5);
  auto rep = reduction_report(r.stats.original, r.stats.kept);
  bool eight = std::abs(rep.line_reduction_pct - 8.0) < 1e-9;
  ok = ok && eight;
  detail += fmt(", line reduction at 0.5: %.4f%%", rep.line_reduction_pct);
  return {ok, detail};
}

Outcome labeling() {
  auto dir = scratch("labeling");
  auto docs = fixture::random_documents(200, 314);
  docs.push_back({"doc-unlabelable", "this line is unlabelable\nsecond line", {}, false});
  fixture::write_documents(dir / "corpus.jsonl", docs);
  LabelerConfig config;
  config.rng_seed = 11;
  config.max_concurrent_requests = 4;
  FunctionClient client(fixture::mock_reply);
  auto a = label_corpus(dir / "corpus.jsonl", dir / "a.jsonl", config, client);
  auto b = label_corpus(dir / "corpus.jsonl", dir / "b.jsonl", config, client);
  auto lines = read_labeled(dir / "a.jsonl");
  bool conserved = a.registry.total() == lines.size() && a.stats.lines == lines.size();
  bool identical = io::read_file(dir / "a.jsonl") == io::read_file(dir / "b.jsonl") &&
                   io::read_file(registry_path(dir / "a.jsonl")) == io::read_file(registry_path(dir / "b.jsonl"));
  bool retried = a.stats.retries > 0 && a.stats.fail_open_batches > 0;
  return {conserved && identical && retried,
          fmt("%.0f lines, registry total %.0f, %.0f retries, %.0f fail-open batches", static_cast<double>(lines.size()),
              static_cast<double>(a.registry.total()), static_cast<double>(a.stats.retries),
              static_cast<double>(a.stats.fail_open_batches)) +
              (identical ? ", reruns identical" : ", reruns differ")};
}

Outcome taxonomy() {
  auto f = fixture::reference_taxonomy();
  auto registry = registry_from_lines(f.lines);
  std::size_t initial = registry.descriptive_size();
  remap_infrequent(f.lines, registry, 2);
  std::size_t after_infrequent = registry.descriptive_size();
  apply_verdicts(f.lines, registry, f.verdicts);
  std::size_t after_review = registry.descriptive_size();
  auto tally = categorize_corpus(f.lines, CategoryScheme::from_json(f.scheme));
  double clean_pct = 100.0 * static_cast<double>(tally[0]) / static_cast<double>(f.lines.size());
  bool ok = initial == 547 && after_infrequent == 405 && after_review == 382 && std::abs(clean_pct - 86.24) <= 0.01;
  return {ok, fmt("labels %.0f -> %.0f -> %.0f, Clean %.4f%%", static_cast<double>(initial),
                  static_cast<double>(after_infrequent), static_cast<double>(after_review), clean_pct)};
}

} // namespace

int main() {
  run("segmentation", segmentation);
  run("kappa-oracle", kappa);
  run("metrics-oracle", metrics);
  run("platt-recovery", platt);
  run("gradient-check", gradient);
  run("baseline-classifier", baseline);
  run("filter-pipeline", filter_pipeline);
  run("labeling-orchestration", labeling);
  run("taxonomy-refinement", taxonomy);
  std::printf("INFO  %-28s not reproduced here (needs LM pretraining runs); no criterion depends on it\n",
              "downstream-pretraining");
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
