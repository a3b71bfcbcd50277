// linequal command-line driver.

#include "linequal/agreement.hpp"
#include "linequal/calibration.hpp"
#include "linequal/classifier.hpp"
#include "linequal/corpus.hpp"
#include "linequal/filter.hpp"
#include "linequal/io.hpp"
#include "linequal/labeled.hpp"
#include "linequal/labeler.hpp"
#include "linequal/review_service.hpp"
#include "linequal/taxonomy.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace linequal;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, j.dump(2) + "\n");
}

fs::path model_file(const fs::path& model) { return fs::is_directory(model) ? model / "model.lqm" : model; }

int cmd_ingest(const fs::path& input, bool stats, std::size_t max_len, bool single_line_only) {
  SegmentationOptions seg{max_len, single_line_only};
  std::size_t docs = 0, lines = 0, segmented = 0, degenerate = 0;
  DocumentReader reader(input);
  while (auto doc = reader.next()) {
    ++docs;
    if (doc->degenerate) ++degenerate;
    auto recs = document_lines(*doc, seg);
    lines += recs.size();
    for (const auto& r : recs)
      if (r.segment_index > 0) ++segmented;
  }
  if (stats) {
    json out = {{"documents", docs}, {"lines", lines}, {"extra_segments", segmented}, {"degenerate_documents", degenerate}};
    std::cout << out.dump(2) << "\n";
  } else {
    std::cout << docs << " documents, " << lines << " lines\n";
  }
  return 0;
}

int cmd_label(const fs::path& input, const fs::path& out, const fs::path& config_path) {
  LabelerConfig config;
  if (!config_path.empty()) config = LabelerConfig::from_json(json::parse(io::read_file(config_path)));
  config.validate();
  auto client = make_client(config);
  auto result = label_corpus(input, out, config, *client, log_line);
  json summary = result.stats.to_json();
  summary["labels"] = result.registry.descriptive_size();
  summary["resumed"] = result.resumed;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_refine(const fs::path& labels, std::size_t min_count, const fs::path& verdicts, const fs::path& scheme_path,
               const fs::path& out) {
  auto lines = read_labeled(labels);
  auto registry = registry_from_lines(lines);
  const auto initial = registry.descriptive_size();
  auto infrequent = remap_infrequent(lines, registry, min_count);
  const auto after_infrequent = registry.descriptive_size();
  std::vector<std::string> remapped;
  if (!verdicts.empty()) remapped = apply_verdicts(lines, registry, read_verdicts(verdicts));
  const auto after_verdicts = registry.descriptive_size();

  json summary = {{"labels_initial", initial},
                  {"infrequent_remapped", infrequent.size()},
                  {"labels_after_infrequent", after_infrequent},
                  {"verdict_remapped", remapped},
                  {"labels_after_verdicts", after_verdicts},
                  {"lines", lines.size()}};
  if (!scheme_path.empty()) {
    auto scheme = load_category_scheme(scheme_path, &registry);
    auto tally = categorize_corpus(lines, scheme);
    json cats = json::object();
    for (std::size_t c = 0; c < kNumCategories; ++c) cats[std::string(kCategories[c])] = tally[c];
    summary["categories"] = cats;
    std::cerr << format_tally(tally);
  }
  write_labeled(out, lines);
  io::write_file_atomic(registry_path(out), registry.to_json().dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train(const fs::path& data, const fs::path& out, const fs::path& config_path, std::uint64_t seed,
              std::optional<double> lr, std::optional<std::size_t> epochs, std::size_t dim) {
  TrainConfig config;
  if (!config_path.empty()) config = TrainConfig::from_json(json::parse(io::read_file(config_path)));
  config.seed = seed;
  if (lr) config.learning_rate = *lr;
  if (epochs) config.max_epochs = *epochs;
  config.validate();
  FeatureConfig features;
  features.dim = dim;

  auto lines = read_labeled(data);
  auto split = stratified_split(lines, {}, seed);
  for (const auto& w : split.warnings) log_line("warning: " + w);
  fs::create_directories(out / "split");
  write_labeled(out / "split" / "train.jsonl", split.train);
  write_labeled(out / "split" / "dev.jsonl", split.dev);
  write_labeled(out / "split" / "test.jsonl", split.test);

  TrainHooks hooks;
  hooks.on_eval = [](std::size_t step, double train_loss, double dev_loss) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "step %zu  train %.5f  dev %.5f", step, train_loss, dev_loss);
    log_line(buf);
  };
  auto result = train_baseline(split, config, features, hooks);
  json header = {{"train", config.to_json()},
                 {"split", {{"train", split.train.size()}, {"dev", split.dev.size()}, {"test", split.test.size()}}},
                 {"best_step", result.best_step},
                 {"steps", result.steps},
                 {"stopped_early", result.stopped_early}};
  result.model.save(out / "model.lqm", header);
  std::cout << header.dump(2) << "\n";
  return 0;
}

int cmd_eval(const fs::path& model_path, fs::path data, const fs::path& report) {
  auto model = BaselineModel::load(model_file(model_path));
  if (data.empty()) data = model_path / "split" / "test.jsonl";
  auto result = evaluate(model, read_labeled(data));
  std::cout << result.to_text();
  if (!report.empty()) write_json(report, result.to_json());
  return 0;
}

int cmd_calibrate(const fs::path& model_path, const fs::path& data, const fs::path& out) {
  auto model = BaselineModel::load(model_file(model_path));
  auto lines = read_labeled(data);
  std::vector<double> scores;
  std::vector<char> clean;  // std::vector<bool> has no contiguous storage
  for (const auto& l : lines) {
    if (l.category.empty()) throw Error("calibration data must be categorized: " + to_string(l.line.key()));
    scores.push_back(clean_probability(predict_distribution(model, l.line.text)));
    clean.push_back(l.category == kClean);
  }
  std::unique_ptr<bool[]> flags(new bool[clean.size()]);
  for (std::size_t i = 0; i < clean.size(); ++i) flags[i] = clean[i];
  auto fit = fit_platt(scores, std::span<const bool>(flags.get(), clean.size()));
  PlattFile file{fit.params, io::hex64(io::fnv1a(io::read_file(data))), lines.size()};
  file.save(out);
  json summary = file.to_json();
  summary["iterations"] = fit.iterations;
  summary["mean_log_loss"] = fit.mean_log_loss;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_score(const fs::path& input, const fs::path& model_path, const fs::path& external, const fs::path& platt_path,
              ShardPlan plan, const fs::path& out, const SegmentationOptions& seg) {
  plan.validate();
  PlattParams platt;
  if (!platt_path.empty()) platt = PlattFile::load(platt_path).params;
  std::unique_ptr<LineScorer> scorer;
  BaselineModel model;
  if (!external.empty()) {
    std::vector<LineKey> keys;
    DocumentReader reader(input);
    while (auto doc = reader.next())
      for (const auto& r : document_lines(*doc, seg)) keys.push_back(r.key());
    auto rows = import_external_scores(external, keys);
    scorer = std::make_unique<ExternalScorer>(std::move(rows), "external:" + io::hex64(io::fnv1a(io::read_file(external))));
  } else {
    model = BaselineModel::load(model_file(model_path));
    scorer = std::make_unique<BaselineScorer>(model);
  }
  auto result = score_corpus(input, *scorer, platt, plan, out, seg, log_line);
  json summary = {{"shards", result.shards},
                  {"skipped", result.skipped},
                  {"failed", result.failed},
                  {"documents", result.documents},
                  {"lines", result.lines}};
  std::cout << summary.dump(2) << "\n";
  return result.ok() ? 0 : 1;
}

int cmd_filter(const fs::path& scored, double threshold, const fs::path& out, const fs::path& report) {
  if (threshold < 0 || threshold > 1) throw Error("threshold must be within [0, 1]");
  CorpusFilter filter(threshold);
  fs::create_directories(out);
  std::size_t index = 0;
  for (const auto& shard : manifest_shards(scored)) {
    std::string body;
    for (const auto& doc : read_scored(shard))
      if (auto kept = filter.add(doc)) body += document_to_json(*kept).dump() + "\n";
    io::write_file_atomic(out / shard_file_name(index++), body);
  }
  const auto& stats = filter.stats();
  auto reduction = reduction_report(stats.original, stats.kept);
  json j = stats.to_json();
  j["reduction"] = reduction.to_json();
  if (!report.empty()) write_json(report, j);
  std::cout << reduction.to_text();
  return 0;
}

int cmd_iaa(const fs::path& session_path, const fs::path& report) {
  auto session = AnnotationSession::load(session_path);
  auto result = agreement_report(session);
  std::cout << result.to_text();
  if (!report.empty()) write_json(report, result.to_json());
  return 0;
}

review::ReviewServer* g_server = nullptr;

int cmd_serve(const fs::path& data, const std::string& host, int port, const fs::path& state, std::size_t context) {
  review::StoreOptions options;
  options.context_lines = context;
  review::ReviewStore store(read_labeled(data), state, options);
  review::ReviewServer server(store);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  log_line("serving on http://" + host + ":" + std::to_string(port));
  bool ok = server.listen(host, port);
  g_server = nullptr;
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"linequal: line-level quality filtering for web-text corpora"};
  app.require_subcommand(1);

  std::size_t max_len = 200;
  bool single_line_only = false;
  auto add_segmentation = [&](CLI::App* sub) {
    sub->add_option("--max-segment-chars", max_len, "split lines longer than this")->check(CLI::PositiveNumber);
    sub->add_flag("--single-line-only", single_line_only, "segment only single-line documents");
  };

  fs::path input, out, config, labels, verdicts, scheme, data, model, report, platt, external, scored, session, state;
  bool stats = false;

  auto* ingest = app.add_subcommand("ingest", "validate a corpus and count documents and lines");
  ingest->add_option("--input", input)->required();
  ingest->add_flag("--stats", stats, "print JSON statistics");
  add_segmentation(ingest);

  auto* label = app.add_subcommand("label", "label corpus lines through a chat-completion endpoint");
  label->add_option("--input", input)->required();
  label->add_option("--out", out)->required();
  label->add_option("--config", config, "labeler config JSON");

  std::size_t min_count = 2;
  auto* refine = app.add_subcommand("refine", "remap infrequent labels, apply verdicts, assign categories");
  refine->add_option("--labels", labels)->required();
  refine->add_option("--min-count", min_count);
  refine->add_option("--verdicts", verdicts);
  refine->add_option("--scheme", scheme);
  refine->add_option("--out", out)->required();

  std::uint64_t seed = 42;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::size_t dim = std::size_t{1} << 18;
  auto* train = app.add_subcommand("train", "train the baseline line classifier");
  train->add_option("--data", data)->required();
  train->add_option("--seed", seed);
  train->add_option("--out", out)->required();
  train->add_option("--config", config, "training config JSON");
  train->add_option("--learning-rate", lr);
  train->add_option("--epochs", epochs);
  train->add_option("--feature-dim", dim)->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "evaluate a model on a labeled split");
  eval->add_option("--model", model)->required();
  eval->add_option("--data", data, "defaults to <model>/split/test.jsonl");
  eval->add_option("--report", report);

  auto* calibrate = app.add_subcommand("calibrate", "fit Platt scaling on a held-out split");
  calibrate->add_option("--model", model)->required();
  calibrate->add_option("--data", data)->required();
  calibrate->add_option("--out", out)->required();

  ShardPlan plan;
  auto* score = app.add_subcommand("score", "add calibrated quality scores to every line");
  score->add_option("--input", input)->required();
  auto* model_opt = score->add_option("--model", model);
  auto* external_opt = score->add_option("--external-scores", external);
  model_opt->excludes(external_opt);
  score->add_option("--platt", platt);
  score->add_option("--shard-size", plan.shard_size);
  score->add_option("--batch", plan.batch_size);
  score->add_option("--workers", plan.workers);
  bool no_grouping = false;
  score->add_flag("--no-length-grouping", no_grouping);
  score->add_option("--out", out)->required();
  add_segmentation(score);

  double threshold = 0.5;
  auto* filter = app.add_subcommand("filter", "drop lines scored below a threshold");
  filter->add_option("--scored", scored)->required();
  filter->add_option("--threshold", threshold);
  filter->add_option("--out", out)->required();
  filter->add_option("--report", report);

  auto* iaa = app.add_subcommand("iaa", "Cohen's kappa for an annotation session");
  iaa->add_option("--session", session)->required();
  iaa->add_option("--report", report);

  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t context = 2;
  auto* serve = app.add_subcommand("serve", "run the review service");
  serve->add_option("--data", data, "labeled or categorized lines")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--state", state)->required();
  serve->add_option("--context", context, "context lines shown around each item");

  CLI11_PARSE(app, argc, argv);

  try {
    SegmentationOptions seg{max_len, single_line_only};
    if (*ingest) return cmd_ingest(input, stats, max_len, single_line_only);
    if (*label) return cmd_label(input, out, config);
    if (*refine) return cmd_refine(labels, min_count, verdicts, scheme, out);
    if (*train) return cmd_train(data, out, config, seed, lr, epochs, dim);
    if (*eval) return cmd_eval(model, data, report);
    if (*calibrate) return cmd_calibrate(model, data, out);
    if (*score) {
      if (model.empty() && external.empty()) throw Error("score needs --model or --external-scores");
      plan.length_grouping = !no_grouping;
      return cmd_score(input, model, external, platt, plan, out, seg);
    }
    if (*filter) return cmd_filter(scored, threshold, out, report);
    if (*iaa) return cmd_iaa(session, report);
    if (*serve) return cmd_serve(data, host, port, state, context);
  } catch (const std::exception& e) {
    std::cerr << "linequal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
