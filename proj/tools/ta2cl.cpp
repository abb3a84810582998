// SPDX-License-Identifier: Apache-2.0
// ta2cl command-line driver: synthetic data, pretraining, classification,
// evaluation, ablations and the top-3 variance study.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <unistd.h>

#include "ta2cl/config.hpp"
#include "ta2cl/pipeline/ablation.hpp"

namespace fs = std::filesystem;
using namespace ta2cl;
using ojson = nlohmann::ordered_json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> jobs;
  std::string ablation_kind;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? parse_run_config(std::string("{}")) : load_run_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.jobs) c.jobs = *o.jobs;
  c.validate();
  if (c.out_dir.empty()) throw ConfigError("no output directory: pass --out or set paths.out_dir");
  if (!fs::is_directory(c.out_dir)) throw ConfigError("output directory does not exist: " + c.out_dir);
  return c;
}

/// Writes to a sibling temporary and renames, so readers never see a
/// half-written file.
void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
  spdlog::info("wrote {}", path.string());
}

void write_json(const RunConfig& c, const std::string& name, ojson report) {
  report["run_config"] = to_json(c);
  write_atomic(fs::path(c.out_dir) / name, report.dump(2) + "\n");
}

void write_config_echo(const RunConfig& c) { write_atomic(fs::path(c.out_dir) / "config.json", to_json(c).dump(2) + "\n"); }

/// Windows from paths.data_dir when set, otherwise generated in memory from
/// the synth section. Window length follows synth.window_len.
std::vector<Window> load_windows(const RunConfig& c) {
  std::vector<Segment> segs;
  if (!c.data_dir.empty()) {
    segs = read_dataset(c.data_dir);
    spdlog::info("loaded {} segments from {}", segs.size(), c.data_dir);
  } else {
    segs = generate(c.synth);
    spdlog::info("generated {} synthetic segments", segs.size());
  }
  if (segs.empty()) throw ValueError("dataset is empty");
  const auto len = static_cast<std::size_t>(std::llround(c.synth.window_len * segs.front().sample_rate));
  for (const auto& s : segs) {
    if (s.data.rows() != c.experiment.encoder.channels) {
      throw ConfigError("segment sub" + std::to_string(s.subject_id) + "_stim" + std::to_string(s.stimulus_id) +
                        " has " + std::to_string(s.data.rows()) + " channels but encoder.channels is " +
                        std::to_string(c.experiment.encoder.channels));
    }
  }
  if (len < c.experiment.encoder.min_input_len()) {
    throw ConfigError("window of " + std::to_string(len) + " samples is shorter than the encoder minimum " +
                      std::to_string(c.experiment.encoder.min_input_len()));
  }
  return cut_windows(segs, len);
}

std::string checkpoint_path(const RunConfig& c) {
  return c.checkpoint.empty() ? (fs::path(c.out_dir) / "encoder.ckpt").string() : c.checkpoint;
}

EncoderParams load_checkpoint(const RunConfig& c) {
  std::ifstream in(c.checkpoint, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + c.checkpoint);
  try {
    return load_encoder(in, c.experiment.encoder);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("checkpoint does not match encoder config: ") + e.what());
  }
}

int cmd_synth(const Options& o) {
  const RunConfig c = resolve(o);
  const auto segs = generate(c.synth);
  const fs::path out(c.out_dir);
  const fs::path staging = out / (".staging" + std::to_string(::getpid()));
  fs::create_directory(staging);
  try {
    write_dataset(staging, segs);
    for (const auto& entry : fs::directory_iterator(staging)) fs::rename(entry.path(), out / entry.path().filename());
    fs::remove(staging);
  } catch (...) {
    fs::remove_all(staging);
    throw;
  }
  write_config_echo(c);
  spdlog::info("wrote {} segments to {}", segs.size(), c.out_dir);
  return 0;
}

int cmd_pretrain(const Options& o) {
  const RunConfig c = resolve(o);
  const auto windows = load_windows(c);
  const auto& e = c.experiment;
  const PretrainResult r = pretrain(windows, e.encoder, e.loss, e.schedule, mix_seed(e.seed, {61}));
  std::ostringstream ckpt;
  save_encoder(ckpt, r.params);
  const std::string path = checkpoint_path(c);
  write_atomic(path, ckpt.str());
  std::ostringstream curve;
  curve.precision(17);
  curve << "epoch,loss\n";
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) curve << i << ',' << r.loss_curve[i] << '\n';
  write_atomic(fs::path(c.out_dir) / "pretrain_loss.csv", curve.str());
  write_json(c, "pretrain.json",
             {{"checkpoint", path},
              {"digest", params_digest(r.params)},
              {"loss_curve", r.loss_curve},
              {"initial_loss", r.initial_loss},
              {"mean_positive_logit", r.mean_positive_logit},
              {"mean_negative_logit", r.mean_negative_logit},
              {"steps", r.steps},
              {"batch_size", r.batch_size}});
  write_config_echo(c);
  return 0;
}

/// Frozen-checkpoint classification on every fold.
int cmd_classify(const Options& o) {
  RunConfig c = resolve(o);
  c.checkpoint = checkpoint_path(c);
  const auto windows = load_windows(c);
  const EncoderParams enc = load_checkpoint(c);
  const auto& e = c.experiment;
  const auto folds = experiment_folds(windows, e);
  const std::size_t n_classes = count_classes(windows);
  EvalReport report;
  report.experiment = e.name;
  report.config = to_json(e);
  report.folds.resize(folds.size());
  parallel_for(folds.size(), c.jobs, [&](std::size_t f) {
    report.folds[f] = classify_fold(windows, folds[f], enc, e, n_classes, fold_seed(e, f));
    report.folds[f].fold = f;
  });
  report.accuracy = summarize(report.fold_accuracies());
  report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (const auto& f : report.folds)
    for (std::size_t i = 0; i < n_classes; ++i)
      for (std::size_t j = 0; j < n_classes; ++j) report.confusion[i][j] += f.confusion[i][j];
  auto j = report.to_json(false);
  j["checkpoint_digest"] = params_digest(enc);
  write_json(c, "classify.json", j);
  write_atomic(fs::path(c.out_dir) / "classify.csv", report.to_csv());
  write_config_echo(c);
  spdlog::info("accuracy {}", format_pm(report.accuracy));
  return 0;
}

int cmd_eval(const Options& o) {
  const RunConfig c = resolve(o);
  // a checkpoint is only validated here; evaluation pretrains per fold
  if (!c.checkpoint.empty()) load_checkpoint(c);
  const auto windows = load_windows(c);
  const EvalReport report = evaluate(windows, c.experiment, c.jobs);
  write_json(c, "eval.json", report.to_json());
  write_atomic(fs::path(c.out_dir) / "eval.csv", report.to_csv());
  write_atomic(fs::path(c.out_dir) / "loss_curves.csv", report.loss_curves_csv());
  write_config_echo(c);
  spdlog::info("accuracy {}", format_pm(report.accuracy));
  return 0;
}

int cmd_ablate(const Options& o) {
  const RunConfig c = resolve(o);
  const auto windows = load_windows(c);
  AblationTable table;
  if (o.ablation_kind == "k") {
    table = run_ablation_k(windows, c.experiment, {1, 2, 3}, c.jobs);
  } else if (o.ablation_kind == "aggregation") {
    table = run_ablation_aggregation(windows, c.experiment, c.jobs);
  } else {
    auto att = run_attention_ablation(windows, c.experiment, c.jobs);
    write_atomic(fs::path(c.out_dir) / "attention_curves.csv", att.curves_csv);
    table = std::move(att.table);
  }
  write_json(c, "ablation_" + o.ablation_kind + ".json", table.to_json());
  write_atomic(fs::path(c.out_dir) / ("ablation_" + o.ablation_kind + ".csv"), table.to_csv());
  write_config_echo(c);
  for (const auto& r : table.rows) spdlog::info("{}: {}", r.variant, format_pm(r.report.accuracy));
  return 0;
}

int cmd_top3(const Options& o) {
  const RunConfig c = resolve(o);
  const auto windows = load_windows(c);
  const Top3Study s = run_top3_study(windows, c.experiment, c.jobs);
  auto j = s.table.to_json();
  j["study"] = s.summary;
  write_json(c, "top3.json", j);
  write_atomic(fs::path(c.out_dir) / "top3_histogram.csv", s.histogram_csv);
  write_config_echo(c);
  return 0;
}

const char* category(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const ValueError*>(&e)) return "value";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "internal";
}

void setup_logging() {
  auto logger = spdlog::stderr_color_st("ta2cl");
  spdlog::set_default_logger(logger);
  const char* lvl = std::getenv("TA2CL_LOG");
  const std::string level = lvl ? lvl : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Async-InfoNCE contrastive pretraining and evaluation"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "existing output directory (overrides paths.out_dir)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Entry entries[] = {
      {"synth", "write a synthetic ESEG1 dataset and manifest", cmd_synth},
      {"pretrain", "contrastive pretraining on all windows; writes a checkpoint", cmd_pretrain},
      {"classify", "classify every fold with a frozen checkpoint", cmd_classify},
      {"eval", "per-fold pretrain, freeze and classify", cmd_eval},
      {"ablate", "paired ablation runs", cmd_ablate},
      {"top3", "K=1 vs K=3 top-3 similarity variance study", cmd_top3},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    common(sub);
    if (std::string(e.name) == "ablate") {
      sub->add_option("kind", o.ablation_kind, "k | aggregation | attention")
          ->required()
          ->check(CLI::IsMember({"k", "aggregation", "attention"}));
    }
    sub->callback([&chosen, run = e.run] { chosen = run; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    return chosen(o);
  } catch (const std::exception& e) {
    const char* cat = category(e);
    std::cerr << ojson{{"error", {{"category", cat}, {"message", e.what()}}}}.dump() << std::endl;
    return std::string(cat) == "config" ? 2 : 1;
  }
}
