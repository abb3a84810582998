// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "ta2cl/config.hpp"
#include "ta2cl/data_synth.hpp"
#include "ta2cl/encoder.hpp"
#include "ta2cl/pipeline/classifier.hpp"
#include "ta2cl/pipeline/experiment.hpp"
#include "ta2cl/pipeline/features.hpp"
#include "ta2cl/pipeline/pretrain.hpp"
#include "ta2cl/pipeline/report.hpp"

namespace ta2cl {

/// Runs `n` independent tasks on up to `jobs` threads; task i writes only
/// its own slot, so results do not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& task) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t count_classes(const std::vector<Window>& windows) {
  std::int32_t hi = -1;
  for (const auto& w : windows) {
    if (w.label < 0) throw ValueError("negative class label in window data");
    hi = std::max(hi, w.label);
  }
  return static_cast<std::size_t>(hi + 1);
}

/// Stratified trial-level split of `trials` (indices into the trial list):
/// about `fraction` of each class's trials go to validation, at least one
/// per class when the class has two or more trials.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_trials(
    const std::vector<std::size_t>& trials, const std::vector<std::size_t>& trial_label, double fraction,
    std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t t : trials) by_class[trial_label[t]].push_back(t);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, val;
  for (auto& [cls, ts] : by_class) {
    std::shuffle(ts.begin(), ts.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ts.size())));
    if (ts.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, ts.size() - 1);
    else n_val = 0;
    val.insert(val.end(), ts.begin(), ts.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), ts.begin() + static_cast<std::ptrdiff_t>(n_val), ts.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

struct FoldArtifacts {
  EncoderParams encoder;
  ClassifierParams classifier;
};

/// Classification stage for one fold with a frozen encoder.
inline FoldResult classify_fold(const std::vector<Window>& windows, const Fold& fold, const EncoderParams& encoder,
                                const ExperimentConfig& cfg, std::size_t n_classes, std::uint64_t seed,
                                ClassifierParams* classifier_out = nullptr) {
  FoldResult res;
  res.train_subjects = fold.train_subjects;
  res.test_subjects = fold.test_subjects;
  res.encoder_digest_before = params_digest(encoder);
  const std::set<std::uint32_t> train_set(fold.train_subjects.begin(), fold.train_subjects.end());
  const std::set<std::uint32_t> test_set(fold.test_subjects.begin(), fold.test_subjects.end());

  std::vector<Window> used;
  for (const auto& w : windows)
    if (train_set.count(w.subject_id) || test_set.count(w.subject_id)) used.push_back(w);
  const Mat raw = extract_features(encoder, cfg.encoder, used);
  const auto trials = trial_rows(used);
  std::vector<std::size_t> train_rows, train_trials, test_trials;
  std::vector<std::size_t> trial_label(trials.size());
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const Window& w0 = used[trials[t].front()];
    trial_label[t] = static_cast<std::size_t>(w0.label);
    if (train_set.count(w0.subject_id)) {
      train_trials.push_back(t);
      train_rows.insert(train_rows.end(), trials[t].begin(), trials[t].end());
    } else {
      test_trials.push_back(t);
    }
  }
  if (train_trials.empty() || test_trials.empty()) throw ValueError("fold has no training or no test trials");
  std::sort(train_rows.begin(), train_rows.end());
  auto smoothed = smooth_features(raw, trials, train_rows, cfg.smoothing);
  res.warnings = std::move(smoothed.warnings);

  std::vector<std::size_t> fit_label = trial_label;
  if (cfg.shuffle_labels) {
    std::vector<std::size_t> labels;
    for (std::size_t t : train_trials) labels.push_back(trial_label[t]);
    std::mt19937_64 rng(mix_seed(seed, {21}));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < train_trials.size(); ++i) fit_label[train_trials[i]] = labels[i];
  }
  const auto [fit_trials, val_trials] =
      split_trials(train_trials, fit_label, cfg.schedule.classify.val_fraction, mix_seed(seed, {22}));
  if (val_trials.empty()) throw ValueError("validation split is empty; need more training trials per class");

  auto gather = [&](const std::vector<std::size_t>& ts, const std::vector<std::size_t>& labels) {
    std::vector<std::size_t> rows, ys;
    for (std::size_t t : ts)
      for (std::size_t r : trials[t]) {
        rows.push_back(r);
        ys.push_back(labels[t]);
      }
    return std::make_pair(select_rows(smoothed.features, rows), ys);
  };
  const auto [x_fit, y_fit] = gather(fit_trials, fit_label);
  const auto [x_val, y_val] = gather(val_trials, fit_label);
  const auto [x_test, y_test] = gather(test_trials, trial_label);

  const auto trained = train_classifier(x_fit, y_fit, x_val, y_val, n_classes, cfg.schedule.classify, mix_seed(seed, {23}));
  const auto pred = predict(trained.params, x_test);
  res.confusion = confusion_matrix(y_test, pred, n_classes);
  res.accuracy = confusion_accuracy(res.confusion);
  res.n_test = y_test.size();
  res.classifier_epochs = trained.trace.epochs_run;
  res.best_epoch = trained.trace.best_epoch;
  res.best_val_accuracy = 100.0 * trained.trace.val_accuracy[trained.trace.best_epoch];
  res.encoder_digest_after = params_digest(encoder);
  if (classifier_out) *classifier_out = trained.params;
  return res;
}

inline std::vector<Window> windows_of_subjects(const std::vector<Window>& windows,
                                               const std::vector<std::uint32_t>& subjects) {
  const std::set<std::uint32_t> keep(subjects.begin(), subjects.end());
  std::vector<Window> out;
  for (const auto& w : windows)
    if (keep.count(w.subject_id)) out.push_back(w);
  return out;
}

inline std::vector<Fold> experiment_folds(const std::vector<Window>& windows, const ExperimentConfig& cfg) {
  std::set<std::uint32_t> subjects;
  for (const auto& w : windows) subjects.insert(w.subject_id);
  return make_folds({subjects.begin(), subjects.end()}, cfg.protocol, cfg.k_folds, mix_seed(cfg.seed, {31}));
}

inline std::uint64_t fold_seed(const ExperimentConfig& cfg, std::size_t fold) { return mix_seed(cfg.seed, {32, fold}); }

/// Full pretrain -> freeze -> classify evaluation across subject folds.
/// Folds run on up to `jobs` threads; the report does not depend on `jobs`.
inline EvalReport evaluate(const std::vector<Window>& windows, const ExperimentConfig& cfg, std::size_t jobs = 1,
                           std::vector<FoldArtifacts>* artifacts = nullptr) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n_classes = count_classes(windows);
  if (n_classes < 2) throw ValueError("evaluate: need at least 2 classes");
  const auto folds = experiment_folds(windows, cfg);
  EvalReport report;
  report.experiment = cfg.name;
  report.config = to_json(cfg);
  report.folds.resize(folds.size());
  if (artifacts) artifacts->assign(folds.size(), {});
  parallel_for(folds.size(), jobs, [&](std::size_t f) {
    const std::uint64_t seed = fold_seed(cfg, f);
    const auto train = windows_of_subjects(windows, folds[f].train_subjects);
    const PretrainResult pre = pretrain(train, cfg.encoder, cfg.loss, cfg.schedule, seed);
    ClassifierParams clf;
    FoldResult r = classify_fold(windows, folds[f], pre.params, cfg, n_classes, seed, &clf);
    r.fold = f;
    r.pretrain_loss = pre.loss_curve;
    r.initial_loss = pre.initial_loss;
    r.mean_positive_logit = pre.mean_positive_logit;
    r.mean_negative_logit = pre.mean_negative_logit;
    r.pretrain_steps = pre.steps;
    report.folds[f] = std::move(r);
    if (artifacts) (*artifacts)[f] = {pre.params, std::move(clf)};
  });
  report.accuracy = summarize(report.fold_accuracies());
  report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (const auto& f : report.folds)
    for (std::size_t i = 0; i < n_classes; ++i)
      for (std::size_t j = 0; j < n_classes; ++j) report.confusion[i][j] += f.confusion[i][j];
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace ta2cl
