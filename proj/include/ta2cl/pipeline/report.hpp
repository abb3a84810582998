// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ta2cl/core/error.hpp"

namespace ta2cl {

using Confusion = std::vector<std::vector<std::size_t>>;

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::uint32_t> train_subjects, test_subjects;
  double accuracy = 0.0;  // percent
  Confusion confusion;    // rows: true class, columns: predicted
  std::size_t n_test = 0;
  std::vector<double> pretrain_loss;
  double initial_loss = 0.0;
  double mean_positive_logit = 0.0;
  double mean_negative_logit = 0.0;
  std::size_t pretrain_steps = 0;
  std::size_t classifier_epochs = 0;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;  // percent
  std::string encoder_digest_before, encoder_digest_after;
  std::vector<std::string> warnings;
};

struct Summary {
  double mean = 0.0, std = 0.0;
};

/// Mean and population standard deviation.
inline Summary summarize(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  Summary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(xs.size()));
  return s;
}

inline std::string format_pm(const Summary& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f±%.1f", s.mean, s.std);
  return buf;
}

struct EvalReport {
  std::string experiment;
  std::vector<FoldResult> folds;
  Summary accuracy;
  Confusion confusion;
  nlohmann::ordered_json config;
  double wall_seconds = 0.0;

  std::vector<double> fold_accuracies() const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.accuracy);
    return v;
  }

  /// `timing` is the only field that varies between identical runs.
  nlohmann::ordered_json to_json(bool with_timing = true) const {
    using json = nlohmann::ordered_json;
    json folds_j = json::array();
    for (const auto& f : folds) {
      folds_j.push_back({{"fold", f.fold},
                         {"train_subjects", f.train_subjects},
                         {"test_subjects", f.test_subjects},
                         {"accuracy", f.accuracy},
                         {"n_test", f.n_test},
                         {"confusion", f.confusion},
                         {"pretrain_loss", f.pretrain_loss},
                         {"initial_loss", f.initial_loss},
                         {"mean_positive_logit", f.mean_positive_logit},
                         {"mean_negative_logit", f.mean_negative_logit},
                         {"pretrain_steps", f.pretrain_steps},
                         {"classifier_epochs", f.classifier_epochs},
                         {"best_epoch", f.best_epoch},
                         {"best_val_accuracy", f.best_val_accuracy},
                         {"encoder_digest_before", f.encoder_digest_before},
                         {"encoder_digest_after", f.encoder_digest_after},
                         {"warnings", f.warnings}});
    }
    json j = {{"experiment", experiment},
              {"accuracy", {{"mean", accuracy.mean}, {"std", accuracy.std}, {"formatted", format_pm(accuracy)}}},
              {"confusion", confusion},
              {"folds", folds_j},
              {"config", config}};
    if (with_timing) j["timing"] = {{"wall_seconds", wall_seconds}};
    return j;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "fold,accuracy,n_test,best_val_accuracy,classifier_epochs,final_pretrain_loss\n";
    for (const auto& f : folds) {
      out << f.fold << ',' << f.accuracy << ',' << f.n_test << ',' << f.best_val_accuracy << ','
          << f.classifier_epochs << ',' << (f.pretrain_loss.empty() ? 0.0 : f.pretrain_loss.back()) << '\n';
    }
    return out.str();
  }

  std::string loss_curves_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "fold,epoch,loss\n";
    for (const auto& f : folds)
      for (std::size_t e = 0; e < f.pretrain_loss.size(); ++e) out << f.fold << ',' << e << ',' << f.pretrain_loss[e] << '\n';
    return out.str();
  }
};

inline Confusion confusion_matrix(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred,
                                  std::size_t n_classes) {
  if (truth.size() != pred.size()) throw ShapeError("confusion_matrix: size mismatch");
  Confusion c(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || pred[i] >= n_classes) throw ValueError("confusion_matrix: label out of range");
    ++c[truth[i]][pred[i]];
  }
  return c;
}

/// Percent of the diagonal.
inline double confusion_accuracy(const Confusion& c) {
  std::size_t trace = 0, total = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c[i].size(); ++j) {
      total += c[i][j];
      if (i == j) trace += c[i][j];
    }
  return total ? 100.0 * static_cast<double>(trace) / static_cast<double>(total) : 0.0;
}

}  // namespace ta2cl
