// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"
#include "ta2cl/core/ops.hpp"
#include "ta2cl/core/tape.hpp"
#include "ta2cl/pipeline/optim.hpp"
#include "ta2cl/pipeline/schedule.hpp"

namespace ta2cl {

/// Feed-forward classifier: ELU hidden layers, linear output of width
/// n_classes. weights[i] is in x out, biases[i] is 1 x out.
struct ClassifierParams {
  std::vector<Mat> weights, biases;

  std::size_t n_classes() const { return weights.empty() ? 0 : weights.back().cols(); }
  std::size_t input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

inline ClassifierParams init_classifier(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                        std::size_t n_classes, std::uint64_t seed) {
  if (input_dim < 1 || n_classes < 2) throw ValueError("classifier needs input_dim >= 1 and >= 2 classes");
  std::mt19937_64 rng(seed);
  ClassifierParams p;
  std::size_t in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(n_classes);
  for (std::size_t out : widths) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat w(in, out);
    for (double& v : w.flat()) v = u(rng);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(1, out);
    in = out;
  }
  return p;
}

inline Var classifier_logits(Var x, const std::vector<Var>& w, const std::vector<Var>& b) {
  Var h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    h = ad::add_row_bias(ad::matmul(h, w[i]), b[i]);
    if (i + 1 < w.size()) h = ad::elu(h);
  }
  return h;
}

/// Row-wise class probabilities.
inline Mat predict_proba(const ClassifierParams& p, const Mat& x) {
  if (x.cols() != p.input_dim()) {
    throw ShapeError("predict_proba: features have " + std::to_string(x.cols()) + " dims, classifier expects " +
                     std::to_string(p.input_dim()));
  }
  GradTape tape;
  std::vector<Var> w, b;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    w.push_back(tape.constant(p.weights[i]));
    b.push_back(tape.constant(p.biases[i]));
  }
  Mat logits = classifier_logits(tape.constant(x), w, b).value();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) z += (v = std::exp(v - m));
    for (double& v : row) v /= z;
  }
  return logits;
}

inline std::vector<std::size_t> predict(const ClassifierParams& p, const Mat& x) {
  const Mat probs = predict_proba(p, x);
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    auto row = probs.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

inline double accuracy(const std::vector<std::size_t>& pred, const std::vector<std::size_t>& truth) {
  if (pred.size() != truth.size() || pred.empty()) throw ValueError("accuracy: size mismatch or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct ClassifierTrace {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_accuracy;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

struct TrainedClassifier {
  ClassifierParams params;
  ClassifierTrace trace;
};

inline Mat select_rows(const Mat& x, const std::vector<std::size_t>& rows) {
  Mat out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  return out;
}

/// Minibatch cross-entropy with AdamW. Keeps the parameters of the first
/// epoch reaching the best validation accuracy; stops once `patience`
/// epochs pass without improvement, but never before min_epochs.
inline TrainedClassifier train_classifier(const Mat& x_train, const std::vector<std::size_t>& y_train,
                                          const Mat& x_val, const std::vector<std::size_t>& y_val,
                                          std::size_t n_classes, const ClassifySchedule& sched, std::uint64_t seed) {
  if (x_train.rows() != y_train.size() || x_val.rows() != y_val.size()) {
    throw ShapeError("train_classifier: feature/label count mismatch");
  }
  if (x_train.rows() == 0 || x_val.rows() == 0) throw ValueError("train_classifier: empty train or validation split");
  std::vector<bool> seen(n_classes, false);
  for (std::size_t y : y_train) {
    if (y >= n_classes) throw ValueError("train_classifier: label " + std::to_string(y) + " out of range");
    seen[y] = true;
  }
  for (std::size_t c = 0; c < n_classes; ++c)
    if (!seen[c]) throw ValueError("train_classifier: class " + std::to_string(c) + " absent from training labels");

  std::mt19937_64 rng(seed);
  TrainedClassifier res{init_classifier(x_train.cols(), sched.hidden, n_classes, rng()), {}};
  ClassifierParams params = res.params;
  AdamW opt(sched.lr, sched.weight_decay);
  std::vector<std::size_t> order(x_train.rows());
  std::iota(order.begin(), order.end(), 0);
  double best_acc = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < sched.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += sched.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + sched.batch_size)));
      std::vector<std::size_t> targets;
      for (std::size_t i : idx) targets.push_back(y_train[i]);
      GradTape tape;
      std::vector<Var> w, b;
      for (std::size_t i = 0; i < params.weights.size(); ++i) {
        w.push_back(tape.leaf(params.weights[i]));
        b.push_back(tape.leaf(params.biases[i]));
      }
      Var loss = ad::cross_entropy(classifier_logits(tape.constant(select_rows(x_train, idx)), w, b), targets);
      tape.backward(loss);
      if (!std::isfinite(loss.value()(0, 0))) throw NumericError("classifier loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss.value()(0, 0) * static_cast<double>(idx.size());
      std::vector<Mat*> ptrs;
      std::vector<Mat> grads;
      for (std::size_t i = 0; i < params.weights.size(); ++i) {
        ptrs.push_back(&params.weights[i]);
        grads.push_back(w[i].grad());
        ptrs.push_back(&params.biases[i]);
        grads.push_back(b[i].grad());
      }
      opt.step(ptrs, grads);
    }
    res.trace.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const double acc = accuracy(predict(params, x_val), y_val);
    res.trace.val_accuracy.push_back(acc);
    res.trace.epochs_run = epoch + 1;
    if (acc > best_acc) {
      best_acc = acc;
      res.trace.best_epoch = epoch;
      res.params = params;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= sched.patience && epoch + 1 >= sched.min_epochs) break;
  }
  return res;
}

}  // namespace ta2cl
