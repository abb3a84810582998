// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ta2cl/contrastive_loss.hpp"
#include "ta2cl/core/error.hpp"
#include "ta2cl/data_synth.hpp"
#include "ta2cl/encoder.hpp"
#include "ta2cl/pipeline/optim.hpp"
#include "ta2cl/pipeline/schedule.hpp"

namespace ta2cl {

struct PretrainResult {
  EncoderParams params;
  std::vector<double> loss_curve;  // mean loss per epoch
  double initial_loss = 0.0;       // first batch, before any update
  /// Mean diagonal (positive) and off-diagonal logit over the final epoch.
  double mean_positive_logit = 0.0;
  double mean_negative_logit = 0.0;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
};

struct StepOutput {
  double loss;
  Mat logits;
};

/// One contrastive step's forward and backward pass. Fills `grads` in the
/// parameter visiting order.
inline StepOutput contrastive_step(const EncoderParams& params, const EncoderConfig& enc_cfg, const LossConfig& loss_cfg,
                                   const std::vector<Window>& windows, const std::vector<PairIndex>& pairs,
                                   std::mt19937_64& dropout_rng, std::vector<Mat>* grads) {
  GradTape tape;
  const auto w = register_params(tape, params, grads != nullptr);
  std::vector<Var> anchors, positives;
  const bool training = grads != nullptr;
  for (const auto& [a, p] : pairs) {
    anchors.push_back(project(encode(tape, tape.constant(windows[a].data), w, enc_cfg, training, &dropout_rng).tokens, w, enc_cfg));
    positives.push_back(project(encode(tape, tape.constant(windows[p].data), w, enc_cfg, training, &dropout_rng).tokens, w, enc_cfg));
  }
  Var logits = ad::contrastive_logits(anchors, positives, loss_cfg);
  Var loss = ad::infonce_from_logits(logits);
  StepOutput out{loss.value()(0, 0), logits.value()};
  if (grads) {
    tape.backward(loss);
    grads->clear();
    w.visit([&](const std::string&, const Var& v) { grads->push_back(v.grad()); });
  }
  return out;
}

/// Contrastive pretraining of encoder and projector on stimulus-aligned
/// cross-subject pairs drawn from `windows`.
inline PretrainResult pretrain(const std::vector<Window>& windows, const EncoderConfig& enc_cfg,
                               const LossConfig& loss_cfg, const TrainSchedule& sched, std::uint64_t seed,
                               const EncoderParams* init = nullptr) {
  enc_cfg.validate();
  loss_cfg.validate();
  sched.validate();
  std::set<std::uint32_t> subjects, stimuli;
  for (const auto& w : windows) {
    subjects.insert(w.subject_id);
    stimuli.insert(w.stimulus_id);
  }
  if (subjects.size() < 2 || stimuli.size() < 2) {
    throw ValueError("pretrain: need >= 2 subjects and >= 2 stimuli, got " + std::to_string(subjects.size()) +
                     " and " + std::to_string(stimuli.size()));
  }
  PairSampler sampler(windows, mix_seed(seed, {11}));
  PretrainResult res;
  res.batch_size = std::min(sched.batch_size, sampler.available_stimuli());
  if (res.batch_size < 2) throw ValueError("pretrain: fewer than 2 stimuli have cross-subject pairs");
  res.params = init ? *init : init_encoder_params(enc_cfg, mix_seed(seed, {12}));
  std::mt19937_64 dropout_rng(mix_seed(seed, {13}));
  const std::size_t steps_per_epoch =
      sched.pretrain.steps_per_epoch
          ? sched.pretrain.steps_per_epoch
          : std::max<std::size_t>(1, (windows.size() + 2 * res.batch_size - 1) / (2 * res.batch_size));
  AdamW opt(sched.pretrain.lr, sched.pretrain.weight_decay);
  std::vector<Mat*> ptrs;
  res.params.visit([&](const std::string&, Mat& m) { ptrs.push_back(&m); });
  std::vector<Mat> grads;
  for (std::size_t epoch = 0; epoch < sched.pretrain.epochs; ++epoch) {
    double sum = 0.0, pos = 0.0, neg = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto pairs = sampler.sample_pairs(res.batch_size);
      const StepOutput out = contrastive_step(res.params, enc_cfg, loss_cfg, windows, pairs, dropout_rng, &grads);
      if (!std::isfinite(out.loss)) {
        throw NumericError("pretrain: non-finite loss at step " + std::to_string(res.steps));
      }
      if (res.steps == 0) res.initial_loss = out.loss;
      opt.step(ptrs, grads);
      ++res.steps;
      sum += out.loss;
      const std::size_t P = out.logits.rows();
      double d = 0.0, off = 0.0;
      for (std::size_t i = 0; i < P; ++i)
        for (std::size_t j = 0; j < P; ++j) (i == j ? d : off) += out.logits(i, j);
      pos += d / static_cast<double>(P);
      neg += off / static_cast<double>(P * (P - 1));
    }
    res.loss_curve.push_back(sum / static_cast<double>(steps_per_epoch));
    res.mean_positive_logit = pos / static_cast<double>(steps_per_epoch);
    res.mean_negative_logit = neg / static_cast<double>(steps_per_epoch);
  }
  for (const Mat* p : ptrs) {
    if (!all_finite(*p)) throw NumericError("pretrain: parameters became non-finite");
  }
  return res;
}

}  // namespace ta2cl
