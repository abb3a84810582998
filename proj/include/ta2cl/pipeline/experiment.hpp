// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "ta2cl/contrastive_loss.hpp"
#include "ta2cl/data_synth.hpp"
#include "ta2cl/encoder.hpp"
#include "ta2cl/pipeline/schedule.hpp"

namespace ta2cl {

inline const char* to_string(FoldProtocol p) { return p == FoldProtocol::KFoldSubjects ? "kfold" : "loso"; }

inline FoldProtocol parse_fold_protocol(const std::string& s) {
  if (s == "kfold") return FoldProtocol::KFoldSubjects;
  if (s == "loso") return FoldProtocol::LeaveOneSubjectOut;
  throw ConfigError("unknown fold protocol '" + s + "' (expected kfold or loso)");
}

/// Everything one pretrain -> freeze -> classify evaluation depends on.
struct ExperimentConfig {
  std::string name = "experiment";
  EncoderConfig encoder;
  LossConfig loss;
  TrainSchedule schedule;
  SmoothConfig smoothing;
  FoldProtocol protocol = FoldProtocol::KFoldSubjects;
  std::size_t k_folds = 3;
  std::uint64_t seed = 0;
  /// Permute training labels across trials (chance-level control).
  bool shuffle_labels = false;

  void validate() const {
    encoder.validate();
    try {
      loss.validate();
    } catch (const ValueError& e) {
      throw ConfigError(e.what());
    }
    schedule.validate();
    smoothing.validate();
    if (protocol == FoldProtocol::KFoldSubjects && k_folds < 2) throw ConfigError("folds.k must be >= 2");
  }
};

}  // namespace ta2cl
