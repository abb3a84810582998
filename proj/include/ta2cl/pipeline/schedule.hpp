// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ta2cl/core/error.hpp"

namespace ta2cl {

struct PretrainSchedule {
  double lr = 7e-4;
  double weight_decay = 1.5e-4;
  std::size_t epochs = 10;
  /// Optimizer steps per epoch; 0 means one pass over the training windows
  /// (ceil(windows / (2 * batch_size))).
  std::size_t steps_per_epoch = 0;
};

struct ClassifySchedule {
  double lr = 5e-3;
  double weight_decay = 2.2e-3;
  std::size_t max_epochs = 100;
  std::size_t min_epochs = 30;
  std::size_t patience = 30;
  std::vector<std::size_t> hidden{64};
  std::size_t batch_size = 32;
  /// Fraction of training trials held out for early stopping.
  double val_fraction = 0.2;
};

struct TrainSchedule {
  PretrainSchedule pretrain;
  ClassifySchedule classify;
  /// Positive pairs per contrastive batch (capped by available stimuli).
  std::size_t batch_size = 9;

  void validate() const {
    if (!(pretrain.lr > 0.0) || !(pretrain.weight_decay >= 0.0)) {
      throw ConfigError("schedule.pretrain: need lr > 0 and weight_decay >= 0");
    }
    if (pretrain.epochs < 1) throw ConfigError("schedule.pretrain.epochs must be >= 1");
    if (!(classify.lr > 0.0) || !(classify.weight_decay >= 0.0)) {
      throw ConfigError("schedule.classify: need lr > 0 and weight_decay >= 0");
    }
    if (classify.max_epochs < 1) throw ConfigError("schedule.classify.max_epochs must be >= 1");
    if (classify.min_epochs > classify.max_epochs) {
      throw ConfigError("schedule.classify.min_epochs must not exceed max_epochs");
    }
    if (classify.patience < 1) throw ConfigError("schedule.classify.patience must be >= 1");
    if (classify.batch_size < 1) throw ConfigError("schedule.classify.batch_size must be >= 1");
    for (std::size_t h : classify.hidden)
      if (h < 1) throw ConfigError("schedule.classify.hidden widths must be >= 1");
    if (!(classify.val_fraction > 0.0 && classify.val_fraction < 1.0)) {
      throw ConfigError("schedule.classify.val_fraction must lie in (0, 1)");
    }
    if (batch_size < 2) throw ConfigError("schedule.batch_size must be >= 2 (in-batch negatives)");
  }
};

enum class SmoothMethod { Lds, MovingAverage, None };

inline const char* to_string(SmoothMethod m) {
  switch (m) {
    case SmoothMethod::Lds: return "lds";
    case SmoothMethod::MovingAverage: return "moving_average";
    case SmoothMethod::None: return "none";
  }
  return "?";
}

inline SmoothMethod parse_smooth_method(const std::string& s) {
  if (s == "lds") return SmoothMethod::Lds;
  if (s == "moving_average") return SmoothMethod::MovingAverage;
  if (s == "none") return SmoothMethod::None;
  throw ConfigError("unknown smoothing method '" + s + "' (expected lds, moving_average or none)");
}

struct SmoothConfig {
  SmoothMethod method = SmoothMethod::Lds;
  /// Observation-to-process noise variance ratio of the random-walk model.
  double noise_ratio = 10.0;
  /// Centered window for the moving-average fallback (odd).
  std::size_t ma_window = 3;

  void validate() const {
    if (!(noise_ratio > 0.0)) throw ConfigError("smoothing.noise_ratio must be > 0");
    if (ma_window < 1 || ma_window % 2 == 0) throw ConfigError("smoothing.ma_window must be odd and >= 1");
  }
};

}  // namespace ta2cl
