// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/ops.hpp"
#include "ta2cl/core/tape.hpp"
#include "ta2cl/similarity.hpp"

namespace ta2cl {

/// P stimulus-aligned pairs. For anchor p the positive is positives[p] and the
/// negatives are the other P - 1 positives (M = P - 1).
struct ContrastiveBatch {
  std::vector<FeatureSequence> anchors;
  std::vector<FeatureSequence> positives;

  std::size_t size() const { return anchors.size(); }

  void validate() const {
    if (anchors.size() != positives.size()) {
      throw ShapeError("ContrastiveBatch: " + std::to_string(anchors.size()) + " anchors vs " +
                       std::to_string(positives.size()) + " positives");
    }
    if (anchors.size() < 2) {
      throw ValueError("ContrastiveBatch: need P >= 2 pairs so every anchor has a negative");
    }
    const std::size_t d = anchors.front().dim();
    for (std::size_t p = 0; p < anchors.size(); ++p) {
      if (anchors[p].dim() != d || positives[p].dim() != d) {
        throw ShapeError("ContrastiveBatch: sequences disagree on feature dimension");
      }
    }
  }
};

enum class LossMode { Async, GlobalCosine };

inline const char* to_string(LossMode m) { return m == LossMode::Async ? "async" : "global_cosine"; }

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "async") return LossMode::Async;
  if (s == "global_cosine") return LossMode::GlobalCosine;
  throw ValueError("unknown loss mode '" + s + "' (expected async|global_cosine)");
}

struct LossConfig {
  double tau = 0.1;
  AsyncSimConfig sim;
  LossMode mode = LossMode::Async;

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ValueError("LossConfig: tau must be > 0");
    sim.validate();
  }
};

namespace ad {

/// P x P logit matrix on the tape: entry (p, q) is S(U_p, V_q) / tau.
inline Var contrastive_logits(std::span<const Var> anchors, std::span<const Var> positives,
                              const LossConfig& cfg) {
  cfg.validate();
  const std::size_t P = anchors.size();
  if (positives.size() != P) throw ShapeError("contrastive_loss: anchors/positives length mismatch");
  if (P < 2) throw ValueError("contrastive_loss: need P >= 2 pairs");
  std::vector<Var> sims;
  sims.reserve(P * P);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t q = 0; q < P; ++q) {
      Var s = cfg.mode == LossMode::Async ? async_similarity(anchors[p], positives[q], cfg.sim)
                                          : global_cosine(anchors[p], positives[q]);
      if (!std::isfinite(s.value()(0, 0))) {
        throw NumericError("contrastive_loss: non-finite similarity for pair (" +
                           std::to_string(p) + ", " + std::to_string(q) + ")");
      }
      sims.push_back(s);
    }
  }
  return scale(assemble(sims, P, P), 1.0 / cfg.tau);
}

/// InfoNCE over in-batch negatives, averaged over anchors; the target
/// column of row p is p.
inline Var infonce_from_logits(Var logits) {
  std::vector<std::size_t> targets(logits.rows());
  std::iota(targets.begin(), targets.end(), std::size_t{0});
  return cross_entropy(logits, targets);
}

inline Var contrastive_loss(std::span<const Var> anchors, std::span<const Var> positives,
                            const LossConfig& cfg) {
  return infonce_from_logits(contrastive_logits(anchors, positives, cfg));
}

}  // namespace ad

namespace detail {

inline double batch_loss(const ContrastiveBatch& batch, const LossConfig& cfg) {
  batch.validate();
  GradTape tape;
  std::vector<Var> a, p;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    a.push_back(tape.constant(batch.anchors[i].tokens()));
    p.push_back(tape.constant(batch.positives[i].tokens()));
  }
  return ad::contrastive_loss(a, p, cfg).value()(0, 0);
}

}  // namespace detail

/// Async-InfoNCE: InfoNCE whose similarity kernel is async_similarity.
inline double async_infonce(const ContrastiveBatch& batch, LossConfig cfg) {
  cfg.mode = LossMode::Async;
  return detail::batch_loss(batch, cfg);
}

/// Baseline InfoNCE with cosine similarity of flattened sequences.
inline double infonce_global(const ContrastiveBatch& batch, LossConfig cfg) {
  batch.validate();
  const auto& shape = batch.anchors.front().tokens();
  for (std::size_t p = 0; p < batch.size(); ++p) {
    if (!batch.anchors[p].tokens().same_shape(shape) || !batch.positives[p].tokens().same_shape(shape)) {
      throw ShapeError("infonce_global: all sequences must share T and D");
    }
  }
  cfg.mode = LossMode::GlobalCosine;
  return detail::batch_loss(batch, cfg);
}

inline double contrastive_loss(const ContrastiveBatch& batch, const LossConfig& cfg) {
  return cfg.mode == LossMode::Async ? async_infonce(batch, cfg) : infonce_global(batch, cfg);
}

}  // namespace ta2cl
