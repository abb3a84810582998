// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"
#include "ta2cl/core/ops.hpp"
#include "ta2cl/core/tape.hpp"
#include "ta2cl/core/topk.hpp"

namespace ta2cl {

/// T x D matrix of temporal token embeddings; row i is token i.
class FeatureSequence {
 public:
  explicit FeatureSequence(Mat tokens) : tokens_(std::move(tokens)) {
    if (tokens_.rows() < 1 || tokens_.cols() < 1) {
      throw ShapeError("FeatureSequence: needs T >= 1 and D >= 1, got " + tokens_.shape_str());
    }
  }

  const Mat& tokens() const { return tokens_; }
  std::size_t length() const { return tokens_.rows(); }
  std::size_t dim() const { return tokens_.cols(); }

 private:
  Mat tokens_;
};

/// T_u x T_v matrix of token dot products; row i is the similarity set of u_i.
struct SimilarityMatrix {
  Mat scores;
};

enum class Aggregation { Mean, Sum };

struct AsyncSimConfig {
  std::size_t k = 1;
  Aggregation topk_agg = Aggregation::Mean;
  Aggregation token_agg = Aggregation::Mean;
  /// L2-normalise tokens before the dot products (ColBERT-style). Off by default.
  bool normalize_tokens = false;
  /// Report (S(U->V) + S(V->U)) / 2 instead of the directed score.
  bool symmetric = false;

  void validate() const {
    if (k < 1) throw ValueError("AsyncSimConfig: k must be >= 1");
  }
};

inline const char* to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "sum"; }

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "sum") return Aggregation::Sum;
  if (s == "weighted_mean") {
    throw ValueError("aggregation 'weighted_mean' (learned per-token weights) is not supported; use mean or sum");
  }
  throw ValueError("unknown aggregation '" + s + "' (expected mean|sum)");
}

namespace detail {

inline void require_same_dim(const Mat& u, const Mat& v, const char* what) {
  if (u.cols() != v.cols()) {
    throw ShapeError(std::string(what) + ": feature dimension mismatch " + u.shape_str() + " vs " +
                     v.shape_str());
  }
}

inline Mat normalized_rows(const Mat& m) {
  Mat out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double n = std::sqrt(dot(out.row(i), out.row(i)));
    if (n == 0.0) throw NumericError("normalize_tokens: zero-norm token " + std::to_string(i));
    for (double& v : out.row(i)) v /= n;
  }
  return out;
}

/// Directed score plus the (i, j, weight) contributions needed for the
/// subgradient: d score / d scores(i, j) = weight for each selected entry.
struct DirectedScore {
  double value = 0.0;
  Mat weights;  // T_u x T_v, nonzero only at selected entries
};

inline DirectedScore directed_score(const Mat& scores, const AsyncSimConfig& cfg) {
  cfg.validate();
  const std::size_t tu = scores.rows(), tv = scores.cols();
  if (cfg.k > tv) {
    throw ValueError("async_similarity: k=" + std::to_string(cfg.k) + " exceeds T_v=" +
                     std::to_string(tv));
  }
  const double topk_w = cfg.topk_agg == Aggregation::Mean ? 1.0 / static_cast<double>(cfg.k) : 1.0;
  const double token_w = cfg.token_agg == Aggregation::Mean ? 1.0 / static_cast<double>(tu) : 1.0;
  DirectedScore out{0.0, Mat(tu, tv)};
  double total = 0.0;
  for (std::size_t i = 0; i < tu; ++i) {
    double row_sum = 0.0;
    for (std::size_t j : topk_indices(scores.row(i), cfg.k)) {
      row_sum += scores(i, j);
      out.weights(i, j) = topk_w * token_w;
    }
    total += cfg.topk_agg == Aggregation::Mean ? row_sum / static_cast<double>(cfg.k) : row_sum;
  }
  out.value = cfg.token_agg == Aggregation::Mean ? total / static_cast<double>(tu) : total;
  return out;
}

}  // namespace detail

inline SimilarityMatrix pairwise_similarity(const FeatureSequence& u, const FeatureSequence& v) {
  detail::require_same_dim(u.tokens(), v.tokens(), "pairwise_similarity");
  return {matmul_nt(u.tokens(), v.tokens())};
}

/// Late-interaction score: sum over u tokens of the best dot product in v.
inline double maxsim(const FeatureSequence& u, const FeatureSequence& v) {
  const Mat s = pairwise_similarity(u, v).scores;
  double total = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    total += s(i, topk_indices(s.row(i), 1).front());
  }
  return total;
}

/// Top-K soft-matching similarity S(U->V): each u token keeps its K best
/// matches anywhere in v, aggregated per token and then across tokens.
/// Mean/Mean is the default; Sum variants exist for ablations.
inline double async_similarity(const FeatureSequence& u, const FeatureSequence& v,
                               const AsyncSimConfig& cfg) {
  detail::require_same_dim(u.tokens(), v.tokens(), "async_similarity");
  const Mat uu = cfg.normalize_tokens ? detail::normalized_rows(u.tokens()) : u.tokens();
  const Mat vv = cfg.normalize_tokens ? detail::normalized_rows(v.tokens()) : v.tokens();
  const double forward = detail::directed_score(matmul_nt(uu, vv), cfg).value;
  if (!cfg.symmetric) return forward;
  return 0.5 * (forward + detail::directed_score(matmul_nt(vv, uu), cfg).value);
}

/// Cosine similarity of the flattened T x D sequences (global hard alignment).
inline double global_cosine(const FeatureSequence& u, const FeatureSequence& v) {
  if (!u.tokens().same_shape(v.tokens())) {
    throw ShapeError("global_cosine: shape mismatch " + u.tokens().shape_str() + " vs " +
                     v.tokens().shape_str());
  }
  const double nu = frobenius_norm(u.tokens());
  const double nv = frobenius_norm(v.tokens());
  if (nu == 0.0 || nv == 0.0) throw NumericError("global_cosine: zero-norm input");
  return dot(u.tokens().flat(), v.tokens().flat()) / (nu * nv);
}

namespace ad {

namespace detail_sim {

inline Var directed(Var u, Var v, const AsyncSimConfig& cfg) {
  GradTape& t = *u.tape();
  auto scored = ta2cl::detail::directed_score(ta2cl::matmul_nt(u.value(), v.value()), cfg);
  const std::size_t iu = u.id(), iv = v.id();
  return t.record(Mat(1, 1, scored.value), {u, v},
                  [iu, iv, w = std::move(scored.weights)](GradTape& t, std::size_t s) {
                    const double g = t.grad(s)(0, 0);
                    if (Mat* gu = t.grad_target(iu)) add_inplace(*gu, ta2cl::matmul(w, t.value(iv)), g);
                    if (Mat* gv = t.grad_target(iv)) add_inplace(*gv, ta2cl::matmul_tn(w, t.value(iu)), g);
                  });
}

}  // namespace detail_sim

/// Differentiable async_similarity. At ties inside TopK the subgradient goes
/// to the lowest-index selected entries.
inline Var async_similarity(Var u, Var v, const AsyncSimConfig& cfg) {
  ta2cl::detail::require_same_dim(u.value(), v.value(), "async_similarity");
  if (u.rows() < 1 || u.cols() < 1 || v.rows() < 1) throw ShapeError("async_similarity: empty sequence");
  if (cfg.normalize_tokens) {
    u = l2_normalize_rows(u);
    v = l2_normalize_rows(v);
  }
  Var forward = detail_sim::directed(u, v, cfg);
  if (!cfg.symmetric) return forward;
  return scale(add(forward, detail_sim::directed(v, u, cfg)), 0.5);
}

inline Var global_cosine(Var u, Var v) {
  const Mat& uv = u.value();
  const Mat& vv = v.value();
  if (!uv.same_shape(vv)) {
    throw ShapeError("global_cosine: shape mismatch " + uv.shape_str() + " vs " + vv.shape_str());
  }
  const double nu = frobenius_norm(uv);
  const double nv = frobenius_norm(vv);
  if (nu == 0.0 || nv == 0.0) throw NumericError("global_cosine: zero-norm input");
  const double d = dot(uv.flat(), vv.flat());
  const double c = d / (nu * nv);
  const std::size_t iu = u.id(), iv = v.id();
  return u.tape()->record(Mat(1, 1, c), {u, v}, [=](GradTape& t, std::size_t s) {
    const double g = t.grad(s)(0, 0);
    // dc/du = v/(|u||v|) - c u/|u|^2
    if (Mat* gu = t.grad_target(iu)) {
      add_inplace(*gu, t.value(iv), g / (nu * nv));
      add_inplace(*gu, t.value(iu), -g * c / (nu * nu));
    }
    if (Mat* gv = t.grad_target(iv)) {
      add_inplace(*gv, t.value(iu), g / (nu * nv));
      add_inplace(*gv, t.value(iv), -g * c / (nv * nv));
    }
  });
}

}  // namespace ad
}  // namespace ta2cl
