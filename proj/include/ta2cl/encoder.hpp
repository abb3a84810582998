// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ta2cl/checkpoint.hpp"
#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"
#include "ta2cl/core/ops.hpp"
#include "ta2cl/core/tape.hpp"
#include "ta2cl/similarity.hpp"

namespace ta2cl {

enum class ZclsPooling {
  Mean,  // one D-vector per window, averaged over tokens
  None,  // keep the T' x D attention-weighted tokens
};

/// Spatio-temporal encoder hyperparameters.
///
/// Layer order: temporal filter bank (F filters of length L applied to every
/// electrode) -> four branches, each mixing electrodes within a filter group
/// into M maps and then applying a dilated depthwise temporal convolution,
/// ELU -> concatenation (D = 4 * M * F) -> average pooling (kernel = stride =
/// avg_pool_len) -> depthwise temporal smoother -> channel attention ->
/// dropout. All temporal convolutions use "same" zero padding, so
/// T' = floor(T / avg_pool_len).
struct EncoderConfig {
  std::size_t channels = 32;
  std::size_t n_time_filters = 16;
  std::size_t time_filter_len = 30;
  std::size_t n_ms_filters = 4;
  std::size_t ms_filter_time_len = 3;
  std::array<std::size_t, 4> dilation_array{1, 3, 6, 12};
  std::size_t avg_pool_len = 15;
  std::size_t time_smoother_len = 3;
  double dropout = 0.1;
  bool attention_enabled = true;
  /// Width of the squeeze layer in the attention gate; 0 means max(1, D / 4).
  std::size_t attention_hidden = 0;
  /// Output width of the contrastive projector; 0 means D.
  std::size_t projector_dim = 0;
  ZclsPooling zcls_pooling = ZclsPooling::Mean;

  std::size_t token_dim() const { return 4 * n_ms_filters * n_time_filters; }
  std::size_t attention_width() const {
    return attention_hidden ? attention_hidden : std::max<std::size_t>(1, token_dim() / 4);
  }
  std::size_t projector_width() const { return projector_dim ? projector_dim : token_dim(); }
  std::size_t token_count(std::size_t samples) const { return samples / avg_pool_len; }

  /// Shortest input that yields at least one token and covers the widest
  /// dilated kernel.
  std::size_t min_input_len() const {
    const std::size_t widest = (ms_filter_time_len - 1) * dilation_array.back() + 1;
    return std::max({time_filter_len, widest, avg_pool_len});
  }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) throw ConfigError(std::string("encoder.") + name + " must be >= 1");
    };
    positive(channels, "channels");
    positive(n_time_filters, "n_time_filters");
    positive(time_filter_len, "time_filter_len");
    positive(n_ms_filters, "n_ms_filters");
    positive(ms_filter_time_len, "ms_filter_time_len");
    positive(avg_pool_len, "avg_pool_len");
    positive(time_smoother_len, "time_smoother_len");
    for (std::size_t i = 0; i < dilation_array.size(); ++i) {
      positive(dilation_array[i], "dilation_array");
      if (i > 0 && dilation_array[i] <= dilation_array[i - 1]) {
        throw ConfigError("encoder.dilation_array must be strictly increasing");
      }
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("encoder.dropout must lie in [0, 1)");
  }
};

enum class EncoderPreset { SeedCls3, SeedVCls5, FacedCls2, FacedCls9 };

/// Published per-dataset settings. SEED/SEED-V record 62 electrodes, FACED 32.
inline EncoderConfig preset_config(EncoderPreset p) {
  EncoderConfig c;
  c.n_time_filters = 16;
  c.time_filter_len = 30;
  c.n_ms_filters = 4;
  c.ms_filter_time_len = 3;
  c.avg_pool_len = 15;
  c.time_smoother_len = 3;
  c.dropout = 0.1;
  switch (p) {
    case EncoderPreset::SeedCls3:
    case EncoderPreset::SeedVCls5:
      c.channels = 62;
      c.dilation_array = {1, 3, 6, 12};
      break;
    case EncoderPreset::FacedCls2:
      c.channels = 32;
      c.dilation_array = {1, 3, 6, 12};
      break;
    case EncoderPreset::FacedCls9:
      c.channels = 32;
      c.dilation_array = {1, 6, 12, 24};
      break;
  }
  return c;
}

template <class T>
struct BranchWeights {
  T mix_w, mix_b, conv_w, conv_b;
  friend bool operator==(const BranchWeights&, const BranchWeights&) = default;
};

/// All learnable tensors of the encoder and its projector. T is Mat for
/// stored parameters and Var for a copy registered on a tape.
template <class T>
struct EncoderWeights {
  T temporal_w, temporal_b;
  std::array<BranchWeights<T>, 4> branches;
  T smoother_w, smoother_b;
  T att_w1, att_b1, att_w2, att_b2;
  T proj_w1, proj_b1, proj_w2, proj_b2;
  friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;

  /// Calls f(name, member) in checkpoint order.
  template <class Self, class F>
  static void for_each(Self& self, F&& f) {
    f("temporal.weight", self.temporal_w);
    f("temporal.bias", self.temporal_b);
    for (std::size_t b = 0; b < 4; ++b) {
      const std::string p = "branch" + std::to_string(b) + ".";
      f(p + "mix.weight", self.branches[b].mix_w);
      f(p + "mix.bias", self.branches[b].mix_b);
      f(p + "conv.weight", self.branches[b].conv_w);
      f(p + "conv.bias", self.branches[b].conv_b);
    }
    f("smoother.weight", self.smoother_w);
    f("smoother.bias", self.smoother_b);
    f("attention.squeeze.weight", self.att_w1);
    f("attention.squeeze.bias", self.att_b1);
    f("attention.excite.weight", self.att_w2);
    f("attention.excite.bias", self.att_b2);
    f("projector.0.weight", self.proj_w1);
    f("projector.0.bias", self.proj_b1);
    f("projector.1.weight", self.proj_w2);
    f("projector.1.bias", self.proj_b2);
  }
  template <class F> void visit(F&& f) { for_each(*this, f); }
  template <class F> void visit(F&& f) const { for_each(*this, f); }
};

using EncoderParams = EncoderWeights<Mat>;

struct ParamShape {
  std::string name;
  std::size_t rows, cols, fan_in;
  bool is_bias;
};

/// Parameter shapes derived from the configuration alone.
inline std::vector<ParamShape> parameter_shapes(const EncoderConfig& cfg) {
  const std::size_t F = cfg.n_time_filters, M = cfg.n_ms_filters, C = cfg.channels;
  const std::size_t D = cfg.token_dim(), H = cfg.attention_width(), P = cfg.projector_width();
  std::vector<ParamShape> s;
  s.push_back({"temporal.weight", F, cfg.time_filter_len, cfg.time_filter_len, false});
  s.push_back({"temporal.bias", F, 1, 0, true});
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string p = "branch" + std::to_string(b) + ".";
    s.push_back({p + "mix.weight", F * M, C, C, false});
    s.push_back({p + "mix.bias", F * M, 1, 0, true});
    s.push_back({p + "conv.weight", F * M, cfg.ms_filter_time_len, cfg.ms_filter_time_len, false});
    s.push_back({p + "conv.bias", F * M, 1, 0, true});
  }
  s.push_back({"smoother.weight", D, cfg.time_smoother_len, cfg.time_smoother_len, false});
  s.push_back({"smoother.bias", D, 1, 0, true});
  s.push_back({"attention.squeeze.weight", H, D, D, false});
  s.push_back({"attention.squeeze.bias", H, 1, 0, true});
  s.push_back({"attention.excite.weight", D, H, H, false});
  s.push_back({"attention.excite.bias", D, 1, 0, true});
  s.push_back({"projector.0.weight", D, P, D, false});
  s.push_back({"projector.0.bias", 1, P, 0, true});
  s.push_back({"projector.1.weight", P, P, P, false});
  s.push_back({"projector.1.bias", 1, P, 0, true});
  return s;
}

/// Weights uniform in +-sqrt(1 / fan_in), biases zero.
inline EncoderParams init_encoder_params(const EncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const auto shapes = parameter_shapes(cfg);
  std::size_t i = 0;
  EncoderParams p;
  p.visit([&](const std::string&, Mat& m) {
    const auto& s = shapes[i++];
    m = Mat(s.rows, s.cols);
    if (s.is_bias) return;
    const double bound = std::sqrt(1.0 / static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : m.flat()) v = u(rng);
  });
  return p;
}

/// Zeroes the last projector layer so project() is the identity (the
/// projector is residual when its width equals D).
inline void make_projector_identity(EncoderParams& p) {
  p.proj_w2 = Mat(p.proj_w2.rows(), p.proj_w2.cols());
  p.proj_b2 = Mat(p.proj_b2.rows(), p.proj_b2.cols());
}

inline std::vector<NamedMat> to_named(const EncoderParams& p) {
  std::vector<NamedMat> out;
  p.visit([&](const std::string& name, const Mat& m) { out.push_back({name, m}); });
  return out;
}

inline std::string params_digest(const EncoderParams& p) { return digest(to_named(p)); }

/// Rebuilds parameters from checkpoint entries, checking every name and
/// shape against what `cfg` implies.
inline EncoderParams from_named(const std::vector<NamedMat>& entries, const EncoderConfig& cfg) {
  const auto shapes = parameter_shapes(cfg);
  if (entries.size() != shapes.size()) {
    throw ShapeError("checkpoint has " + std::to_string(entries.size()) + " tensors, config expects " +
                     std::to_string(shapes.size()));
  }
  EncoderParams p;
  std::size_t i = 0;
  p.visit([&](const std::string& name, Mat& m) {
    const auto& e = entries[i];
    const auto& s = shapes[i];
    ++i;
    if (e.name != name) throw ShapeError("checkpoint tensor '" + e.name + "' where '" + name + "' expected");
    if (e.value.rows() != s.rows || e.value.cols() != s.cols) {
      throw ShapeError("checkpoint tensor '" + name + "' is " + e.value.shape_str() + ", config expects " +
                       std::to_string(s.rows) + "x" + std::to_string(s.cols));
    }
    m = e.value;
  });
  return p;
}

inline void save_encoder(std::ostream& out, const EncoderParams& p) { write_checkpoint(out, to_named(p)); }

inline EncoderParams load_encoder(std::istream& in, const EncoderConfig& cfg) {
  return from_named(read_checkpoint(in), cfg);
}

/// Registers each parameter on the tape (trainable leaves or constants).
inline EncoderWeights<Var> register_params(GradTape& tape, const EncoderParams& p, bool trainable) {
  std::vector<const Mat*> src;
  p.visit([&](const std::string&, const Mat& m) { src.push_back(&m); });
  EncoderWeights<Var> out;
  std::size_t i = 0;
  out.visit([&](const std::string&, Var& v) {
    v = trainable ? tape.leaf(*src[i]) : tape.constant(*src[i]);
    ++i;
  });
  return out;
}

struct EncodedVars {
  Var tokens;     // T' x D
  Var z_cls;      // 1 x D (Mean pooling) or T' x D
  Mat attention;  // D x T' gate values; all ones when attention is off
};

/// Forward pass on the tape. `dropout_rng` is required when training with
/// dropout > 0 and ignored otherwise.
inline EncodedVars encode(GradTape& tape, Var x, const EncoderWeights<Var>& w, const EncoderConfig& cfg,
                          bool training, std::mt19937_64* dropout_rng = nullptr) {
  const Mat& xv = x.value();
  if (xv.rows() != cfg.channels) {
    throw ShapeError("encode: input has " + std::to_string(xv.rows()) + " channels, config expects " +
                     std::to_string(cfg.channels));
  }
  if (xv.cols() < cfg.min_input_len()) {
    throw ShapeError("encode: input length " + std::to_string(xv.cols()) + " shorter than receptive field " +
                     std::to_string(cfg.min_input_len()));
  }
  const std::size_t F = cfg.n_time_filters;
  Var h = ad::temporal_filter_bank(x, w.temporal_w, w.temporal_b);
  std::vector<Var> branches;
  for (std::size_t b = 0; b < 4; ++b) {
    const auto& bw = w.branches[b];
    Var mixed = ad::grouped_mix(h, bw.mix_w, bw.mix_b, F);
    branches.push_back(ad::elu(ad::depthwise_conv(mixed, bw.conv_w, bw.conv_b, cfg.dilation_array[b])));
  }
  Var features = ad::concat_rows(branches);
  Var pooled = ad::avg_pool_cols(features, cfg.avg_pool_len);
  Var smoothed = ad::depthwise_conv(pooled, w.smoother_w, w.smoother_b, 1);

  EncodedVars out;
  Var attended = smoothed;
  if (cfg.attention_enabled) {
    // Squeeze-excite gate per pooled time step; softmax over the D feature
    // channels, rescaled so the gates sum to D (uniform gates == identity).
    Var squeeze = ad::elu(ad::add_col_bias(ad::matmul(w.att_w1, smoothed), w.att_b1));
    Var logits = ad::add_col_bias(ad::matmul(w.att_w2, squeeze), w.att_b2);
    Var gates = ad::scale(ad::softmax_cols(logits), static_cast<double>(cfg.token_dim()));
    out.attention = gates.value();
    attended = ad::hadamard(smoothed, gates);
  } else {
    out.attention = Mat(smoothed.rows(), smoothed.cols(), 1.0);
  }
  if (training && cfg.dropout > 0.0) {
    if (!dropout_rng) throw ValueError("encode: training with dropout needs an rng");
    std::bernoulli_distribution keep(1.0 - cfg.dropout);
    Mat mask(attended.rows(), attended.cols());
    const double inv = 1.0 / (1.0 - cfg.dropout);
    for (double& m : mask.flat()) m = keep(*dropout_rng) ? inv : 0.0;
    attended = ad::hadamard(attended, tape.constant(std::move(mask)));
  }
  out.tokens = ad::transpose(attended);
  out.z_cls = cfg.zcls_pooling == ZclsPooling::Mean ? ad::mean_rows(out.tokens) : out.tokens;
  return out;
}

/// Per-token projector: residual two-layer MLP when its width equals D,
/// plain two-layer MLP otherwise. Token count is preserved.
inline Var project(Var tokens, const EncoderWeights<Var>& w, const EncoderConfig& cfg) {
  if (tokens.cols() != cfg.token_dim()) {
    throw ShapeError("project: tokens have D=" + std::to_string(tokens.cols()) + ", encoder emits D=" +
                     std::to_string(cfg.token_dim()));
  }
  Var hidden = ad::elu(ad::add_row_bias(ad::matmul(tokens, w.proj_w1), w.proj_b1));
  Var out = ad::add_row_bias(ad::matmul(hidden, w.proj_w2), w.proj_b2);
  if (cfg.projector_width() == cfg.token_dim()) out = ad::add(out, tokens);
  return out;
}

struct TokenOutput {
  FeatureSequence tokens;
  Mat attention_weights;
  Mat z_cls;
};

/// Inference-mode encode (dropout off). Parameters are read, never modified.
inline TokenOutput encode(const Mat& x, const EncoderParams& params, const EncoderConfig& cfg) {
  GradTape tape;
  auto w = register_params(tape, params, false);
  auto out = encode(tape, tape.constant(x), w, cfg, false);
  return {FeatureSequence(out.tokens.value()), std::move(out.attention), out.z_cls.value()};
}

inline FeatureSequence project(const FeatureSequence& tokens, const EncoderParams& params, const EncoderConfig& cfg) {
  GradTape tape;
  auto w = register_params(tape, params, false);
  return FeatureSequence(project(tape.constant(tokens.tokens()), w, cfg).value());
}

}  // namespace ta2cl
