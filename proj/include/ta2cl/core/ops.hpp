// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ta2cl/core/mat.hpp"
#include "ta2cl/core/tape.hpp"

// Differentiable primitives. Every op computes its value eagerly and records
// an adjoint rule on the tape that owns its inputs.
namespace ta2cl::ad {

inline Var matmul(Var a, Var b) {
  GradTape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ta2cl::matmul(a.value(), b.value()), {a, b}, [ia, ib](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    if (Mat* ga = t.grad_target(ia)) add_inplace(*ga, matmul_nt(g, t.value(ib)));
    if (Mat* gb = t.grad_target(ib)) add_inplace(*gb, matmul_tn(t.value(ia), g));
  });
}

/// a * b^T
inline Var matmul_nt(Var a, Var b) {
  GradTape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ta2cl::matmul_nt(a.value(), b.value()), {a, b},
                  [ia, ib](GradTape& t, std::size_t s) {
                    const Mat& g = t.grad(s);
                    if (Mat* ga = t.grad_target(ia)) add_inplace(*ga, ta2cl::matmul(g, t.value(ib)));
                    if (Mat* gb = t.grad_target(ib)) add_inplace(*gb, matmul_tn(g, t.value(ia)));
                  });
}

inline Var add(Var a, Var b) {
  GradTape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ta2cl::add(a.value(), b.value()), {a, b}, [ia, ib](GradTape& t, std::size_t s) {
    t.accumulate(ia, t.grad(s));
    t.accumulate(ib, t.grad(s));
  });
}

inline Var sub(Var a, Var b) {
  GradTape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ta2cl::sub(a.value(), b.value()), {a, b}, [ia, ib](GradTape& t, std::size_t s) {
    t.accumulate(ia, t.grad(s));
    if (Mat* gb = t.grad_target(ib)) add_inplace(*gb, t.grad(s), -1.0);
  });
}

inline Var scale(Var a, double k) {
  GradTape& t = *a.tape();
  const std::size_t ia = a.id();
  return t.record(ta2cl::scale(a.value(), k), {a}, [ia, k](GradTape& t, std::size_t s) {
    if (Mat* ga = t.grad_target(ia)) add_inplace(*ga, t.grad(s), k);
  });
}

inline Var hadamard(Var a, Var b) {
  GradTape& t = *a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(ta2cl::hadamard(a.value(), b.value()), {a, b},
                  [ia, ib](GradTape& t, std::size_t s) {
                    if (Mat* ga = t.grad_target(ia)) add_inplace(*ga, ta2cl::hadamard(t.grad(s), t.value(ib)));
                    if (Mat* gb = t.grad_target(ib)) add_inplace(*gb, ta2cl::hadamard(t.grad(s), t.value(ia)));
                  });
}

/// x (n x m) + b (1 x m) broadcast over rows.
inline Var add_row_bias(Var x, Var b) {
  const Mat& xv = x.value();
  const Mat& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_row_bias: bias " + bv.shape_str() + " does not fit " + xv.shape_str());
  }
  Mat out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv(0, j);
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, b}, [ix, ib](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    t.accumulate(ix, g);
    if (Mat* gb = t.grad_target(ib)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) (*gb)(0, j) += g(i, j);
    }
  });
}

/// x (n x m) + b (n x 1) broadcast over columns.
inline Var add_col_bias(Var x, Var b) {
  const Mat& xv = x.value();
  const Mat& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != xv.rows()) {
    throw ShapeError("add_col_bias: bias " + bv.shape_str() + " does not fit " + xv.shape_str());
  }
  Mat out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v += bv(i, 0);
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, b}, [ix, ib](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    t.accumulate(ix, g);
    if (Mat* gb = t.grad_target(ib)) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (double v : g.row(i)) (*gb)(i, 0) += v;
    }
  });
}

/// Exponential linear unit, alpha = 1. Continuously differentiable.
inline Var elu(Var x) {
  Mat out = x.value();
  for (double& v : out.flat()) v = v > 0.0 ? v : std::expm1(v);
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix](GradTape& t, std::size_t s) {
    Mat* gx = t.grad_target(ix);
    if (!gx) return;
    auto g = t.grad(s).flat();
    auto xv = t.value(ix).flat();
    auto y = t.value(s).flat();
    auto dst = gx->flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * (xv[i] > 0.0 ? 1.0 : y[i] + 1.0);
  });
}

inline Var sum(Var x) {
  const std::size_t ix = x.id();
  return x.tape()->record(Mat(1, 1, ta2cl::sum(x.value())), {x}, [ix](GradTape& t, std::size_t s) {
    Mat* gx = t.grad_target(ix);
    if (!gx) return;
    const double g = t.grad(s)(0, 0);
    for (double& v : gx->flat()) v += g;
  });
}

inline Var transpose(Var x) {
  const std::size_t ix = x.id();
  return x.tape()->record(ta2cl::transpose(x.value()), {x}, [ix](GradTape& t, std::size_t s) {
    if (Mat* gx = t.grad_target(ix)) add_inplace(*gx, ta2cl::transpose(t.grad(s)));
  });
}

/// Vertical concatenation; all parts must share the column count.
inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + parts[0].value().shape_str() + " vs " +
                       p.value().shape_str());
    }
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t r0 = 0;
  for (const Var& p : parts) {
    const Mat& v = p.value();
    std::copy(v.flat().begin(), v.flat().end(), out.flat().begin() + static_cast<std::ptrdiff_t>(r0 * cols));
    r0 += v.rows();
    ids.push_back(p.id());
  }
  return parts[0].tape()->record(std::move(out), parts, [ids](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (Mat* gp = t.grad_target(id)) {
        auto dst = gp->flat();
        for (std::size_t i = 0; i < n; ++i) dst[i] += g.flat()[offset + i];
      }
      offset += n;
    }
  });
}

/// Packs 1x1 nodes into a rows x cols matrix (row-major order of `scalars`).
inline Var assemble(std::span<const Var> scalars, std::size_t rows, std::size_t cols) {
  if (scalars.size() != rows * cols || scalars.empty()) {
    throw ShapeError("assemble: " + std::to_string(scalars.size()) + " scalars for " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids;
  ids.reserve(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Mat& v = scalars[i].value();
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("assemble: input is not scalar");
    out.flat()[i] = v(0, 0);
    ids.push_back(scalars[i].id());
  }
  return scalars[0].tape()->record(std::move(out), scalars, [ids](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (Mat* gp = t.grad_target(ids[i])) (*gp)(0, 0) += g.flat()[i];
    }
  });
}

/// Mean over rows: n x m -> 1 x m.
inline Var mean_rows(Var x) {
  const Mat& xv = x.value();
  Mat out(1, xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out(0, j) += xv(i, j);
  const double inv = 1.0 / static_cast<double>(xv.rows());
  for (double& v : out.flat()) v *= inv;
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, inv](GradTape& t, std::size_t s) {
    Mat* gx = t.grad_target(ix);
    if (!gx) return;
    const Mat& g = t.grad(s);
    for (std::size_t i = 0; i < gx->rows(); ++i)
      for (std::size_t j = 0; j < gx->cols(); ++j) (*gx)(i, j) += g(0, j) * inv;
  });
}

/// Scales every row to unit L2 norm.
inline Var l2_normalize_rows(Var x) {
  const Mat& xv = x.value();
  Mat out = xv;
  std::vector<double> norms(xv.rows());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    norms[i] = std::sqrt(dot(xv.row(i), xv.row(i)));
    if (norms[i] == 0.0) throw NumericError("l2_normalize_rows: zero-norm row " + std::to_string(i));
    for (double& v : out.row(i)) v /= norms[i];
  }
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix, norms](GradTape& t, std::size_t s) {
    Mat* gx = t.grad_target(ix);
    if (!gx) return;
    const Mat& g = t.grad(s);
    const Mat& y = t.value(s);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double gy = dot(g.row(i), y.row(i));
      auto dst = gx->row(i);
      for (std::size_t j = 0; j < y.cols(); ++j) dst[j] += (g(i, j) - gy * y(i, j)) / norms[i];
    }
  });
}

/// Softmax down each column (normalises over rows).
inline Var softmax_cols(Var x) {
  const Mat& xv = x.value();
  Mat out(xv.rows(), xv.cols());
  for (std::size_t j = 0; j < xv.cols(); ++j) {
    double m = xv(0, j);
    for (std::size_t i = 1; i < xv.rows(); ++i) m = std::max(m, xv(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < xv.rows(); ++i) z += (out(i, j) = std::exp(xv(i, j) - m));
    for (std::size_t i = 0; i < xv.rows(); ++i) out(i, j) /= z;
  }
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, [ix](GradTape& t, std::size_t s) {
    Mat* gx = t.grad_target(ix);
    if (!gx) return;
    const Mat& g = t.grad(s);
    const Mat& y = t.value(s);
    for (std::size_t j = 0; j < y.cols(); ++j) {
      double gy = 0.0;
      for (std::size_t i = 0; i < y.rows(); ++i) gy += g(i, j) * y(i, j);
      for (std::size_t i = 0; i < y.rows(); ++i) (*gx)(i, j) += y(i, j) * (g(i, j) - gy);
    }
  });
}

/// Log-sum-exp of a row minus the entry at `target`, stable for any logit
/// magnitude: (max - l_target) + log1p(sum_{j != argmax} exp(l_j - max)).
/// The log1p form keeps tiny but positive losses from rounding to zero.
inline double cross_entropy_row(std::span<const double> logits, std::size_t target,
                                std::span<double> softmax_out) {
  std::size_t arg = 0;
  for (std::size_t j = 1; j < logits.size(); ++j)
    if (logits[j] > logits[arg]) arg = j;
  const double m = logits[arg];
  double rest = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double e = std::exp(logits[j] - m);
    softmax_out[j] = e;
    if (j != arg) rest += e;
  }
  const double z = 1.0 + rest;
  for (double& p : softmax_out) p /= z;
  return (m - logits[target]) + std::log1p(rest);
}

/// Mean softmax cross-entropy of logits (n x c) against integer targets.
inline Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Mat& lv = logits.value();
  if (targets.size() != lv.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     lv.shape_str() + " logits");
  }
  Mat probs(lv.rows(), lv.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.rows(); ++i) {
    if (targets[i] >= lv.cols()) throw ValueError("cross_entropy: target out of range");
    total += cross_entropy_row(lv.row(i), targets[i], probs.row(i));
  }
  const double n = static_cast<double>(lv.rows());
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  const std::size_t il = logits.id();
  return logits.tape()->record(Mat(1, 1, total / n), {logits},
                               [il, tg, probs = std::move(probs), n](GradTape& t, std::size_t s) {
                                 Mat* gl = t.grad_target(il);
                                 if (!gl) return;
                                 const double g = t.grad(s)(0, 0) / n;
                                 for (std::size_t i = 0; i < probs.rows(); ++i) {
                                   for (std::size_t j = 0; j < probs.cols(); ++j) {
                                     (*gl)(i, j) += g * (probs(i, j) - (j == tg[i] ? 1.0 : 0.0));
                                   }
                                 }
                               });
}

// ---------------------------------------------------------------------------
// Temporal convolution family. Activations are (feature rows) x (time cols).

struct SamePadding {
  std::size_t left;
  std::size_t span;  // (taps - 1) * dilation
};

inline SamePadding same_padding(std::size_t taps, std::size_t dilation) {
  const std::size_t span = (taps - 1) * dilation;
  return {span / 2, span};
}

/// Applies each of F temporal filters (F x L) to every input channel (C x T),
/// producing (F*C) x T with row f*C + c. "Same" zero padding.
inline Var temporal_filter_bank(Var x, Var w, Var b) {
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  const std::size_t C = xv.rows(), T = xv.cols(), F = wv.rows(), L = wv.cols();
  if (b.rows() != F || b.cols() != 1) throw ShapeError("temporal_filter_bank: bias must be Fx1");
  const auto pad = same_padding(L, 1);
  Mat out(F * C, T);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t c = 0; c < C; ++c) {
      auto orow = out.row(f * C + c);
      auto xrow = xv.row(c);
      for (std::size_t t = 0; t < T; ++t) {
        double acc = b.value()(f, 0);
        // input index = t + l - left, valid when in [0, T)
        const std::size_t l0 = t < pad.left ? pad.left - t : 0;
        const std::size_t l1 = std::min(L, T + pad.left - t);
        for (std::size_t l = l0; l < l1; ++l) acc += wv(f, l) * xrow[t + l - pad.left];
        orow[t] = acc;
      }
    }
  }
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, w, b}, [=](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    const Mat& xv = t.value(ix);
    const Mat& wv = t.value(iw);
    Mat* gx = t.grad_target(ix);
    Mat* gw = t.grad_target(iw);
    Mat* gb = t.grad_target(ib);
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t c = 0; c < C; ++c) {
        auto grow = g.row(f * C + c);
        auto xrow = xv.row(c);
        for (std::size_t tt = 0; tt < T; ++tt) {
          const double gv = grow[tt];
          if (gv == 0.0) continue;
          if (gb) (*gb)(f, 0) += gv;
          const std::size_t l0 = tt < pad.left ? pad.left - tt : 0;
          const std::size_t l1 = std::min(L, T + pad.left - tt);
          for (std::size_t l = l0; l < l1; ++l) {
            const std::size_t src = tt + l - pad.left;
            if (gw) (*gw)(f, l) += gv * xrow[src];
            if (gx) (*gx)(c, src) += gv * wv(f, l);
          }
        }
      }
    }
  });
}

/// Grouped channel mixing: input has `groups` blocks of C rows; each block g
/// is mixed into M output rows by its own M x C slice of w ((groups*M) x C).
/// Output row g*M + m.
inline Var grouped_mix(Var x, Var w, Var b, std::size_t groups) {
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  if (groups == 0 || xv.rows() % groups != 0 || wv.rows() % groups != 0) {
    throw ShapeError("grouped_mix: rows not divisible by groups");
  }
  const std::size_t C = xv.rows() / groups, M = wv.rows() / groups, T = xv.cols();
  if (wv.cols() != C) {
    throw ShapeError("grouped_mix: weight " + wv.shape_str() + " does not mix " +
                     std::to_string(C) + " channels");
  }
  if (b.rows() != groups * M || b.cols() != 1) throw ShapeError("grouped_mix: bias shape");
  Mat out(groups * M, T);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t m = 0; m < M; ++m) {
      const std::size_t o = g * M + m;
      auto orow = out.row(o);
      std::fill(orow.begin(), orow.end(), b.value()(o, 0));
      for (std::size_t c = 0; c < C; ++c) {
        const double wc = wv(o, c);
        auto xrow = xv.row(g * C + c);
        for (std::size_t t = 0; t < T; ++t) orow[t] += wc * xrow[t];
      }
    }
  }
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, w, b}, [=](GradTape& t, std::size_t s) {
    const Mat& gr = t.grad(s);
    const Mat& xv = t.value(ix);
    const Mat& wv = t.value(iw);
    Mat* gx = t.grad_target(ix);
    Mat* gw = t.grad_target(iw);
    Mat* gb = t.grad_target(ib);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t m = 0; m < M; ++m) {
        const std::size_t o = g * M + m;
        auto grow = gr.row(o);
        if (gb) {
          for (double v : grow) (*gb)(o, 0) += v;
        }
        for (std::size_t c = 0; c < C; ++c) {
          auto xrow = xv.row(g * C + c);
          if (gw) (*gw)(o, c) += dot(grow, xrow);
          if (gx) {
            auto dst = gx->row(g * C + c);
            const double wc = wv(o, c);
            for (std::size_t tt = 0; tt < T; ++tt) dst[tt] += wc * grow[tt];
          }
        }
      }
    }
  });
}

/// Depthwise dilated convolution along time: row r is filtered by row r of
/// w (R x taps) with the given dilation, "same" zero padding.
inline Var depthwise_conv(Var x, Var w, Var b, std::size_t dilation) {
  const Mat& xv = x.value();
  const Mat& wv = w.value();
  const std::size_t R = xv.rows(), T = xv.cols(), L = wv.cols();
  if (wv.rows() != R) {
    throw ShapeError("depthwise_conv: weight " + wv.shape_str() + " for " + xv.shape_str() + " input");
  }
  if (b.rows() != R || b.cols() != 1) throw ShapeError("depthwise_conv: bias shape");
  const auto pad = same_padding(L, dilation);
  Mat out(R, T);
  for (std::size_t r = 0; r < R; ++r) {
    auto orow = out.row(r);
    auto xrow = xv.row(r);
    for (std::size_t t = 0; t < T; ++t) {
      double acc = b.value()(r, 0);
      for (std::size_t l = 0; l < L; ++l) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + l * dilation) -
                                   static_cast<std::ptrdiff_t>(pad.left);
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(T)) acc += wv(r, l) * xrow[static_cast<std::size_t>(src)];
      }
      orow[t] = acc;
    }
  }
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record(std::move(out), {x, w, b}, [=](GradTape& t, std::size_t s) {
    const Mat& g = t.grad(s);
    const Mat& xv = t.value(ix);
    const Mat& wv = t.value(iw);
    Mat* gx = t.grad_target(ix);
    Mat* gw = t.grad_target(iw);
    Mat* gb = t.grad_target(ib);
    for (std::size_t r = 0; r < R; ++r) {
      auto grow = g.row(r);
      auto xrow = xv.row(r);
      for (std::size_t tt = 0; tt < T; ++tt) {
        const double gv = grow[tt];
        if (gv == 0.0) continue;
        if (gb) (*gb)(r, 0) += gv;
        for (std::size_t l = 0; l < L; ++l) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt + l * dilation) -
                                     static_cast<std::ptrdiff_t>(pad.left);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
          if (gw) (*gw)(r, l) += gv * xrow[static_cast<std::size_t>(src)];
          if (gx) (*gx)(r, static_cast<std::size_t>(src)) += gv * wv(r, l);
        }
      }
    }
  });
}

/// Non-overlapping average pooling along time (kernel = stride = k); a
/// trailing remainder shorter than k is dropped.
inline Var avg_pool_cols(Var x, std::size_t k) {
  const Mat& xv = x.value();
  if (k == 0 || xv.cols() < k) {
    throw ShapeError("avg_pool_cols: kernel " + std::to_string(k) + " exceeds length " +
                     std::to_string(xv.cols()));
  }
  const std::size_t Tp = xv.cols() / k;
  const double inv = 1.0 / static_cast<double>(k);
  Mat out(xv.rows(), Tp);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto xrow = xv.row(r);
    for (std::size_t p = 0; p < Tp; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += xrow[p * k + i];
      out(r, p) = acc * inv;
    }
  }
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), {x}, [=](GradTape& t, std::size_t s) {
    Mat* gx = t.grad_target(ix);
    if (!gx) return;
    const Mat& g = t.grad(s);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t p = 0; p < Tp; ++p)
        for (std::size_t i = 0; i < k; ++i) (*gx)(r, p * k + i) += g(r, p) * inv;
  });
}

}  // namespace ta2cl::ad
