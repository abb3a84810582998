// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"
#include "ta2cl/data_synth.hpp"
#include "ta2cl/encoder.hpp"
#include "ta2cl/pipeline/schedule.hpp"

namespace ta2cl {

/// One z_cls row per window (flattened when per-token features are kept).
/// Parameters are only read; `jobs` threads split the windows.
inline Mat extract_features(const EncoderParams& params, const EncoderConfig& cfg, const std::vector<Window>& windows,
                            std::size_t jobs = 1) {
  if (windows.empty()) throw ValueError("extract_features: no windows");
  const auto first = encode(windows[0].data, params, cfg);
  const std::size_t width = first.z_cls.size();
  Mat out(windows.size(), width);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto enc = encode(windows[i].data, params, cfg);
      if (enc.z_cls.size() != width) throw ShapeError("extract_features: windows differ in length");
      std::copy(enc.z_cls.flat().begin(), enc.z_cls.flat().end(), out.row(i).begin());
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, windows.size());
  if (jobs == 1) {
    work(0, windows.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  const std::size_t chunk = (windows.size() + jobs - 1) / jobs;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&, j] {
      try {
        work(j * chunk, std::min(windows.size(), (j + 1) * chunk));
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Per-dimension mean and standard deviation fitted on training rows.
struct Standardizer {
  std::vector<double> mean, stddev;
  std::vector<std::size_t> constant_dims;
};

inline Standardizer fit_standardizer(const Mat& x, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ValueError("fit_standardizer: no training rows");
  Standardizer s;
  s.mean.assign(x.cols(), 0.0);
  s.stddev.assign(x.cols(), 0.0);
  for (std::size_t r : rows)
    for (std::size_t d = 0; d < x.cols(); ++d) s.mean[d] += x(r, d);
  for (double& m : s.mean) m /= static_cast<double>(rows.size());
  for (std::size_t r : rows)
    for (std::size_t d = 0; d < x.cols(); ++d) {
      const double e = x(r, d) - s.mean[d];
      s.stddev[d] += e * e;
    }
  for (std::size_t d = 0; d < x.cols(); ++d) {
    s.stddev[d] = std::sqrt(s.stddev[d] / static_cast<double>(rows.size()));
    if (!(s.stddev[d] > 1e-12 * (1.0 + std::abs(s.mean[d])))) s.constant_dims.push_back(d);
  }
  return s;
}

/// Zero-variance dimensions map to 0.
inline Mat standardize(const Mat& x, const Standardizer& s) {
  if (s.mean.size() != x.cols()) throw ShapeError("standardize: dimension mismatch");
  Mat out(x.rows(), x.cols());
  std::vector<bool> constant(x.cols(), false);
  for (std::size_t d : s.constant_dims) constant[d] = true;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t d = 0; d < x.cols(); ++d) out(r, d) = constant[d] ? 0.0 : (x(r, d) - s.mean[d]) / s.stddev[d];
  return out;
}

/// Rows of each trial, ordered by interval. Trials are keyed by
/// (subject, stimulus) and listed in order of first appearance.
inline std::vector<std::vector<std::size_t>> trial_rows(const std::vector<Window>& windows) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> index;
  std::vector<std::vector<std::size_t>> trials;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto key = std::make_pair(windows[i].subject_id, windows[i].stimulus_id);
    auto [it, fresh] = index.emplace(key, trials.size());
    if (fresh) trials.emplace_back();
    trials[it->second].push_back(i);
  }
  for (auto& t : trials) {
    std::stable_sort(t.begin(), t.end(),
                     [&](std::size_t a, std::size_t b) { return windows[a].interval < windows[b].interval; });
  }
  return trials;
}

/// Random-walk Kalman filter plus Rauch-Tung-Striebel smoother applied to
/// each column of a (time x dim) sequence. Process variance 1, observation
/// variance `ratio`; the state starts at the first observation with
/// variance `ratio`. The gains depend only on the length, so they are
/// shared by all columns.
inline Mat lds_smooth(const Mat& seq, double ratio) {
  const std::size_t n = seq.rows();
  if (n <= 1) return seq;
  const double q = 1.0, r = ratio;
  std::vector<double> gain(n), post_var(n);
  double p = r;
  gain[0] = 0.0;  // the first observation initializes the mean
  post_var[0] = p;
  for (std::size_t t = 1; t < n; ++t) {
    const double prior = p + q;
    gain[t] = prior / (prior + r);
    p = (1.0 - gain[t]) * prior;
    post_var[t] = p;
  }
  Mat out(n, seq.cols());
  for (std::size_t d = 0; d < seq.cols(); ++d) {
    std::vector<double> m(n);
    m[0] = seq(0, d);
    for (std::size_t t = 1; t < n; ++t) m[t] = m[t - 1] + gain[t] * (seq(t, d) - m[t - 1]);
    out(n - 1, d) = m[n - 1];
    for (std::size_t t = n - 1; t-- > 0;) {
      const double g = post_var[t] / (post_var[t] + q);
      out(t, d) = m[t] + g * (out(t + 1, d) - m[t]);
    }
  }
  return out;
}

/// Centered moving average, window shrunk at the edges.
inline Mat moving_average(const Mat& seq, std::size_t window) {
  const std::size_t n = seq.rows(), half = window / 2;
  Mat out(n, seq.cols());
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= half ? t - half : 0, hi = std::min(n, t + half + 1);
    for (std::size_t d = 0; d < seq.cols(); ++d) {
      double s = 0.0;
      for (std::size_t u = lo; u < hi; ++u) s += seq(u, d);
      out(t, d) = s / static_cast<double>(hi - lo);
    }
  }
  return out;
}

struct SmoothedFeatures {
  Mat features;
  std::vector<std::string> warnings;
};

/// Standardizes with statistics of `train_rows`, then smooths each trial
/// along its time order.
inline SmoothedFeatures smooth_features(const Mat& features, const std::vector<std::vector<std::size_t>>& trials,
                                        const std::vector<std::size_t>& train_rows, const SmoothConfig& cfg) {
  cfg.validate();
  const Standardizer st = fit_standardizer(features, train_rows);
  SmoothedFeatures out{standardize(features, st), {}};
  if (!st.constant_dims.empty()) {
    std::string dims;
    for (std::size_t d : st.constant_dims) dims += (dims.empty() ? "" : ",") + std::to_string(d);
    out.warnings.push_back("zero-variance feature dimensions replaced by 0: " + dims);
  }
  if (cfg.method == SmoothMethod::None) return out;
  for (const auto& rows : trials) {
    Mat seq(rows.size(), features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(out.features.row(rows[i]).begin(), out.features.row(rows[i]).end(), seq.row(i).begin());
    const Mat sm = cfg.method == SmoothMethod::Lds ? lds_smooth(seq, cfg.noise_ratio) : moving_average(seq, cfg.ma_window);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(sm.row(i).begin(), sm.row(i).end(), out.features.row(rows[i]).begin());
  }
  return out;
}

}  // namespace ta2cl
