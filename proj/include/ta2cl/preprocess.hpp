// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "ta2cl/core/binary_io.hpp"
#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"

namespace ta2cl {

/// A multichannel recording (channels x samples, microvolts) with its trial
/// metadata.
struct Segment {
  Mat data;
  double sample_rate = 0.0;
  std::uint32_t subject_id = 0;
  std::uint32_t stimulus_id = 0;
  std::int32_t label = 0;

  std::size_t channels() const { return data.rows(); }
  std::size_t samples() const { return data.cols(); }

  void validate() const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) throw ValueError("segment sample_rate must be > 0");
    if (!all_finite(data)) throw NumericError("segment contains non-finite samples");
  }
};

/// Amplitude threshold `m` in robust standard deviations, held for at least
/// `n` seconds.
struct ArtifactThresholds {
  double m = 3.0;
  double n = 0.4;

  void validate() const {
    if (!(m > 0.0) || !(n > 0.0)) throw ValueError("artifact thresholds need m > 0 and n > 0");
  }
};

inline std::vector<ArtifactThresholds> default_artifact_thresholds() { return {{3.0, 0.4}, {30.0, 0.01}}; }

/// One biquad in transposed direct form II: b0 b1 b2 / 1 a1 a2.
struct Biquad {
  double b0, b1, b2, a1, a2;

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }

  std::complex<double> response(double omega) const {
    const std::complex<double> z1 = std::polar(1.0, -omega), z2 = z1 * z1;
    return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
  }
};

using Sos = std::vector<Biquad>;

inline std::complex<double> sos_response(const Sos& sos, double freq, double fs) {
  std::complex<double> h = 1.0;
  for (const auto& s : sos) h *= s.response(2.0 * std::numbers::pi * freq / fs);
  return h;
}

namespace detail {

inline std::vector<std::complex<double>> butter_prototype(int order) {
  std::vector<std::complex<double>> poles;
  for (int k = 1; k <= order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
    poles.push_back(std::polar(1.0, theta));
  }
  return poles;
}

inline double prewarp(double f, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f / fs); }

inline std::complex<double> bilinear(std::complex<double> s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

// Pairs each upper-half-plane digital pole with its conjugate.
inline std::vector<std::complex<double>> upper_poles(const std::vector<std::complex<double>>& poles) {
  std::vector<std::complex<double>> out;
  for (const auto& p : poles) {
    if (p.imag() > 0.0) out.push_back(p);
  }
  if (out.size() * 2 != poles.size()) throw NumericError("filter design produced unpaired real poles");
  return out;
}

}  // namespace detail

/// Butterworth bandpass as second-order sections. A prototype of `order`
/// yields `order` sections with zeros at DC and Nyquist; each section is
/// scaled to unit gain at the band's geometric center.
inline Sos butter_bandpass(int order, double lo, double hi, double fs) {
  if (order < 1 || order % 2 != 0) throw ValueError("bandpass prototype order must be even and >= 2");
  if (!(lo > 0.0 && lo < hi && hi < fs / 2.0)) {
    throw ValueError("invalid band edges: need 0 < lo < hi < fs/2, got lo=" + std::to_string(lo) +
                     " hi=" + std::to_string(hi) + " fs=" + std::to_string(fs));
  }
  const double w1 = detail::prewarp(lo, fs), w2 = detail::prewarp(hi, fs);
  const double w0 = std::sqrt(w1 * w2), bw = w2 - w1;
  std::vector<std::complex<double>> digital;
  for (const auto& p : detail::butter_prototype(order)) {
    const std::complex<double> pb = p * bw / 2.0;
    const std::complex<double> root = std::sqrt(pb * pb - w0 * w0);
    digital.push_back(detail::bilinear(pb + root, fs));
    digital.push_back(detail::bilinear(pb - root, fs));
  }
  const double omega0 = 2.0 * std::atan(w0 / (2.0 * fs));
  Sos sos;
  for (const auto& p : detail::upper_poles(digital)) {
    Biquad s{1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)};
    const double g = 1.0 / std::abs(s.response(omega0));
    s.b0 *= g;
    s.b2 *= g;
    sos.push_back(s);
  }
  return sos;
}

/// Butterworth lowpass (even `order`) with unit DC gain per section.
inline Sos butter_lowpass(int order, double cutoff, double fs) {
  if (order < 2 || order % 2 != 0) throw ValueError("lowpass order must be even and >= 2");
  if (!(cutoff > 0.0 && cutoff < fs / 2.0)) throw ValueError("lowpass cutoff must lie in (0, fs/2)");
  const double wc = detail::prewarp(cutoff, fs);
  std::vector<std::complex<double>> digital;
  for (const auto& p : detail::butter_prototype(order)) digital.push_back(detail::bilinear(p * wc, fs));
  Sos sos;
  for (const auto& p : detail::upper_poles(digital)) {
    Biquad s{1.0, 2.0, 1.0, -2.0 * p.real(), std::norm(p)};
    const double g = (1.0 + s.a1 + s.a2) / 4.0;
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
    sos.push_back(s);
  }
  return sos;
}

/// Runs the cascade over x in place. `state` holds (z1, z2) per section.
inline void sos_filter(const Sos& sos, std::vector<double>& x, std::vector<double>& state) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    double z1 = state[2 * k], z2 = state[2 * k + 1];
    for (double& v : x) {
      const double y = s.b0 * v + z1;
      z1 = s.b1 * v - s.a1 * y + z2;
      z2 = s.b2 * v - s.a2 * y;
      v = y;
    }
    state[2 * k] = z1;
    state[2 * k + 1] = z2;
  }
}

/// Initial state for which a constant unit input is already at steady state.
inline std::vector<double> sos_steady_state(const Sos& sos) {
  std::vector<double> zi(2 * sos.size());
  double carried = 1.0;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    const double g = s.dc_gain();
    zi[2 * k] = carried * (g - s.b0);
    zi[2 * k + 1] = carried * (s.b2 - s.a2 * g);
    carried *= g;
  }
  return zi;
}

/// Samples for the slowest pole's impulse response to fall by 1e-4.
inline std::size_t sos_decay_samples(const Sos& sos) {
  double r = 0.0;
  for (const auto& s : sos) {
    const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
    r = std::max({r, std::abs((-s.a1 + disc) / 2.0), std::abs((-s.a1 - disc) / 2.0)});
  }
  if (r <= 0.0) return 0;
  if (r >= 1.0) throw NumericError("unstable filter section");
  return static_cast<std::size_t>(std::ceil(std::log(1e-4) / std::log(r)));
}

enum class PadMode {
  Odd,   // 2*x[0] - x[i]: keeps value and slope, suits lowpass
  Even,  // x[i]: mirror; a DC-blocking filter sees no artificial step
};

/// Zero-phase forward-backward filtering. The signal is reflected at both
/// ends for as long as the slowest pole needs to settle (capped at n - 1),
/// and both passes start from the steady state of their first sample.
inline std::vector<double> filtfilt(const Sos& sos, std::span<const double> x, PadMode mode = PadMode::Odd) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min(std::max(3 * (2 * sos.size() + 1), sos_decay_samples(sos)), n - 1);
  const double odd = mode == PadMode::Odd ? 1.0 : 0.0;
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(odd * (2.0 * x[0] - x[i]) + (1.0 - odd) * x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) {
    ext.push_back(odd * (2.0 * x[n - 1] - x[n - 1 - i]) + (1.0 - odd) * x[n - 1 - i]);
  }

  const std::vector<double> zi = sos_steady_state(sos);
  auto run = [&](std::vector<double>& v) {
    std::vector<double> state(zi.size());
    for (std::size_t i = 0; i < zi.size(); ++i) state[i] = zi[i] * v.front();
    sos_filter(sos, v, state);
  };
  run(ext);
  std::reverse(ext.begin(), ext.end());
  run(ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline Mat filtfilt_rows(const Sos& sos, const Mat& x, PadMode mode = PadMode::Odd) {
  Mat out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto y = filtfilt(sos, x.row(r), mode);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

inline constexpr int kAntiAliasOrder = 8;
inline constexpr int kBandpassOrder = 4;

/// Anti-alias lowpass at 0.45 x target_rate, then keeps every ratio-th sample.
inline Segment downsample(const Segment& seg, double target_rate) {
  seg.validate();
  if (!(target_rate > 0.0)) throw ValueError("downsample: target rate must be > 0");
  const double ratio_f = seg.sample_rate / target_rate;
  const double ratio_r = std::round(ratio_f);
  if (ratio_r < 1.0 || std::abs(ratio_f - ratio_r) > 1e-9 * ratio_f) {
    throw ValueError("downsample: " + std::to_string(seg.sample_rate) + " Hz is not an integer multiple of " +
                     std::to_string(target_rate) + " Hz");
  }
  const auto ratio = static_cast<std::size_t>(ratio_r);
  Segment out = seg;
  out.sample_rate = target_rate;
  if (ratio == 1) return out;
  const Mat filtered = filtfilt_rows(butter_lowpass(kAntiAliasOrder, 0.45 * target_rate, seg.sample_rate), seg.data);
  const std::size_t n = seg.samples() / ratio;
  out.data = Mat(seg.channels(), n);
  for (std::size_t c = 0; c < seg.channels(); ++c)
    for (std::size_t t = 0; t < n; ++t) out.data(c, t) = filtered(c, t * ratio);
  return out;
}

/// Zero-phase Butterworth bandpass; length preserved.
inline Segment bandpass(const Segment& seg, double lo, double hi) {
  seg.validate();
  const Sos sos = butter_bandpass(kBandpassOrder, lo, hi, seg.sample_rate);
  Segment out = seg;
  out.data = filtfilt_rows(sos, seg.data, PadMode::Even);
  return out;
}

/// Median and 1.4826 x median absolute deviation.
inline std::pair<double, double> robust_location_scale(std::span<const double> x) {
  if (x.empty()) throw ValueError("robust scale of an empty channel");
  auto median = [](std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
      m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
  };
  const double med = median({x.begin(), x.end()});
  std::vector<double> dev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dev[i] = std::abs(x[i] - med);
  return {med, 1.4826 * median(std::move(dev))};
}

/// Minimum run, in samples, that counts as lasting n seconds at rate fs.
inline std::size_t min_run_samples(double n, double fs) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * fs)));
}

/// Longest run of consecutive samples with |z| > m. A channel with zero
/// robust scale treats any sample off its median as exceeding.
inline std::size_t longest_exceedance(std::span<const double> x, double m) {
  const auto [med, sigma] = robust_location_scale(x);
  std::size_t run = 0, best = 0;
  for (double v : x) {
    const double dev = std::abs(v - med);
    const bool over = sigma > 0.0 ? dev / sigma > m : dev > 0.0;
    run = over ? run + 1 : 0;
    best = std::max(best, run);
  }
  return best;
}

struct RepairResult {
  Segment segment;
  std::vector<std::size_t> flagged;
};

/// Flags channels whose robust z-score stays above m for at least n seconds
/// under any threshold pair, and replaces each flagged channel by the mean of
/// the clean ones. Clean channels are copied unchanged.
inline RepairResult detect_and_repair(const Segment& seg, const std::vector<ArtifactThresholds>& thresholds) {
  seg.validate();
  if (thresholds.empty()) throw ValueError("detect_and_repair: no threshold pairs");
  for (const auto& t : thresholds) t.validate();
  RepairResult res{seg, {}};
  std::vector<std::size_t> clean;
  for (std::size_t c = 0; c < seg.channels(); ++c) {
    bool bad = false;
    for (const auto& t : thresholds) {
      if (longest_exceedance(seg.data.row(c), t.m) >= min_run_samples(t.n, seg.sample_rate)) {
        bad = true;
        break;
      }
    }
    (bad ? res.flagged : clean).push_back(c);
  }
  if (res.flagged.empty()) return res;
  if (clean.empty()) throw ValueError("detect_and_repair: all channels flagged");
  if (clean.size() < 2) {
    throw ValueError("detect_and_repair: only " + std::to_string(clean.size()) + " clean channel(s) remain, need 2");
  }
  const double inv = 1.0 / static_cast<double>(clean.size());
  for (std::size_t t = 0; t < seg.samples(); ++t) {
    double s = 0.0;
    for (std::size_t c : clean) s += seg.data(c, t);
    for (std::size_t c : res.flagged) res.segment.data(c, t) = s * inv;
  }
  return res;
}

inline constexpr std::string_view kSegmentMagic = "ESEG1";

/// Samples are stored as float32, so values round to single precision.
inline void write_segment(std::ostream& out, const Segment& seg) {
  const auto u32max = std::numeric_limits<std::uint32_t>::max();
  if (seg.channels() > u32max || seg.samples() > u32max) throw ShapeError("segment dimensions exceed u32");
  binary::write_magic(out, kSegmentMagic);
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(seg.channels()));
  binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(seg.samples()));
  binary::write_le<float>(out, static_cast<float>(seg.sample_rate));
  binary::write_le<std::uint32_t>(out, seg.subject_id);
  binary::write_le<std::uint32_t>(out, seg.stimulus_id);
  binary::write_le<std::int32_t>(out, seg.label);
  for (double v : seg.data.flat()) binary::write_le<float>(out, static_cast<float>(v));
}

inline Segment read_segment(std::istream& in) {
  binary::expect_magic(in, kSegmentMagic);
  Segment seg;
  const auto channels = binary::read_le<std::uint32_t>(in);
  const auto samples = binary::read_le<std::uint32_t>(in);
  seg.sample_rate = binary::read_le<float>(in);
  seg.subject_id = binary::read_le<std::uint32_t>(in);
  seg.stimulus_id = binary::read_le<std::uint32_t>(in);
  seg.label = binary::read_le<std::int32_t>(in);
  if (!(seg.sample_rate > 0.0) || !std::isfinite(seg.sample_rate)) throw IoError("ESEG1: invalid sample rate");
  std::vector<double> data;
  data.reserve(std::min<std::size_t>(static_cast<std::size_t>(channels) * samples, 1u << 24));
  for (std::size_t i = 0; i < static_cast<std::size_t>(channels) * samples; ++i) {
    data.push_back(binary::read_le<float>(in));
  }
  seg.data = Mat(channels, samples, std::move(data));
  return seg;
}

}  // namespace ta2cl
