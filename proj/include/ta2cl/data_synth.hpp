// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ta2cl/core/error.hpp"
#include "ta2cl/core/mat.hpp"
#include "ta2cl/preprocess.hpp"

namespace ta2cl {

/// Derives an independent 64-bit stream seed from a base seed and a tag
/// tuple (splitmix64 finalizer), so every trial can be generated on its own.
inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  auto finalize = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = finalize(seed);
  for (std::uint64_t t : tags) h = finalize(h ^ finalize(t));
  return h;
}

/// Synthetic cross-subject recordings: every stimulus evokes a class-keyed
/// oscillatory burst that each subject expresses at its own latency.
struct SynthSpec {
  std::size_t n_subjects = 6;
  std::size_t n_stimuli = 9;
  std::size_t n_classes = 3;
  std::size_t channels = 8;
  double sample_rate = 125.0;
  double window_len = 2.0;         // seconds
  double pattern_len = 1.0;        // seconds
  double max_latency_shift = 0.8;  // seconds
  double noise_sigma = 0.5;
  std::pair<double, double> subject_gain_range{0.8, 1.2};
  std::uint64_t seed = 0;
  /// Consecutive windows recorded per (subject, stimulus); each carries its
  /// own burst and latency.
  std::size_t windows_per_trial = 4;
  /// Amplitude of the stimulus-specific component relative to the class one.
  double stimulus_variation = 0.3;
  /// AR(1) coefficient of the background noise (0 = white).
  double noise_ar = 0.9;

  std::size_t window_samples() const { return static_cast<std::size_t>(std::llround(window_len * sample_rate)); }
  std::size_t pattern_samples() const { return static_cast<std::size_t>(std::llround(pattern_len * sample_rate)); }
  std::size_t max_shift_samples() const {
    return static_cast<std::size_t>(std::floor(max_latency_shift * sample_rate + 1e-9));
  }
  double class_frequency(std::size_t cls) const { return 4.0 + 3.0 * static_cast<double>(cls); }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v < 1) throw ConfigError(std::string("synth.") + name + " must be >= 1");
    };
    positive(n_subjects, "n_subjects");
    positive(n_stimuli, "n_stimuli");
    positive(n_classes, "n_classes");
    positive(channels, "channels");
    positive(windows_per_trial, "windows_per_trial");
    if (n_stimuli % n_classes != 0) throw ConfigError("synth.n_stimuli must be divisible by synth.n_classes");
    if (!(sample_rate > 0.0)) throw ConfigError("synth.sample_rate must be > 0");
    if (!(pattern_len > 0.0) || !(window_len > 0.0) || !(max_latency_shift >= 0.0)) {
      throw ConfigError("synth: window_len and pattern_len must be > 0, max_latency_shift >= 0");
    }
    if (pattern_len + max_latency_shift > window_len + 1e-12 ||
        pattern_samples() + max_shift_samples() > window_samples()) {
      throw ConfigError("synth: pattern_len + max_latency_shift exceeds window_len");
    }
    if (pattern_samples() < 2) throw ConfigError("synth.pattern_len shorter than two samples");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synth.noise_sigma must be >= 0");
    const auto [lo, hi] = subject_gain_range;
    if (!(lo > 0.0 && lo <= hi)) throw ConfigError("synth.subject_gain_range must satisfy 0 < lo <= hi");
    if (!(stimulus_variation >= 0.0)) throw ConfigError("synth.stimulus_variation must be >= 0");
    if (!(noise_ar >= 0.0 && noise_ar < 1.0)) throw ConfigError("synth.noise_ar must lie in [0, 1)");
    if (class_frequency(n_classes - 1) >= 0.45 * sample_rate) {
      throw ConfigError("synth: too many classes for the sample rate (class frequencies reach Nyquist)");
    }
  }
};

inline std::size_t stimulus_class(const SynthSpec& spec, std::size_t stimulus) { return stimulus % spec.n_classes; }

/// Burst onset, in samples from the window start.
inline std::size_t trial_latency(const SynthSpec& spec, std::size_t subject, std::size_t stimulus,
                                 std::size_t window) {
  std::mt19937_64 rng(mix_seed(spec.seed, {1, subject, stimulus, window}));
  return std::uniform_int_distribution<std::size_t>(0, spec.max_shift_samples())(rng);
}

inline double subject_gain(const SynthSpec& spec, std::size_t subject) {
  std::mt19937_64 rng(mix_seed(spec.seed, {2, subject}));
  const auto [lo, hi] = spec.subject_gain_range;
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

namespace detail {

inline std::vector<double> unit_spatial(std::mt19937_64& rng, std::size_t channels) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(channels);
  double n = 0.0;
  for (double& x : v) {
    x = g(rng);
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x *= std::sqrt(static_cast<double>(channels)) / n;
  return v;
}

}  // namespace detail

/// Noise-free burst (channels x pattern_samples) evoked by `stimulus`.
inline Mat stimulus_pattern(const SynthSpec& spec, std::size_t stimulus) {
  const std::size_t cls = stimulus_class(spec, stimulus), L = spec.pattern_samples();
  std::mt19937_64 class_rng(mix_seed(spec.seed, {3, cls}));
  const auto class_map = detail::unit_spatial(class_rng, spec.channels);
  std::mt19937_64 stim_rng(mix_seed(spec.seed, {4, stimulus}));
  const auto stim_map = detail::unit_spatial(stim_rng, spec.channels);
  const double f_stim = std::uniform_real_distribution<double>(3.0, 0.3 * spec.sample_rate)(stim_rng);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(stim_rng);
  const double f_cls = spec.class_frequency(cls);
  Mat p(spec.channels, L);
  for (std::size_t t = 0; t < L; ++t) {
    const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(L - 1));
    const double time = static_cast<double>(t) / spec.sample_rate;
    const double a = std::sin(2.0 * std::numbers::pi * f_cls * time);
    const double b = spec.stimulus_variation * std::sin(2.0 * std::numbers::pi * f_stim * time + phase);
    for (std::size_t c = 0; c < spec.channels; ++c) p(c, t) = env * (class_map[c] * a + stim_map[c] * b);
  }
  return p;
}

/// One Segment per (subject, stimulus), subject-major. Each holds
/// windows_per_trial consecutive windows.
inline std::vector<Segment> generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t W = spec.window_samples(), L = spec.pattern_samples();
  std::vector<Mat> patterns;
  for (std::size_t s = 0; s < spec.n_stimuli; ++s) patterns.push_back(stimulus_pattern(spec, s));
  std::vector<Segment> out;
  out.reserve(spec.n_subjects * spec.n_stimuli);
  const double innov = std::sqrt(1.0 - spec.noise_ar * spec.noise_ar);
  for (std::size_t subj = 0; subj < spec.n_subjects; ++subj) {
    const double gain = subject_gain(spec, subj);
    for (std::size_t stim = 0; stim < spec.n_stimuli; ++stim) {
      Segment seg;
      seg.sample_rate = spec.sample_rate;
      seg.subject_id = static_cast<std::uint32_t>(subj);
      seg.stimulus_id = static_cast<std::uint32_t>(stim);
      seg.label = static_cast<std::int32_t>(stimulus_class(spec, stim));
      seg.data = Mat(spec.channels, W * spec.windows_per_trial);
      for (std::size_t w = 0; w < spec.windows_per_trial; ++w) {
        const std::size_t at = w * W + trial_latency(spec, subj, stim, w);
        for (std::size_t c = 0; c < spec.channels; ++c)
          for (std::size_t t = 0; t < L; ++t) seg.data(c, at + t) = gain * patterns[stim](c, t);
      }
      if (spec.noise_sigma > 0.0) {
        std::mt19937_64 rng(mix_seed(spec.seed, {5, subj, stim}));
        std::normal_distribution<double> g(0.0, 1.0);
        for (std::size_t c = 0; c < spec.channels; ++c) {
          double state = g(rng);
          for (std::size_t t = 0; t < seg.samples(); ++t) {
            state = spec.noise_ar * state + innov * g(rng);
            seg.data(c, t) += spec.noise_sigma * state;
          }
        }
      }
      out.push_back(std::move(seg));
    }
  }
  return out;
}

/// A fixed-length slice of a Segment; `interval` is its position in the trial.
struct Window {
  Mat data;
  std::uint32_t subject_id = 0;
  std::uint32_t stimulus_id = 0;
  std::uint32_t interval = 0;
  std::int32_t label = 0;
};

/// Cuts every segment into floor(samples / window_samples) windows.
inline std::vector<Window> cut_windows(const std::vector<Segment>& segments, std::size_t window_samples) {
  if (window_samples == 0) throw ValueError("cut_windows: window length must be >= 1 sample");
  std::vector<Window> out;
  for (const auto& seg : segments) {
    const std::size_t n = seg.samples() / window_samples;
    for (std::size_t w = 0; w < n; ++w) {
      Window win;
      win.data = Mat(seg.channels(), window_samples);
      for (std::size_t c = 0; c < seg.channels(); ++c)
        for (std::size_t t = 0; t < window_samples; ++t) win.data(c, t) = seg.data(c, w * window_samples + t);
      win.subject_id = seg.subject_id;
      win.stimulus_id = seg.stimulus_id;
      win.interval = static_cast<std::uint32_t>(w);
      win.label = seg.label;
      out.push_back(std::move(win));
    }
  }
  return out;
}

/// Index pair into the sampler's window list.
struct PairIndex {
  std::size_t anchor, positive;
};

/// Draws stimulus-aligned cross-subject positive pairs. Windows sharing a
/// (stimulus, interval) form a group; a batch uses each stimulus at most once.
class PairSampler {
 public:
  PairSampler(const std::vector<Window>& windows, std::uint64_t seed) : rng_(seed) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      groups[{windows[i].stimulus_id, windows[i].interval}].push_back(i);
    }
    std::map<std::uint32_t, std::vector<Group>> by_stim;
    for (auto& [key, members] : groups) {
      std::set<std::uint32_t> subjects;
      for (std::size_t i : members) subjects.insert(windows[i].subject_id);
      if (subjects.size() < 2) continue;
      Group g;
      g.members = members;
      g.subjects.reserve(members.size());
      for (std::size_t i : members) g.subjects.push_back(windows[i].subject_id);
      by_stim[key.first].push_back(std::move(g));
    }
    for (auto& [stim, gs] : by_stim) {
      stimuli_.push_back(stim);
      groups_.push_back(std::move(gs));
    }
  }

  /// Stimuli that can supply at least one cross-subject pair.
  std::size_t available_stimuli() const { return stimuli_.size(); }
  const std::vector<std::uint32_t>& stimuli() const { return stimuli_; }

  std::vector<PairIndex> sample_pairs(std::size_t batch_size) {
    if (batch_size < 1) throw ValueError("sample_pairs: batch_size must be >= 1");
    if (batch_size > stimuli_.size()) {
      throw ValueError("sample_pairs: batch_size " + std::to_string(batch_size) + " exceeds the " +
                       std::to_string(stimuli_.size()) + " stimuli with cross-subject pairs");
    }
    std::vector<std::size_t> order(stimuli_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // partial Fisher-Yates: the first batch_size entries are a uniform subset
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng_)]);
    }
    std::vector<PairIndex> out;
    out.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto& gs = groups_[order[b]];
      const Group& g = gs[std::uniform_int_distribution<std::size_t>(0, gs.size() - 1)(rng_)];
      std::uniform_int_distribution<std::size_t> member(0, g.members.size() - 1);
      const std::size_t a = member(rng_);
      std::size_t p = member(rng_);
      while (g.subjects[p] == g.subjects[a]) p = member(rng_);
      out.push_back({g.members[a], g.members[p]});
    }
    return out;
  }

 private:
  struct Group {
    std::vector<std::size_t> members;
    std::vector<std::uint32_t> subjects;
  };
  std::mt19937_64 rng_;
  std::vector<std::uint32_t> stimuli_;
  std::vector<std::vector<Group>> groups_;
};

enum class FoldProtocol { KFoldSubjects, LeaveOneSubjectOut };

struct Fold {
  std::vector<std::uint32_t> train_subjects;
  std::vector<std::uint32_t> test_subjects;
};

/// Subject-disjoint splits. KFold shuffles subjects with `seed` and cuts
/// them into k groups whose sizes differ by at most one.
inline std::vector<Fold> make_folds(std::vector<std::uint32_t> subjects, FoldProtocol protocol, std::size_t k,
                                    std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t n = subjects.size();
  if (n < 2) throw ValueError("make_folds: need at least 2 subjects, got " + std::to_string(n));
  if (protocol == FoldProtocol::LeaveOneSubjectOut) {
    k = n;
  } else {
    if (k < 2) throw ValueError("make_folds: k must be >= 2");
    if (k > n) {
      throw ValueError("make_folds: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " subjects");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(subjects.begin(), subjects.end(), rng);
  }
  std::vector<Fold> folds(k);
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
      (i >= at && i < at + size ? folds[f].test_subjects : folds[f].train_subjects).push_back(subjects[i]);
    }
    at += size;
    std::sort(folds[f].train_subjects.begin(), folds[f].train_subjects.end());
    std::sort(folds[f].test_subjects.begin(), folds[f].test_subjects.end());
  }
  return folds;
}

inline std::vector<std::uint32_t> subjects_of(const std::vector<Segment>& segments) {
  std::set<std::uint32_t> s;
  for (const auto& seg : segments) s.insert(seg.subject_id);
  return {s.begin(), s.end()};
}

/// Writes one ESEG1 file per segment plus manifest.csv (path, subject,
/// stimulus, class) into an existing directory.
inline void write_dataset(const std::filesystem::path& dir, const std::vector<Segment>& segments) {
  if (!std::filesystem::is_directory(dir)) throw IoError("output directory does not exist: " + dir.string());
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "path,subject,stimulus,class\n";
  for (const auto& seg : segments) {
    const std::string name =
        "sub" + std::to_string(seg.subject_id) + "_stim" + std::to_string(seg.stimulus_id) + ".eseg";
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    write_segment(f, seg);
    manifest << name << ',' << seg.subject_id << ',' << seg.stimulus_id << ',' << seg.label << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest");
}

/// Reads every segment listed in dir/manifest.csv, checking that the file
/// header agrees with the manifest row.
inline std::vector<Segment> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot open " + (dir / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  if (line != "path,subject,stimulus,class") throw IoError("manifest.csv: unexpected header '" + line + "'");
  std::vector<Segment> out;
  std::size_t row = 1;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
      cols.push_back(line.substr(start, pos - start));
    }
    cols.push_back(line.substr(start));
    if (cols.size() != 4) throw IoError("manifest.csv row " + std::to_string(row) + ": expected 4 columns");
    std::ifstream f(dir / cols[0], std::ios::binary);
    if (!f) throw IoError("cannot open " + (dir / cols[0]).string());
    Segment seg = read_segment(f);
    if (std::to_string(seg.subject_id) != cols[1] || std::to_string(seg.stimulus_id) != cols[2] ||
        std::to_string(seg.label) != cols[3]) {
      throw IoError("manifest.csv row " + std::to_string(row) + " disagrees with " + cols[0]);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace ta2cl
