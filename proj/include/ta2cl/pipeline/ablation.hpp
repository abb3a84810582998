// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ta2cl/core/topk.hpp"
#include "ta2cl/pipeline/evaluate.hpp"

namespace ta2cl {

struct AblationRow {
  std::string variant;
  ExperimentConfig config;
  EvalReport report;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

/// Paired runs that differ in one setting; every row shares seed and folds.
struct AblationTable {
  std::string kind;
  std::vector<AblationRow> rows;
  /// Published real-data figures kept for comparison only; they are not
  /// reproducible with synthetic data at this scale.
  nlohmann::ordered_json reference = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json(bool with_timing = true) const {
    nlohmann::ordered_json rows_j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json j = {{"variant", r.variant},
                                  {"accuracy_mean", r.report.accuracy.mean},
                                  {"accuracy_std", r.report.accuracy.std},
                                  {"formatted", format_pm(r.report.accuracy)},
                                  {"fold_accuracies", r.report.fold_accuracies()},
                                  {"extra", r.extra},
                                  {"report", r.report.to_json(with_timing)}};
      rows_j.push_back(std::move(j));
    }
    return {{"ablation", kind}, {"rows", rows_j}, {"reference", reference}};
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "variant,accuracy_mean,accuracy_std,fold_accuracies\n";
    for (const auto& r : rows) {
      out << r.variant << ',' << r.report.accuracy.mean << ',' << r.report.accuracy.std << ',';
      const auto accs = r.report.fold_accuracies();
      for (std::size_t i = 0; i < accs.size(); ++i) out << (i ? ";" : "") << accs[i];
      out << '\n';
    }
    return out.str();
  }
};

inline nlohmann::ordered_json published_reference(std::initializer_list<std::pair<const char*, const char*>> values) {
  nlohmann::ordered_json j = {{"dataset", "FACED, 9 classes"}, {"reproducible", false}};
  for (const auto& [k, v] : values) j[k] = v;
  return j;
}

inline AblationTable run_ablation_k(const std::vector<Window>& windows, const ExperimentConfig& base,
                                    const std::vector<std::size_t>& ks = {1, 2, 3}, std::size_t jobs = 1) {
  AblationTable t;
  t.kind = "k";
  for (std::size_t k : ks) {
    AblationRow row;
    row.variant = "k=" + std::to_string(k);
    row.config = base;
    row.config.loss.mode = LossMode::Async;
    row.config.loss.sim.k = k;
    row.config.name = base.name + "/" + row.variant;
    row.report = evaluate(windows, row.config, jobs);
    t.rows.push_back(std::move(row));
  }
  t.reference = published_reference({{"k=1", "64.5±6.6"}});
  return t;
}

/// Positive logits of one probe batch under token-Sum and token-Mean with the
/// same encoder; their ratio is the token count of the anchors.
struct LogitScaleProbe {
  double mean_positive_logit_sum = 0.0;
  double mean_positive_logit_mean = 0.0;
  double ratio = 0.0;
  std::size_t anchor_tokens = 0;
  double max_rel_deviation = 0.0;  // max over pairs of |ratio_p - T_u| / T_u
};

inline LogitScaleProbe probe_logit_scale(const EncoderParams& params, const ExperimentConfig& cfg,
                                         const std::vector<Window>& windows, std::uint64_t seed) {
  PairSampler sampler(windows, seed);
  const auto pairs = sampler.sample_pairs(std::min(cfg.schedule.batch_size, sampler.available_stimuli()));
  LossConfig sum_cfg = cfg.loss, mean_cfg = cfg.loss;
  sum_cfg.mode = mean_cfg.mode = LossMode::Async;
  sum_cfg.sim.token_agg = Aggregation::Sum;
  mean_cfg.sim.token_agg = Aggregation::Mean;
  std::mt19937_64 unused(0);
  const Mat ls = contrastive_step(params, cfg.encoder, sum_cfg, windows, pairs, unused, nullptr).logits;
  const Mat lm = contrastive_step(params, cfg.encoder, mean_cfg, windows, pairs, unused, nullptr).logits;
  LogitScaleProbe p;
  p.anchor_tokens = cfg.encoder.token_count(windows[pairs[0].anchor].data.cols());
  const double T = static_cast<double>(p.anchor_tokens);
  for (std::size_t i = 0; i < ls.rows(); ++i) {
    p.mean_positive_logit_sum += ls(i, i);
    p.mean_positive_logit_mean += lm(i, i);
    p.max_rel_deviation = std::max(p.max_rel_deviation, std::abs(ls(i, i) / lm(i, i) - T) / T);
  }
  p.mean_positive_logit_sum /= static_cast<double>(ls.rows());
  p.mean_positive_logit_mean /= static_cast<double>(ls.rows());
  p.ratio = p.mean_positive_logit_sum / p.mean_positive_logit_mean;
  return p;
}

inline AblationTable run_ablation_aggregation(const std::vector<Window>& windows, const ExperimentConfig& base,
                                              std::size_t jobs = 1) {
  AblationTable t;
  t.kind = "aggregation";
  for (Aggregation topk : {Aggregation::Mean, Aggregation::Sum}) {
    for (Aggregation token : {Aggregation::Mean, Aggregation::Sum}) {
      AblationRow row;
      row.variant = std::string("topk=") + to_string(topk) + ",token=" + to_string(token);
      row.config = base;
      row.config.loss.mode = LossMode::Async;
      row.config.loss.sim.topk_agg = topk;
      row.config.loss.sim.token_agg = token;
      row.config.name = base.name + "/" + row.variant;
      std::vector<FoldArtifacts> arts;
      row.report = evaluate(windows, row.config, jobs, &arts);
      double pos = 0.0;
      for (const auto& f : row.report.folds) pos += f.mean_positive_logit;
      row.extra["mean_positive_logit"] = pos / static_cast<double>(row.report.folds.size());
      const auto train = windows_of_subjects(windows, row.report.folds[0].train_subjects);
      const auto probe = probe_logit_scale(arts[0].encoder, row.config, train, mix_seed(base.seed, {41}));
      row.extra["logit_scale_probe"] = {{"mean_positive_logit_token_sum", probe.mean_positive_logit_sum},
                                        {"mean_positive_logit_token_mean", probe.mean_positive_logit_mean},
                                        {"ratio", probe.ratio},
                                        {"anchor_tokens", probe.anchor_tokens},
                                        {"max_rel_deviation", probe.max_rel_deviation}};
      t.rows.push_back(std::move(row));
    }
  }
  t.reference = published_reference({{"token=mean", "64.5±6.6"}, {"token=sum", "45.3±6.5"}});
  return t;
}

/// Max over feature channels of the attention gate at each pooled step.
inline std::vector<double> attention_curve(const Mat& gates) {
  std::vector<double> curve(gates.cols(), 0.0);
  for (std::size_t t = 0; t < gates.cols(); ++t) {
    double m = gates(0, t);
    for (std::size_t r = 1; r < gates.rows(); ++r) m = std::max(m, gates(r, t));
    curve[t] = m;
  }
  return curve;
}

struct AttentionAblation {
  AblationTable table;
  std::string curves_csv;  // variant,window,subject,stimulus,step,value
};

inline AttentionAblation run_attention_ablation(const std::vector<Window>& windows, const ExperimentConfig& base,
                                                std::size_t jobs = 1, std::size_t curve_windows = 8) {
  AttentionAblation out;
  out.table.kind = "attention";
  std::ostringstream csv;
  csv.precision(17);
  csv << "variant,window,subject,stimulus,step,value\n";
  for (bool on : {false, true}) {
    AblationRow row;
    row.variant = on ? "attention=on" : "attention=off";
    row.config = base;
    row.config.encoder.attention_enabled = on;
    row.config.name = base.name + "/" + row.variant;
    std::vector<FoldArtifacts> arts;
    row.report = evaluate(windows, row.config, jobs, &arts);
    const auto test = windows_of_subjects(windows, row.report.folds[0].test_subjects);
    for (std::size_t i = 0; i < std::min(curve_windows, test.size()); ++i) {
      const auto enc = encode(test[i].data, arts[0].encoder, row.config.encoder);
      const auto curve = attention_curve(enc.attention_weights);
      for (std::size_t s = 0; s < curve.size(); ++s) {
        csv << row.variant << ',' << i << ',' << test[i].subject_id << ',' << test[i].stimulus_id << ',' << s << ','
            << curve[s] << '\n';
      }
    }
    out.table.rows.push_back(std::move(row));
  }
  out.table.reference = published_reference({{"attention=off", "48.4"}, {"attention=on", "64.5"}, {"gain", "+16.1"}});
  out.curves_csv = csv.str();
  return out;
}

/// Population variance of the three largest entries of `sims` (at least 3).
inline double top3_variance(std::span<const double> sims) {
  if (sims.size() < 3) throw ValueError("top3_variance: need at least 3 candidate tokens");
  const auto idx = topk_indices(sims, 3);
  const double a = sims[idx[0]], b = sims[idx[1]], c = sims[idx[2]];
  const double m = (a + b + c) / 3.0;
  return ((a - m) * (a - m) + (b - m) * (b - m) + (c - m) * (c - m)) / 3.0;
}

/// One variance per token of u against the tokens of v.
inline std::vector<double> top3_variances(const FeatureSequence& u, const FeatureSequence& v) {
  const Mat s = pairwise_similarity(u, v).scores;
  std::vector<double> out(s.rows());
  for (std::size_t i = 0; i < s.rows(); ++i) out[i] = top3_variance(s.row(i));
  return out;
}

/// Top-3 variances of projected anchor tokens against their positives, for
/// every pair; T_u rows per pair.
inline std::vector<double> top3_variance_diagnostic(const EncoderParams& params, const ExperimentConfig& cfg,
                                                    const std::vector<Window>& windows,
                                                    const std::vector<PairIndex>& pairs) {
  std::vector<double> out;
  for (const auto& [a, p] : pairs) {
    auto tokens = [&](std::size_t i) {
      FeatureSequence seq = project(encode(windows[i].data, params, cfg.encoder).tokens, params, cfg.encoder);
      return cfg.loss.sim.normalize_tokens ? FeatureSequence(detail::normalized_rows(seq.tokens())) : seq;
    };
    const auto v = top3_variances(tokens(a), tokens(p));
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

struct HistogramBin {
  double lo, hi;
  std::size_t count;
};

inline std::vector<HistogramBin> histogram(const std::vector<double>& xs, double lo, double hi, std::size_t bins) {
  if (bins < 1 || !(hi > lo)) throw ValueError("histogram: need bins >= 1 and hi > lo");
  std::vector<HistogramBin> out(bins);
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) out[b] = {lo + w * static_cast<double>(b), lo + w * static_cast<double>(b + 1), 0};
  for (double x : xs) {
    auto b = static_cast<std::size_t>(std::clamp((x - lo) / w, 0.0, static_cast<double>(bins - 1)));
    ++out[b].count;
  }
  return out;
}

/// K=1 vs K=3 runs; folds are grouped by which K scored higher and the
/// top-3 variance distribution of each run's encoder is histogrammed per
/// group, using held-out-subject pairs.
struct Top3Study {
  AblationTable table;
  std::string histogram_csv;  // group,k,bin_lo,bin_hi,count
  nlohmann::ordered_json summary;
};

inline Top3Study run_top3_study(const std::vector<Window>& windows, const ExperimentConfig& base, std::size_t jobs = 1,
                                std::size_t pairs_per_fold = 16, std::size_t bins = 20) {
  Top3Study out;
  out.table.kind = "top3";
  std::vector<std::vector<FoldArtifacts>> arts(2);
  const std::size_t ks[2] = {1, 3};
  for (int i = 0; i < 2; ++i) {
    AblationRow row;
    row.variant = "k=" + std::to_string(ks[i]);
    row.config = base;
    row.config.loss.mode = LossMode::Async;
    row.config.loss.sim.k = ks[i];
    row.config.name = base.name + "/" + row.variant;
    row.report = evaluate(windows, row.config, jobs, &arts[i]);
    out.table.rows.push_back(std::move(row));
  }
  // values[group][k-index]
  std::map<std::string, std::array<std::vector<double>, 2>> values;
  const auto& r1 = out.table.rows[0].report;
  const auto& r3 = out.table.rows[1].report;
  nlohmann::ordered_json fold_groups = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < r1.folds.size(); ++f) {
    const double a1 = r1.folds[f].accuracy, a3 = r3.folds[f].accuracy;
    const std::string group = a1 > a3 ? "k1_better" : (a3 > a1 ? "k3_better" : "tie");
    fold_groups.push_back({{"fold", f}, {"group", group}, {"k1_accuracy", a1}, {"k3_accuracy", a3}});
    const auto test = windows_of_subjects(windows, r1.folds[f].test_subjects);
    PairSampler sampler(test, mix_seed(base.seed, {51, f}));
    if (sampler.available_stimuli() == 0) continue;
    std::vector<PairIndex> pairs;
    while (pairs.size() < pairs_per_fold) {
      for (const auto& p : sampler.sample_pairs(1)) pairs.push_back(p);
    }
    for (int i = 0; i < 2; ++i) {
      const auto v = top3_variance_diagnostic(arts[i][f].encoder, out.table.rows[i].config, test, pairs);
      auto& dst = values[group][i];
      dst.insert(dst.end(), v.begin(), v.end());
    }
  }
  // range up to the 99th percentile so a few outliers do not flatten every
  // bin into the first; larger values land in the last bin
  std::vector<double> all;
  for (const auto& [g, arr] : values)
    for (const auto& v : arr) all.insert(all.end(), v.begin(), v.end());
  double hi = 0.0;
  if (!all.empty()) {
    const auto q = all.begin() + static_cast<std::ptrdiff_t>((all.size() - 1) * 99 / 100);
    std::nth_element(all.begin(), q, all.end());
    hi = *q;
  }
  if (!(hi > 0.0)) hi = 1.0;
  std::ostringstream csv;
  csv.precision(17);
  csv << "group,k,bin_lo,bin_hi,count\n";
  nlohmann::ordered_json stats = nlohmann::ordered_json::array();
  for (const auto& [g, arr] : values) {
    for (int i = 0; i < 2; ++i) {
      for (const auto& b : histogram(arr[i], 0.0, hi, bins)) {
        csv << g << ',' << ks[i] << ',' << b.lo << ',' << b.hi << ',' << b.count << '\n';
      }
      const Summary s = summarize(arr[i]);
      stats.push_back({{"group", g}, {"k", ks[i]}, {"tokens", arr[i].size()}, {"mean_variance", s.mean}});
    }
  }
  out.histogram_csv = csv.str();
  out.summary = {{"folds", fold_groups}, {"variance", stats}};
  return out;
}

}  // namespace ta2cl
