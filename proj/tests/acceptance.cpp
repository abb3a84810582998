// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Oracles come from tests/oracles.hpp.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <unistd.h>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "ta2cl/config.hpp"
#include "ta2cl/core/gradcheck.hpp"
#include "ta2cl/pipeline/ablation.hpp"
#include "ta2cl/preprocess.hpp"

using namespace ta2cl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

int g_failures = 0;

void report(int id, const char* title, const Outcome& o, double secs) {
  std::printf("%s criterion %d: %s (%.1fs)%s%s\n", o.pass ? "PASS" : "FAIL", id, title, secs,
              o.detail.empty() ? "" : " -- ", o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

RunConfig config_file(const char* name) {
  return load_run_config(fs::path(TA2CL_SOURCE_DIR) / "examples" / "configs" / name);
}

std::vector<Window> windows_for(const RunConfig& c) { return cut_windows(generate(c.synth), c.synth.window_samples()); }

AsyncSimConfig sim_cfg(std::size_t k, Aggregation topk, Aggregation token) {
  AsyncSimConfig c;
  c.k = k;
  c.topk_agg = topk;
  c.token_agg = token;
  return c;
}

// ---------------------------------------------------------------- 1
Outcome criterion1() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> tdist(1, 8), ddist(1, 5), kdist(1, 3), bit(0, 1);
  double worst = 0.0;
  std::size_t maxsim_mismatch = 0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t k = kdist(rng), d = ddist(rng), tu = tdist(rng);
    const std::size_t tv = std::max(k, tdist(rng));
    const Mat u = oracle::random_mat(rng, tu, d), v = oracle::random_mat(rng, tv, d);
    const bool km = bit(rng), tm = bit(rng);
    const auto cfg = sim_cfg(k, km ? Aggregation::Mean : Aggregation::Sum, tm ? Aggregation::Mean : Aggregation::Sum);
    const double got = async_similarity(FeatureSequence(u), FeatureSequence(v), cfg);
    worst = std::max(worst, oracle::rel_err(got, oracle::async_similarity(u, v, k, km, tm)));
    const double k1sum = async_similarity(FeatureSequence(u), FeatureSequence(v), sim_cfg(1, Aggregation::Mean, Aggregation::Sum));
    if (k1sum != maxsim(FeatureSequence(u), FeatureSequence(v))) ++maxsim_mismatch;
  }
  if (worst >= 1e-12) o.fail(fmt("max relative error %.3g", worst));
  if (maxsim_mismatch) o.fail(fmt("K=1/token-Sum differs from maxsim in %.0f cases", static_cast<double>(maxsim_mismatch)));
  if (o.pass) o.detail = fmt("max rel err %.2g, K=1/Sum == maxsim in 1000/1000", worst);
  return o;
}

// ---------------------------------------------------------------- 2
Outcome criterion2() {
  Outcome o;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> kdist(1, 3);
  double worst_sim = 0.0, worst_loss = 0.0;
  int points = 0;
  while (points < 50) {
    const Mat u = oracle::random_mat(rng, 4, 3), v = oracle::random_mat(rng, 6, 3);
    if (!oracle::tie_free(u, v)) continue;
    ++points;
    const auto cfg = sim_cfg(kdist(rng), Aggregation::Mean, Aggregation::Mean);
    worst_sim = std::max(worst_sim, check_grad([&](GradTape& t, Var x) { return ad::async_similarity(x, t.constant(v), cfg); }, u));
    worst_sim = std::max(worst_sim, check_grad([&](GradTape& t, Var x) { return ad::async_similarity(t.constant(u), x, cfg); }, v));
  }
  points = 0;
  while (points < 50) {
    std::vector<Mat> a, p;
    for (int i = 0; i < 3; ++i) {
      a.push_back(oracle::random_mat(rng, 4, 3));
      p.push_back(oracle::random_mat(rng, 5, 3));
    }
    bool ok = true;
    for (const auto& x : a)
      for (const auto& y : p) ok = ok && oracle::tie_free(x, y);
    if (!ok) continue;
    ++points;
    LossConfig cfg;
    cfg.tau = 0.5;
    cfg.sim.k = kdist(rng);
    const std::size_t which = static_cast<std::size_t>(points % 3);
    auto f = [&](GradTape& t, Var x) {
      std::vector<Var> av, pv;
      for (std::size_t i = 0; i < 3; ++i) {
        av.push_back(i == which ? x : t.constant(a[i]));
        pv.push_back(t.constant(p[i]));
      }
      return ad::contrastive_loss(av, pv, cfg);
    };
    auto g = [&](GradTape& t, Var x) {
      std::vector<Var> av, pv;
      for (std::size_t i = 0; i < 3; ++i) {
        av.push_back(t.constant(a[i]));
        pv.push_back(i == which ? x : t.constant(p[i]));
      }
      return ad::contrastive_loss(av, pv, cfg);
    };
    worst_loss = std::max({worst_loss, check_grad(f, a[which]), check_grad(g, p[which])});
  }
  if (worst_sim >= 1e-5) o.fail(fmt("async_similarity gradient rel err %.3g", worst_sim));
  if (worst_loss >= 1e-5) o.fail(fmt("async_infonce gradient rel err %.3g", worst_loss));
  if (o.pass) o.detail = fmt("max rel err similarity %.2g, loss %.2g", worst_sim, worst_loss);
  return o;
}

// ---------------------------------------------------------------- 3
Outcome criterion3() {
  Outcome o;
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> tdist(3, 8), ddist(1, 5), kdist(1, 3);
  double worst_token = 0.0, worst_topk = 0.0;
  std::size_t monotone_violations = 0, perm_violations = 0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t tu = tdist(rng), tv = tdist(rng), d = ddist(rng), k = kdist(rng);
    const FeatureSequence U(oracle::random_mat(rng, tu, d)), V(oracle::random_mat(rng, tv, d));
    const double mm = async_similarity(U, V, sim_cfg(k, Aggregation::Mean, Aggregation::Mean));
    const double m_tsum = async_similarity(U, V, sim_cfg(k, Aggregation::Mean, Aggregation::Sum));
    const double ksum_m = async_similarity(U, V, sim_cfg(k, Aggregation::Sum, Aggregation::Mean));
    worst_token = std::max(worst_token, oracle::rel_err(m_tsum, static_cast<double>(tu) * mm));
    worst_topk = std::max(worst_topk, oracle::rel_err(ksum_m, static_cast<double>(k) * mm));
    double prev = INFINITY;
    for (std::size_t kk = 1; kk <= std::min<std::size_t>(tv, 3); ++kk) {
      const double s = async_similarity(U, V, sim_cfg(kk, Aggregation::Mean, Aggregation::Mean));
      if (s > prev) ++monotone_violations;
      prev = s;
    }
    std::vector<std::size_t> perm(tv);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat vp(tv, d);
    for (std::size_t r = 0; r < tv; ++r)
      for (std::size_t c = 0; c < d; ++c) vp(r, c) = V.tokens()(perm[r], c);
    if (async_similarity(U, FeatureSequence(vp), sim_cfg(k, Aggregation::Mean, Aggregation::Mean)) != mm) ++perm_violations;
  }
  if (worst_token >= 1e-12) o.fail(fmt("token Sum/Mean identity rel err %.3g", worst_token));
  if (worst_topk >= 1e-12) o.fail(fmt("topk Sum/Mean identity rel err %.3g", worst_topk));
  if (monotone_violations) o.fail(fmt("%.0f monotonicity violations", static_cast<double>(monotone_violations)));
  if (perm_violations) o.fail(fmt("%.0f permutation violations", static_cast<double>(perm_violations)));
  if (o.pass) o.detail = fmt("identity rel err token %.2g, topk %.2g; monotone and permutation-exact", worst_token, worst_topk);
  return o;
}

// ---------------------------------------------------------------- 4
ContrastiveBatch scalar_batch(double pos, double neg, std::size_t P) {
  ContrastiveBatch b;
  for (std::size_t i = 0; i < P; ++i) {
    Mat a(1, P), p(1, P, neg);
    a(0, i) = 1.0;
    p(0, i) = pos;
    b.anchors.emplace_back(a);
    b.positives.emplace_back(p);
  }
  return b;
}

Outcome criterion4() {
  Outcome o;
  LossConfig cfg;
  cfg.tau = 0.1;
  for (std::size_t M : {1u, 3u, 7u}) {
    const double l = async_infonce(scalar_batch(0.37, 0.37, M + 1), cfg);
    const double want = std::log(static_cast<double>(M + 1));
    if (!(std::abs(l - want) < 1e-9)) o.fail(fmt("M=%.0f: loss %.12g vs ln(M+1) %.12g", static_cast<double>(M), l, want));
  }
  // similarity margin 20 -> logit margin 20 / tau
  const double sat = async_infonce(scalar_batch(20.0, 0.0, 4), cfg);
  if (!(sat < 1e-8)) o.fail(fmt("saturated loss %.3g", sat));
  for (double s : {500.0, -500.0}) {
    const double l = async_infonce(scalar_batch(s, -s, 4), cfg);
    if (!std::isfinite(l)) o.fail(fmt("non-finite loss at logits %.0f/tau", s));
  }
  if (o.pass) o.detail = fmt("saturated loss %.2g; +-500/tau finite", sat);
  return o;
}

// ---------------------------------------------------------------- 5 and 6
struct BenchRuns {
  std::vector<EvalReport> mean, global, sum;
  std::vector<LogitScaleProbe> probes;
};

Outcome criterion5(BenchRuns& runs, double& secs) {
  Outcome o;
  const auto t0 = Clock::now();
  const RunConfig base = config_file("benchmark.json");
  int wins = 0;
  double margin = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig c = base;
    c.set_seed(seed);
    const auto windows = windows_for(c);
    ExperimentConfig a = c.experiment;
    a.loss.mode = LossMode::Async;
    a.loss.sim = sim_cfg(3, Aggregation::Mean, Aggregation::Mean);
    ExperimentConfig g = a;
    g.loss.mode = LossMode::GlobalCosine;
    runs.mean.push_back(evaluate(windows, a));
    runs.global.push_back(evaluate(windows, g));
    const double d = runs.mean.back().accuracy.mean - runs.global.back().accuracy.mean;
    std::printf("  seed %llu: async %s  global %s  diff %+.1f\n", static_cast<unsigned long long>(seed),
                format_pm(runs.mean.back().accuracy).c_str(), format_pm(runs.global.back().accuracy).c_str(), d);
    std::fflush(stdout);
    wins += d > 0.0;
    margin += d / 5.0;
  }
  secs = seconds_since(t0);
  if (wins < 4) o.fail(fmt("async wins %.0f/5 seeds", wins));
  if (margin < 5.0) o.fail(fmt("mean margin %.2f pp < 5", margin));
  if (secs >= 15 * 60) o.fail(fmt("runtime %.0fs >= 900s", secs));
  if (o.pass) o.detail = fmt("async wins %.0f/5, mean margin %+.1f pp", wins, margin);
  return o;
}

Outcome criterion6(BenchRuns& runs) {
  Outcome o;
  const RunConfig base = config_file("benchmark.json");
  double margin = 0.0, worst_identity = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RunConfig c = base;
    c.set_seed(seed);
    const auto windows = windows_for(c);
    ExperimentConfig s = c.experiment;
    s.loss.mode = LossMode::Async;
    s.loss.sim = sim_cfg(3, Aggregation::Mean, Aggregation::Sum);
    std::vector<FoldArtifacts> arts;
    runs.sum.push_back(evaluate(windows, s, 1, &arts));
    const auto train = windows_of_subjects(windows, runs.sum.back().folds[0].train_subjects);
    const auto probe = probe_logit_scale(arts[0].encoder, s, train, mix_seed(seed, {41}));
    runs.probes.push_back(probe);
    worst_identity = std::max(worst_identity, probe.max_rel_deviation);
    const double d = runs.mean[seed].accuracy.mean - runs.sum.back().accuracy.mean;
    margin += d / 5.0;
    std::printf("  seed %llu: token-Mean %s  token-Sum %s  diff %+.1f  positive logit Sum/Mean = %.6f (T_u = %zu)\n",
                static_cast<unsigned long long>(seed), format_pm(runs.mean[seed].accuracy).c_str(),
                format_pm(runs.sum.back().accuracy).c_str(), d, probe.ratio, probe.anchor_tokens);
    std::fflush(stdout);
  }
  std::printf("  reference (real data, not reproduced): token-Mean 64.5±6.6, token-Sum 45.3±6.5\n");
  if (margin < 3.0) o.fail(fmt("token-Sum trails token-Mean by %.2f pp on average (< 3)", margin));
  if (worst_identity >= 1e-12) o.fail(fmt("logit scale identity rel err %.3g", worst_identity));
  if (o.pass) o.detail = fmt("mean margin %+.1f pp; logit ratio = T_u within %.2g", margin, worst_identity);
  return o;
}

// ---------------------------------------------------------------- 7
Outcome criterion7(const BenchRuns& runs) {
  Outcome o;
  for (auto preset : {EncoderPreset::SeedCls3, EncoderPreset::SeedVCls5, EncoderPreset::FacedCls2, EncoderPreset::FacedCls9}) {
    const EncoderConfig cfg = preset_config(preset);
    const EncoderParams p = init_encoder_params(cfg, 5);
    for (std::size_t T : {125u, 250u, 1250u}) {
      if (T < cfg.min_input_len()) continue;
      const auto out = encode(Mat(cfg.channels, T, 0.25), p, cfg);
      const auto& tok = out.tokens.tokens();
      if (tok.rows() != T / cfg.avg_pool_len || tok.cols() != 4 * cfg.n_ms_filters * cfg.n_time_filters) {
        o.fail(fmt("shape %.0fx%.0f at T=%.0f", static_cast<double>(tok.rows()), static_cast<double>(tok.cols()), static_cast<double>(T)));
      }
    }
  }
  {
    EncoderConfig on = preset_config(EncoderPreset::FacedCls2);
    on.channels = 3;
    EncoderParams p = init_encoder_params(on, 6);
    p.att_w2 = Mat(p.att_w2.rows(), p.att_w2.cols());
    p.att_b2 = Mat(p.att_b2.rows(), p.att_b2.cols());
    EncoderConfig off = on;
    off.attention_enabled = false;
    std::mt19937_64 rng(7);
    const Mat x = oracle::random_mat(rng, 3, 250);
    if (!(encode(x, p, on).tokens.tokens() == encode(x, p, off).tokens.tokens())) o.fail("attention-off differs from uniform reweighting");
  }
  {
    const EncoderConfig cfg = preset_config(EncoderPreset::FacedCls9);
    const EncoderParams p = init_encoder_params(cfg, 8);
    std::stringstream ss;
    save_encoder(ss, p);
    const std::string bytes = ss.str();
    const EncoderParams q = load_encoder(ss, cfg);
    std::stringstream again;
    save_encoder(again, q);
    if (!(p == q) || again.str() != bytes) o.fail("checkpoint round trip not bit-exact");
  }
  std::size_t folds = 0;
  for (const auto* set : {&runs.mean, &runs.global, &runs.sum})
    for (const auto& r : *set)
      for (const auto& f : r.folds) {
        ++folds;
        if (f.encoder_digest_before != f.encoder_digest_after) o.fail("encoder digest changed during classifier training");
      }
  if (folds == 0) o.fail("no benchmark folds to check the frozen digest");
  if (o.pass) o.detail = fmt("shapes, attention-off, checkpoint and frozen digest over %.0f folds", static_cast<double>(folds));
  return o;
}

// ---------------------------------------------------------------- 8
double fitted_gain(std::span<const double> y, double f, double fs, std::size_t lo, std::size_t hi) {
  double ss = 0, cc = 0, sc = 0, ys = 0, yc = 0;
  for (std::size_t t = lo; t < hi; ++t) {
    const double s = std::sin(2 * std::numbers::pi * f * static_cast<double>(t) / fs);
    const double c = std::cos(2 * std::numbers::pi * f * static_cast<double>(t) / fs);
    ss += s * s;
    cc += c * c;
    sc += s * c;
    ys += y[t] * s;
    yc += y[t] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (ys * cc - yc * sc) / det, b = (yc * ss - ys * sc) / det;
  return std::hypot(a, b);
}

Outcome criterion8() {
  Outcome o;
  const double fs = 125.0;
  const std::size_t n = 2500;
  for (double f : {10.0, 60.0}) {
    Segment s;
    s.sample_rate = fs;
    s.data = Mat(1, n);
    for (std::size_t t = 0; t < n; ++t) s.data(0, t) = std::sin(2 * std::numbers::pi * f * static_cast<double>(t) / fs);
    const Segment y = bandpass(s, 0.5, 47.0);
    const double db = 20 * std::log10(fitted_gain(y.data.row(0), f, fs, 250, n - 250));
    if (f == 10.0 && !(std::abs(db) < 1.0)) o.fail(fmt("10 Hz gain %.2f dB", db));
    if (f == 60.0 && !(db < -20.0)) o.fail(fmt("60 Hz gain %.2f dB", db));
    o.detail += fmt("%.0f Hz %.2f dB; ", f, db);
  }
  auto noise = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Segment s;
    s.sample_rate = fs;
    s.data = Mat(8, 1250);
    for (double& v : s.data.flat()) v = g(rng);
    return s;
  };
  Segment plateau = noise(11);
  for (std::size_t t = 300; t < 363; ++t) plateau.data(5, t) = 10.0;
  if (detect_and_repair(plateau, {{3.0, 0.4}}).flagged != std::vector<std::size_t>{5}) o.fail("plateau not flagged by (3, 0.4)");
  Segment spike = noise(12);
  const auto [med, sigma] = robust_location_scale(spike.data.row(2));
  spike.data(2, 600) = med + 50.0 * sigma;
  if (detect_and_repair(spike, {{30.0, 0.01}}).flagged != std::vector<std::size_t>{2}) o.fail("spike not flagged by (30, 0.01)");
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    Segment clean = noise(seed);
    clean.data = Mat(32, 1250);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (double& v : clean.data.flat()) v = g(rng);
    if (!detect_and_repair(clean, default_artifact_thresholds()).flagged.empty()) o.fail("clean noise flagged");
  }
  if (o.pass) o.detail += "artifact cases flagged, clean noise untouched";
  return o;
}

// ---------------------------------------------------------------- 9
Outcome criterion9() {
  Outcome o;
  const RunConfig c = config_file("smoke.json");
  const auto windows = windows_for(c);
  const auto a = evaluate(windows, c.experiment);
  const auto b = evaluate(windows, c.experiment);
  if (a.to_json(false).dump() != b.to_json(false).dump()) o.fail("EvalReport differs between identical runs");
  if (a.loss_curves_csv() != b.loss_curves_csv()) o.fail("loss curves differ between identical runs");

  ExperimentConfig sh = c.experiment;
  sh.shuffle_labels = true;
  const auto r = evaluate(windows, sh);
  std::size_t hit = 0, total = 0;
  for (std::size_t i = 0; i < r.confusion.size(); ++i)
    for (std::size_t j = 0; j < r.confusion.size(); ++j) {
      total += r.confusion[i][j];
      if (i == j) hit += r.confusion[i][j];
    }
  const double k = static_cast<double>(r.confusion.size());
  const double chance = 1.0 / k;
  // windows of one trial share smoothed features, so the trial is the
  // independent unit
  const double trials = static_cast<double>(total) / static_cast<double>(c.synth.windows_per_trial);
  const double sigma = std::sqrt(chance * (1 - chance) / trials);
  const double acc = static_cast<double>(hit) / static_cast<double>(total);
  if (std::abs(acc - chance) > 3 * sigma) o.fail(fmt("shuffled accuracy %.3f vs chance %.3f (3 sigma %.3f)", acc, chance, 3 * sigma));
  if (o.pass) o.detail = fmt("bit-identical reruns; shuffled-label accuracy %.3f, chance %.3f +- %.3f (3 sigma)", acc, chance, 3 * sigma);
  return o;
}

// ---------------------------------------------------------------- 10
Outcome criterion10(double& cli_secs) {
  Outcome o;
  const std::vector<double> sims{0.1, 1.0, -3.0, 0.2};
  const double want = 438.0 / 2700.0;  // top-3 {1.0, 0.2, 0.1}
  const double got = top3_variance(sims);
  if (std::abs(got - want) > 2 * std::numeric_limits<double>::epsilon() * want) o.fail(fmt("hand example %.17g vs %.17g", got, want));

  const fs::path out = fs::temp_directory_path() / ("ta2cl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(out);
  fs::create_directories(out);
  const std::string cmd = std::string("TA2CL_LOG=error \"") + TA2CL_CLI_PATH + "\" top3 --config \"" +
                          (fs::path(TA2CL_SOURCE_DIR) / "examples/configs/smoke.json").string() + "\" --out \"" +
                          out.string() + "\"";
  const auto t0 = Clock::now();
  const int rc = std::system(cmd.c_str());
  cli_secs = seconds_since(t0);
  if (rc != 0) o.fail("CLI top3 exited with status " + std::to_string(rc));
  if (cli_secs >= 300) o.fail(fmt("CLI top3 took %.0fs", cli_secs));
  std::ifstream hist(out / "top3_histogram.csv");
  std::string line;
  std::getline(hist, line);
  if (line != "group,k,bin_lo,bin_hi,count") o.fail("histogram header '" + line + "'");
  std::set<std::string> ks, groups;
  std::size_t rows = 0;
  while (std::getline(hist, line)) {
    ++rows;
    groups.insert(line.substr(0, line.find(',')));
    ks.insert(line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1));
  }
  if (ks != std::set<std::string>{"1", "3"}) o.fail("histogram lacks K=1 and K=3 series");
  if (groups.empty() || rows == 0) o.fail("histogram is empty");
  if (!fs::exists(out / "top3.json") || !fs::exists(out / "config.json")) o.fail("top3.json or config echo missing");
  fs::remove_all(out);
  if (o.pass) {
    std::string g;
    for (const auto& s : groups) g += (g.empty() ? "" : "/") + s;
    o.detail = "hand example exact; CLI histogram " + std::to_string(rows) + " rows, groups " + g + fmt(", %.1fs", cli_secs);
  }
  return o;
}

template <class F>
void run(int id, const char* title, F&& f, double limit = 0.0) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o.fail(std::string("exception: ") + e.what());
  }
  const double secs = seconds_since(t0);
  if (limit > 0.0 && secs >= limit) o.fail(fmt("runtime %.1fs >= %.0fs", secs, limit));
  report(id, title, o, secs);
}

}  // namespace

int main() {
  BenchRuns runs;
  run(1, "async similarity matches full-sort oracle", criterion1, 10.0);
  run(2, "analytic gradients match central differences", criterion2, 30.0);
  run(3, "aggregation identities, K-monotonicity, permutation invariance", criterion3);
  run(4, "loss calibration", criterion4);
  double bench_secs = 0.0;
  run(5, "async beats global cosine on the asynchrony benchmark", [&] { return criterion5(runs, bench_secs); });
  run(6, "token-Sum underperforms token-Mean; logit scale ratio = T_u", [&] { return criterion6(runs); });
  run(7, "encoder contracts", [&] { return criterion7(runs); });
  run(8, "preprocessing response and artifact detector", criterion8);
  run(9, "determinism and label-shuffle control", criterion9);
  double cli_secs = 0.0;
  run(10, "top-3 variance diagnostic and CLI histogram", [&] { return criterion10(cli_secs); });
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
