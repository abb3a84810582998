// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ta2cl/contrastive_loss.hpp"
#include "ta2cl/core/gradcheck.hpp"

using namespace ta2cl;

namespace {

ContrastiveBatch make_batch(const std::vector<Mat>& a, const std::vector<Mat>& p) {
  ContrastiveBatch b;
  for (const auto& m : a) b.anchors.emplace_back(m);
  for (const auto& m : p) b.positives.emplace_back(m);
  return b;
}

LossConfig loss_cfg(double tau, std::size_t k = 1) {
  LossConfig c;
  c.tau = tau;
  c.sim.k = k;
  return c;
}

/// Positive logit pos/tau vs negatives at neg/tau, built from 1x1 sequences.
ContrastiveBatch scalar_batch(double pos, double neg, std::size_t P) {
  // anchors [1], positive p is [pos] for its own anchor... use orthogonal tricks:
  // anchor p = e_p * a, positive q = e_q * pos + sum_{r != q} e_r * neg, D = P.
  std::vector<Mat> a, p;
  for (std::size_t i = 0; i < P; ++i) {
    Mat ai(1, P), pi(1, P, neg);
    ai(0, i) = 1.0;
    pi(0, i) = pos;
    a.push_back(ai);
    p.push_back(pi);
  }
  return make_batch(a, p);
}

}  // namespace

TEST(AsyncInfoNce, UniformSimilaritiesGiveLogOfCandidates) {
  for (std::size_t P : {2u, 3u, 4u, 8u}) {
    std::vector<Mat> same(P, Mat::from_rows({{0.3, -0.2}, {0.1, 0.4}}));
    const double loss = async_infonce(make_batch(same, same), loss_cfg(0.1));
    EXPECT_NEAR(loss, std::log(static_cast<double>(P)), 1e-12) << "P=" << P;
  }
  EXPECT_NEAR(std::log(2.0), 0.693147, 1e-6);
  EXPECT_NEAR(std::log(3.0), 1.098612, 1e-6);
}

TEST(AsyncInfoNce, SaturatedMarginAndExtremeLogits) {
  EXPECT_LT(async_infonce(scalar_batch(2.0, 0.0, 2), loss_cfg(0.1)), 1e-8);
  const double big = async_infonce(scalar_batch(50.0, -50.0, 3), loss_cfg(0.1));
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_GE(big, 0.0);  // exp(-1000) underflows; the value is exactly representable only as 0
  const double wrong = async_infonce(scalar_batch(-50.0, 50.0, 3), loss_cfg(0.1));
  EXPECT_TRUE(std::isfinite(wrong));
  EXPECT_NEAR(wrong, 1000.0 + std::log(2.0), 1e-9);
}

TEST(AsyncInfoNce, TemperatureLimits) {
  const double good = async_infonce(scalar_batch(0.1, 0.0, 2), loss_cfg(1e-3));
  EXPECT_LT(good, 1e-20);
  EXPECT_GT(good, 0.0);
  EXPECT_GT(async_infonce(scalar_batch(0.0, 0.1, 2), loss_cfg(1e-3)), 40.0);
}

TEST(AsyncInfoNce, MonotoneInPositiveScore) {
  double prev = INFINITY;
  for (double pos = -1.0; pos <= 1.0; pos += 0.25) {
    const double l = async_infonce(scalar_batch(pos, 0.2, 3), loss_cfg(0.5));
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(AsyncInfoNce, MatchesStraightLineOracle) {
  std::mt19937_64 rng(31);
  std::vector<Mat> a, p;
  for (int i = 0; i < 4; ++i) {
    a.push_back(oracle::random_mat(rng, 5, 3));
    p.push_back(oracle::random_mat(rng, 6, 3));
  }
  const double got = async_infonce(make_batch(a, p), loss_cfg(0.5, 2));
  const double want = oracle::infonce(a, p, 0.5, [](const Mat& u, const Mat& v) { return oracle::async_similarity(u, v, 2); });
  EXPECT_LT(oracle::rel_err(got, want), 1e-12);
}

TEST(AsyncInfoNce, Errors) {
  std::vector<Mat> one{Mat(2, 2, 1.0)};
  EXPECT_THROW(async_infonce(make_batch(one, one), loss_cfg(0.1)), ValueError);
  std::vector<Mat> two(2, Mat(2, 2, 1.0));
  EXPECT_THROW(async_infonce(make_batch(two, two), loss_cfg(0.0)), ValueError);
  EXPECT_THROW(async_infonce(make_batch(two, {Mat(2, 2), Mat(2, 3)}), loss_cfg(0.1)), ShapeError);
  std::vector<Mat> nan(2, Mat(2, 2, NAN));
  EXPECT_THROW(async_infonce(make_batch(nan, nan), loss_cfg(0.1)), NumericError);
}

TEST(AsyncInfoNce, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(32);
  int checked = 0;
  while (checked < 5) {
    std::vector<Mat> a, p;
    for (int i = 0; i < 3; ++i) {
      a.push_back(oracle::random_mat(rng, 4, 3));
      p.push_back(oracle::random_mat(rng, 5, 3));
    }
    bool ok = true;
    for (auto& u : a)
      for (auto& v : p) ok = ok && oracle::tie_free(u, v);
    if (!ok) continue;
    ++checked;
    const auto cfg = loss_cfg(0.5, 2);
    // perturb one anchor and one positive; the others stay constant
    for (std::size_t which = 0; which < 2; ++which) {
      auto f = [&](GradTape& t, Var x) {
        std::vector<Var> av, pv;
        for (std::size_t i = 0; i < 3; ++i) {
          av.push_back(which == 0 && i == 1 ? x : t.constant(a[i]));
          pv.push_back(which == 1 && i == 2 ? x : t.constant(p[i]));
        }
        return ad::contrastive_loss(av, pv, cfg);
      };
      EXPECT_LT(check_grad(f, which == 0 ? a[1] : p[2]), 1e-5);
    }
  }
}

TEST(InfoNceGlobal, Examples) {
  std::vector<Mat> same(2, Mat::from_rows({{1, 2}, {3, 4}}));
  EXPECT_NEAR(infonce_global(make_batch(same, same), loss_cfg(0.1)), std::log(2.0), 1e-12);
  // anchor p matches positive p exactly, other positive orthogonal
  std::vector<Mat> a{Mat::from_rows({{1, 0}}), Mat::from_rows({{0, 1}})};
  EXPECT_NEAR(infonce_global(make_batch(a, a), loss_cfg(1.0)), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
  EXPECT_NEAR(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 0.31326, 1e-5);
  std::vector<Mat> ragged{Mat(2, 2, 1.0), Mat(3, 2, 1.0)};
  EXPECT_THROW(infonce_global(make_batch(ragged, ragged), loss_cfg(0.1)), ShapeError);
}

TEST(InfoNceGlobal, MatchesOracle) {
  std::mt19937_64 rng(33);
  std::vector<Mat> a, p;
  for (int i = 0; i < 4; ++i) {
    a.push_back(oracle::random_mat(rng, 5, 3));
    p.push_back(oracle::random_mat(rng, 5, 3));
  }
  const double got = infonce_global(make_batch(a, p), loss_cfg(0.2));
  const double want = oracle::infonce(a, p, 0.2, oracle::flat_cosine);
  EXPECT_LT(oracle::rel_err(got, want), 1e-12);
}
