// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "ta2cl/core/gradcheck.hpp"
#include "ta2cl/core/mat.hpp"
#include "ta2cl/core/ops.hpp"
#include "ta2cl/core/tape.hpp"
#include "ta2cl/core/topk.hpp"

using namespace ta2cl;

TEST(Matmul, IdentityAndPermutation) {
  EXPECT_EQ(matmul(Mat::identity(2), Mat::from_rows({{3}, {4}})), Mat::from_rows({{3}, {4}}));
  EXPECT_EQ(matmul(Mat::from_rows({{1, 0}, {0, 1}}), Mat::from_rows({{0, 1}, {1, 0}})),
            Mat::from_rows({{0, 1}, {1, 0}}));
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(7);
  const Mat a = oracle::random_mat(rng, 3, 2);
  const Mat b = oracle::random_mat(rng, 2, 4);
  const Mat got = matmul(a, b);
  const Mat want = oracle::naive_matmul(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.flat()[i], want.flat()[i], 1e-15);
  EXPECT_EQ(matmul_nt(a, transpose(b)), got);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Mat(2, 3), Mat(2, 3));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("2x3 by 2x3"), std::string::npos);
  }
}

TEST(Matmul, AssociativeOnRandomTriples) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = oracle::random_mat(rng, 4, 3), b = oracle::random_mat(rng, 3, 5),
              c = oracle::random_mat(rng, 5, 2);
    const Mat l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    const double scale = std::max(frobenius_norm(l), 1e-300);
    EXPECT_LT(frobenius_norm(sub(l, r)) / scale, 1e-9);
  }
}

TEST(TopK, Examples) {
  EXPECT_EQ(topk_row(std::vector<double>{0.2, 0.9, 0.5}, 2), (std::vector<double>{0.9, 0.5}));
  EXPECT_EQ(topk_row(std::vector<double>{1, 1, 1}, 2), (std::vector<double>{1, 1}));
  EXPECT_EQ(topk_indices(std::vector<double>{1, 1, 1}, 2), (std::vector<std::size_t>{0, 1}));
}

TEST(TopK, MatchesFullSortPrefix) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-5, 5);
  std::vector<double> v(100);
  for (double& x : v) x = d(rng);
  const auto sorted = oracle::sorted_desc(v);
  EXPECT_EQ(topk_row(v, 7), std::vector<double>(sorted.begin(), sorted.begin() + 7));
  EXPECT_EQ(topk_row(v, v.size()), sorted);
  EXPECT_EQ(topk_row(v, 1).front(), *std::max_element(v.begin(), v.end()));
}

TEST(TopK, RejectsOutOfRangeK) {
  const std::vector<double> v{1, 2};
  EXPECT_THROW(topk_row(v, 0), ValueError);
  EXPECT_THROW(topk_row(v, 3), ValueError);
}

TEST(Backward, SumGivesOnes) {
  GradTape tape;
  Var w = tape.leaf(Mat::from_rows({{1, 2}, {3, 4}}));
  tape.backward(ad::sum(w));
  EXPECT_EQ(w.grad(), Mat(2, 2, 1.0));
}

TEST(Backward, SquaredNorm) {
  GradTape tape;
  Var w = tape.leaf(Mat::from_rows({{1, 2}}));
  tape.backward(ad::sum(ad::hadamard(w, w)));
  EXPECT_EQ(w.grad(), Mat::from_rows({{2, 4}}));
}

TEST(Backward, RejectsNonScalarLoss) {
  GradTape tape;
  Var w = tape.leaf(Mat(2, 2, 1.0));
  EXPECT_THROW(tape.backward(w), ValueError);
}

TEST(Backward, VisitsNodesInReverseTopologicalOrder) {
  GradTape tape;
  Var a = tape.leaf(Mat(2, 2, 1.0));
  Var c = tape.constant(Mat(2, 2, 2.0));
  Var b = ad::matmul(a, c);
  Var d = ad::elu(b);
  Var loss = ad::sum(ad::add(d, a));
  tape.backward(loss);
  const auto order = tape.last_backward_order();
  ASSERT_FALSE(order.empty());
  EXPECT_EQ(order.front(), loss.id());
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end(), std::greater<>()));
  // constants are skipped
  EXPECT_EQ(std::count(order.begin(), order.end(), c.id()), 0);
  EXPECT_EQ(a.grad().rows(), 2u);
  EXPECT_EQ(a.grad().cols(), 2u);
}

TEST(Backward, UnreachedLeafGetsZeroAdjointOfSameShape) {
  GradTape tape;
  Var unused = tape.leaf(Mat(3, 2, 5.0));
  Var w = tape.leaf(Mat(1, 1, 2.0));
  tape.backward(ad::sum(w));
  EXPECT_EQ(unused.grad(), Mat(3, 2));
}

TEST(CheckGrad, SumOfSquares) {
  std::mt19937_64 rng(1);
  const Mat x = oracle::random_mat(rng, 3, 3);
  EXPECT_LT(check_grad([](GradTape&, Var v) { return ad::sum(ad::hadamard(v, v)); }, x), 1e-8);
}

// Each differentiable primitive against central differences at 10 random points.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(100 + GetParam());
  const Mat other = oracle::random_mat(rng, 4, 3);
  const Mat weights = oracle::random_mat(rng, 4, 6);
  const Mat col = oracle::random_mat(rng, 4, 1);
  const Mat row = oracle::random_mat(rng, 1, 3);
  const Mat filt = oracle::random_mat(rng, 2, 5);
  const Mat fbias = oracle::random_mat(rng, 2, 1);
  const Mat mixw = oracle::random_mat(rng, 6, 2);
  const Mat mixb = oracle::random_mat(rng, 6, 1);
  const Mat dw = oracle::random_mat(rng, 4, 3);
  const Mat db = oracle::random_mat(rng, 4, 1);
  // Random linear read-out so every op's output gradient is nontrivial.
  auto readout = [&](GradTape& t, Var y) {
    std::mt19937_64 r2(5);
    return ad::sum(ad::hadamard(y, t.constant(oracle::random_mat(r2, y.rows(), y.cols()))));
  };
  for (int point = 0; point < 10; ++point) {
    const Mat x = oracle::random_mat(rng, 4, 3);
    const Mat series = oracle::random_mat(rng, 2, 12);
    int op = 0;
    auto check = [&](const Mat& at, auto&& build) {
      SCOPED_TRACE("op #" + std::to_string(op++));
      EXPECT_LT(check_grad([&](GradTape& t, Var v) { return readout(t, build(t, v)); }, at), 1e-6);
    };
    check(x, [&](GradTape& t, Var v) { return ad::matmul(v, t.constant(transpose(other))); });
    check(x, [&](GradTape& t, Var v) { return ad::matmul(t.constant(transpose(weights)), v); });
    check(x, [&](GradTape& t, Var v) { return ad::matmul_nt(v, t.constant(other)); });
    check(x, [&](GradTape& t, Var v) { return ad::matmul_nt(t.constant(other), v); });
    check(x, [&](GradTape& t, Var v) { return ad::sub(ad::hadamard(v, v), ad::scale(v, 3.0)); });
    check(x, [&](GradTape& t, Var v) { return ad::add_row_bias(v, t.constant(row)); });
    check(row, [&](GradTape& t, Var v) { return ad::add_row_bias(t.constant(x), v); });
    check(col, [&](GradTape& t, Var v) { return ad::add_col_bias(t.constant(x), v); });
    check(x, [&](GradTape&, Var v) { return ad::elu(ad::scale(v, 2.0)); });
    check(x, [&](GradTape&, Var v) { return ad::transpose(v); });
    check(x, [&](GradTape&, Var v) { return ad::mean_rows(v); });
    check(x, [&](GradTape&, Var v) { return ad::l2_normalize_rows(v); });
    check(x, [&](GradTape&, Var v) { return ad::softmax_cols(v); });
    check(x, [&](GradTape& t, Var v) {
      const Var parts[] = {v, t.constant(other), v};
      return ad::concat_rows(parts);
    });
    check(x, [&](GradTape&, Var v) {
      std::vector<std::size_t> targets{0, 2, 1, 1};
      return ad::cross_entropy(ad::scale(v, 4.0), targets);
    });
    check(series, [&](GradTape& t, Var v) {
      return ad::temporal_filter_bank(v, t.constant(filt), t.constant(fbias));
    });
    check(filt, [&](GradTape& t, Var v) {
      return ad::temporal_filter_bank(t.constant(series), v, t.constant(fbias));
    });
    check(series, [&](GradTape& t, Var v) {
      Var h = ad::temporal_filter_bank(v, t.constant(filt), t.constant(fbias));  // 4 x 12
      return ad::grouped_mix(h, t.constant(mixw), t.constant(mixb), 2);
    });
    check(mixw, [&](GradTape& t, Var v) {
      return ad::grouped_mix(t.constant(Mat(4, 12, 0.5)), v, t.constant(mixb), 2);
    });
    const Mat grouped_in = oracle::random_mat(rng, 4, 12);
    check(mixb, [&](GradTape& t, Var v) {
      return ad::grouped_mix(t.constant(grouped_in), t.constant(mixw), v, 2);
    });
    const Mat rows4 = oracle::random_mat(rng, 4, 15);
    for (std::size_t dil : {1u, 2u, 4u}) {
      check(rows4, [&](GradTape& t, Var v) { return ad::depthwise_conv(v, t.constant(dw), t.constant(db), dil); });
      check(dw, [&](GradTape& t, Var v) { return ad::depthwise_conv(t.constant(rows4), v, t.constant(db), dil); });
      check(db, [&](GradTape& t, Var v) { return ad::depthwise_conv(t.constant(rows4), t.constant(dw), v, dil); });
    }
    check(rows4, [&](GradTape&, Var v) { return ad::avg_pool_cols(v, 4); });
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 3));

TEST(Ops, SameConvKeepsLengthAndIsShiftCovariant) {
  std::mt19937_64 rng(9);
  Mat x(1, 40);
  for (std::size_t t = 10; t < 20; ++t) x(0, t) = std::sin(static_cast<double>(t));
  Mat shifted(1, 40);
  for (std::size_t t = 0; t + 5 < 40; ++t) shifted(0, t + 5) = x(0, t);
  const Mat w = oracle::random_mat(rng, 1, 3);
  GradTape tape;
  const Mat a = ad::depthwise_conv(tape.constant(x), tape.constant(w), tape.constant(Mat(1, 1)), 3).value();
  const Mat b = ad::depthwise_conv(tape.constant(shifted), tape.constant(w), tape.constant(Mat(1, 1)), 3).value();
  ASSERT_EQ(a.cols(), 40u);
  for (std::size_t t = 0; t + 5 < 40; ++t) EXPECT_NEAR(b(0, t + 5), a(0, t), 1e-12);
}

TEST(Ops, CrossEntropyStaysPositiveWhenSaturated) {
  GradTape tape;
  Var logits = tape.constant(Mat::from_rows({{100.0, 0.0}}));
  std::vector<std::size_t> target{0};
  const double loss = ad::cross_entropy(logits, target).value()(0, 0);
  EXPECT_GT(loss, 0.0);
  EXPECT_LT(loss, 1e-40);
}

TEST(MatSerialization, RoundTripIsBitExact) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(0, 6);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat m = oracle::random_mat(rng, dim(rng), dim(rng), -1e6, 1e6);
    std::stringstream ss;
    write_mat(ss, m);
    EXPECT_EQ(ss.str().size(), 12 + 8 * m.size());
    EXPECT_EQ(read_mat(ss), m);
  }
}

TEST(MatSerialization, LayoutIsLittleEndian) {
  std::stringstream ss;
  write_mat(ss, Mat::from_rows({{1.0}}));
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "MAT1");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 0x3f);  // high byte of 1.0
}

TEST(MatSerialization, RejectsBadMagicAndTruncation) {
  std::stringstream bad("MAT2xxxxxxxx");
  EXPECT_THROW(read_mat(bad), IoError);
  std::stringstream ss;
  write_mat(ss, Mat(2, 2, 1.0));
  std::string s = ss.str();
  std::stringstream truncated(s.substr(0, s.size() - 3));
  EXPECT_THROW(read_mat(truncated), IoError);
}
