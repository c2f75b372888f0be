#include <gtest/gtest.h>

#include "neurodec/nn/layers.hpp"
#include "neurodec/nn/optimizer.hpp"
#include "neurodec/nn/similarity.hpp"

using namespace neurodec;
using namespace neurodec::nn;

TEST(Dense, HandComputedOutput) {
  DenseParams d{Tensor({2, 3}, {1, 2, 3, -1, 0, 1}), Tensor::from({0.5, -0.5})};
  const Tensor x({2, 3}, {1, 1, 1, 2, 0, -1});
  const Tensor y = dense_apply(d, x);
  EXPECT_EQ(y.values, (std::vector<double>{6.5, -0.5, -0.5, -3.5}));
  const Tensor single = dense_apply(d, Tensor::from({1, 1, 1}));
  EXPECT_EQ(single.shape, (std::vector<std::size_t>{2}));
  EXPECT_EQ(single.values, (std::vector<double>{6.5, -0.5}));
}

TEST(Dense, WidthMismatchNamesShapes) {
  Rng rng(1);
  const auto d = make_dense(4, 2, rng);
  try {
    dense_apply(d, Tensor::matrix(3, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
    EXPECT_NE(std::string(e.what()).find("[3 x 5]"), std::string::npos);
  }
}

TEST(LeakyRelu, SlopeOnNegativeSide) {
  const Tensor y = leaky_relu(Tensor::from({-2.0, 0.0, 3.0}), 0.3);
  EXPECT_DOUBLE_EQ(y[0], -0.6);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  EXPECT_DOUBLE_EQ(y[2], 3.0);
}

TEST(BatchNorm, TrainModeStandardizesColumns) {
  auto bn = make_batch_norm(2);
  const Tensor x({4, 2}, {1, 10, 2, 20, 3, 30, 6, 40});
  const Tensor y = batch_norm(x, bn, Mode::train);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 4; ++b) m += y(b, j) / 4;
    for (std::size_t b = 0; b < 4; ++b) v += (y(b, j) - m) * (y(b, j) - m) / 4;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-5);  // epsilon 1e-5 shrinks it slightly
  }
}

TEST(BatchNorm, RunningStatisticsFollowEma) {
  // column 0: mean 3, biased variance 3.5; column 1: mean 25, variance 125
  auto bn = make_batch_norm(2);
  const Tensor x({4, 2}, {1, 10, 2, 20, 3, 30, 6, 40});
  batch_norm(x, bn, Mode::train);
  EXPECT_NEAR(bn.running_mean[0], 0.3, 1e-15);
  EXPECT_NEAR(bn.running_mean[1], 2.5, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.35, 1e-15);
  EXPECT_NEAR(bn.running_var[1], 0.9 + 12.5, 1e-13);
  batch_norm(x, bn, Mode::train);
  EXPECT_NEAR(bn.running_mean[0], 0.9 * 0.3 + 0.3, 1e-15);
  EXPECT_NEAR(bn.running_var[1], 0.9 * 13.4 + 12.5, 1e-12);
}

TEST(BatchNorm, InferenceUsesRunningStatistics) {
  auto bn = make_batch_norm(1);
  bn.running_mean[0] = 2.0;
  bn.running_var[0] = 4.0 - bn.epsilon;
  bn.gain[0] = 3.0;
  bn.shift[0] = 1.0;
  const Tensor y = batch_norm(Tensor({1, 1}, {6.0}), bn, Mode::infer);
  EXPECT_NEAR(y[0], 3.0 * 2.0 + 1.0, 1e-12);
}

TEST(BatchNorm, SingleRowTrainBatchIsContractError) {
  auto bn = make_batch_norm(3);
  try {
    batch_norm(Tensor::matrix(1, 3), bn, Mode::train);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contract);
  }
}

TEST(Dropout, InferenceIsIdentity) {
  Rng rng(3);
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(dropout(x, 0.4, rng, Mode::infer), x);
}

TEST(Dropout, MonteCarloKeepsExpectationAndRate) {
  Rng rng(11);
  const Tensor x(std::vector<std::size_t>{200000}, 2.0);
  Tensor mask;
  const Tensor y = dropout(x, 0.4, rng, Mode::train, &mask);
  double mean = 0, zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    mean += y[i] / static_cast<double>(y.size());
    zeros += y[i] == 0.0;
    EXPECT_TRUE(mask[i] == 0.0 || std::abs(mask[i] - 1.0 / 0.6) < 1e-15);
  }
  // binomial standard errors: rate 0.0011, mean 0.0055
  EXPECT_NEAR(zeros / static_cast<double>(y.size()), 0.4, 0.006);
  EXPECT_NEAR(mean, 2.0, 0.03);
}

TEST(Softmax, RowsSumToOneWithin1e12) {
  Rng rng(5);
  std::normal_distribution<double> g(0.0, 30.0);
  Tensor logits = Tensor::matrix(50, 180);
  for (double& v : logits.values) v = g(rng);
  logits(0, 0) = 800.0;  // would overflow without max subtraction
  const Tensor p = softmax(logits);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0;
    for (double v : p.row(r)) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, ShiftInvariant) {
  const Tensor a = softmax(Tensor::from({1.0, 2.0, 3.0}));
  const Tensor b = softmax(Tensor::from({101.0, 102.0, 103.0}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  EXPECT_NEAR(a[2], std::exp(1.0) / (std::exp(-1.0) + 1.0 + std::exp(1.0)), 1e-15);
}

TEST(Adam, TwoStepsMatchHandComputation) {
  // g1 = 0.5: m_hat = 0.5, v_hat = 0.25, step = 1e-3 * 0.5 / (0.5 + 1e-8)
  // g2 = -0.25: m = 0.02, v = 3.1225e-4, bias corrections 0.19 and 0.001999
  OptimizerState st;
  Tensor p = Tensor::from({1.0});
  optimizer_step(st, p, Tensor::from({0.5}));
  EXPECT_NEAR(p[0], 0.99900000002, 1e-15);
  optimizer_step(st, p, Tensor::from({-0.25}));
  EXPECT_NEAR(p[0], 0.9987336629870784, 1e-15);
  EXPECT_EQ(st.step, 2);
}

TEST(Adam, ParameterCountDriftIsDimensionError) {
  OptimizerState st;
  Tensor a = Tensor::from({1.0}), b = Tensor::from({2.0});
  optimizer_step(st, a, Tensor::from({0.1}));
  Tensor* ps[] = {&a, &b};
  const Tensor* gs[] = {&a, &b};
  EXPECT_THROW(optimizer_step(st, std::span<Tensor* const>(ps), std::span<const Tensor* const>(gs)), Error);
}

TEST(Similarity, CosineAndPearson) {
  const std::vector<double> a{1, 0, 0}, b{0, 2, 0}, c{3, 0, 0};
  EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_DOUBLE_EQ(cosine_distance(a, c), 0.0);
  const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{4, 3, 2, 1};
  EXPECT_NEAR(pearson_correlation(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson_correlation(x, z), -1.0, 1e-15);
  const std::vector<double> flat{5, 5, 5, 5};
  try {
    pearson_correlation(flat, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_vector);
  }
}
