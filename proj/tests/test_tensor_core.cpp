#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "big/binary_io.hpp"
#include "big/checkpoint.hpp"
#include "big/error.hpp"
#include "big/ops.hpp"
#include "grad_check.hpp"

using namespace big;
using big::testing::check_gradients;
using big::testing::kFdRelTol;
using big::testing::random_tensor;

namespace {

Tensor t2(std::size_t r, std::size_t c, std::vector<double> v, bool rg = false) {
  return Tensor({r, c}, std::move(v), rg);
}

void expect_near_all(std::span<const double> got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "at " << i;
}

constexpr int kTrials = 100;

}  // namespace

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  Rng rng(1);
  Tensor eye = t2(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b = random_tensor(rng, {3, 5}, -2, 2, false);
  Tensor c = ops::matmul(eye, b);
  expect_near_all(c.data(), std::vector<double>(b.data().begin(), b.data().end()), 0.0);
}

TEST(Matmul, HandExample) {
  Tensor c = ops::matmul(t2(2, 2, {1, 2, 3, 4}), t2(2, 1, {0, 1}));
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  expect_near_all(c.data(), {2, 4}, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    double err = check_gradients([&] { return ops::sum(ops::matmul(a, b)); }, {a, b});
    ASSERT_LT(err, kFdRelTol);
  }
}

TEST(SpikeMatmul, AgreesWithDenseProductAndCountsAccumulates) {
  Tensor s = t2(2, 3, {1, 0, 1, 0, 0, 1});
  Tensor w = t2(3, 2, {1, 2, 3, 4, 5, 6});
  CountScope cs;
  Tensor dense = ops::matmul(s, w);
  Tensor sparse = ops::spike_matmul(s, w);
  expect_near_all(sparse.data(), std::vector<double>(dense.data().begin(), dense.data().end()), 0.0);
  EXPECT_EQ(cs.counts().accumulates, 3u * 2u);
  EXPECT_EQ(cs.counts().macs, 2u * 3u * 2u);
}

TEST(Conv1d, IdentityKernel) {
  Tensor x = t2(1, 5, {3, -1, 4, 1, 5});
  Tensor y = ops::conv1d(x, Tensor({1, 1, 1}, {1.0}), Tensor::zeros({1}), 1, 0);
  expect_near_all(y.data(), {3, -1, 4, 1, 5}, 0.0);
}

TEST(Conv1d, HandCrossCorrelation) {
  Tensor y = ops::conv1d(t2(1, 4, {1, 2, 3, 4}), Tensor({1, 1, 2}, {1, -1}), Tensor::zeros({1}), 1, 0);
  expect_near_all(y.data(), {-1, -1, -1}, 0.0);
}

TEST(Conv1d, NonPositiveOutputLengthIsConfigError) {
  EXPECT_THROW(ops::conv1d(t2(1, 3, {1, 2, 3}), Tensor::zeros({1, 1, 5}), Tensor::zeros({1}), 1, 0), ConfigError);
}

TEST(Conv1d, GradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t stride = 1 + trial % 2, pad = trial % 3, groups = trial % 4 == 0 ? 2 : 1;
    Tensor x = random_tensor(rng, {2, 4, 7});
    Tensor w = random_tensor(rng, {4, 4 / groups, 3});
    Tensor b = random_tensor(rng, {4});
    Tensor probe = random_tensor(rng, {2, 4, (7 + 2 * pad - 3) / stride + 1}, -2, 2, false);
    auto f = [&] {
      return ops::sum(ops::mul(ops::conv1d(x, w, b, ops::Conv1dOptions{stride, pad, pad, groups}), probe));
    };
    ASSERT_LT(check_gradients(f, {x, w, b}), kFdRelTol);
  }
}

TEST(Conv1d, AsymmetricPaddingKeepsLength) {
  Tensor x = Tensor::full({1, 10}, 1.0);
  Tensor y = ops::conv1d(x, Tensor::full({2, 1, 4}, 1.0), Tensor::zeros({2}), ops::Conv1dOptions{1, 1, 2, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 10}));
}

TEST(Conv1dTransposed, IdentityKernel) {
  Tensor y = ops::conv1d_transposed(t2(1, 3, {2, 7, 1}), Tensor({1, 1, 1}, {1.0}), Tensor::zeros({1}), 1);
  expect_near_all(y.data(), {2, 7, 1}, 0.0);
}

TEST(Conv1dTransposed, HandUpsampleExample) {
  Tensor y = ops::conv1d_transposed(t2(1, 2, {1, 0}), Tensor({1, 1, 2}, {1, 2}), Tensor::zeros({1}), 2);
  expect_near_all(y.data(), {1, 2, 0, 0}, 0.0);
}

TEST(Conv1dTransposed, AdjointIdentityWithConv1d) {
  Rng rng(4);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t cin = 1 + rng.below(8), cout = 1 + rng.below(8), k = 1 + rng.below(8);
    const std::size_t stride = 1 + rng.below(3), lout = 1 + rng.below(8);
    const std::size_t len = (lout - 1) * stride + k;
    Tensor x = random_tensor(rng, {cin, len}, -1, 1, false);
    Tensor w = random_tensor(rng, {cout, cin, k}, -1, 1, false);
    Tensor y = random_tensor(rng, {cout, lout}, -1, 1, false);
    Tensor cx = ops::conv1d(x, w, Tensor::zeros({cout}), stride, 0);
    Tensor ty = ops::conv1d_transposed(y, w, Tensor::zeros({cin}), stride);
    ASSERT_EQ(ty.shape(), x.shape());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cx.numel(); ++i) lhs += cx[i] * y[i];
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += x[i] * ty[i];
    ASSERT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Conv1dTransposed, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t stride = 1 + trial % 3, pad = trial % 2;
    Tensor x = random_tensor(rng, {2, 3, 4});
    Tensor w = random_tensor(rng, {3, 2, 4});
    Tensor b = random_tensor(rng, {2});
    const std::size_t lout = 3 * stride + 4 - 2 * pad;
    Tensor probe = random_tensor(rng, {2, 2, lout}, -2, 2, false);
    auto f = [&] { return ops::sum(ops::mul(ops::conv1d_transposed(x, w, b, stride, pad), probe)); };
    ASSERT_LT(check_gradients(f, {x, w, b}), kFdRelTol);
  }
}

TEST(AvgPool1d, ConstantInput) {
  Tensor y = ops::avgpool1d(Tensor::full({2, 9}, 3.25), 3);
  expect_near_all(y.data(), std::vector<double>(6, 3.25), 0.0);
}

TEST(AvgPool1d, HandMeans) {
  expect_near_all(ops::avgpool1d(t2(1, 4, {1, 2, 3, 4}), 2).data(), {1.5, 3.5}, 0.0);
}

TEST(AvgPool1d, RemainderDroppedAndWindowTooLargeRejected) {
  EXPECT_EQ(ops::avgpool1d(Tensor::zeros({1, 7}), 2).shape(), (Shape{1, 3}));
  EXPECT_THROW(ops::avgpool1d(Tensor::zeros({1, 3}), 4), ConfigError);
}

TEST(AvgPool1d, GradientIsOneOverWindow) {
  Tensor x = Tensor::full({1, 8}, 0.5, true);
  Tape tape;
  {
    TapeScope scope(tape);
    backward(tape, ops::sum(ops::avgpool1d(x, 4)));
  }
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.25);
  Rng rng(6);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {2, 3, 9});
    Tensor probe = random_tensor(rng, {2, 3, 3}, -2, 2, false);
    ASSERT_LT(check_gradients([&] { return ops::sum(ops::mul(ops::avgpool1d(a, 3), probe)); }, {a}), kFdRelTol);
  }
}

TEST(Softmax, Examples) {
  expect_near_all(ops::softmax(Tensor({3}, {0, 0, 0})).data(), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
  expect_near_all(ops::softmax(Tensor({2}, {1000, 1000})).data(), {0.5, 0.5}, 1e-15);
  expect_near_all(ops::softmax(Tensor({2}, {0, std::log(3.0)})).data(), {0.25, 0.75}, 1e-15);
}

TEST(Softmax, SumsToOneAndGradientChecks) {
  Rng rng(7);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {3, 5});
    Tensor y = ops::softmax(a);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        s += y[r * 5 + j];
        ASSERT_GT(y[r * 5 + j], 0.0);
      }
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
    Tensor probe = random_tensor(rng, {3, 5}, -2, 2, false);
    ASSERT_LT(check_gradients([&] { return ops::sum(ops::mul(ops::softmax(a), probe)); }, {a}), kFdRelTol);
    ASSERT_LT(check_gradients([&] { return ops::sum(ops::mul(ops::log_softmax(a), probe)); }, {a}), kFdRelTol);
  }
}

TEST(Backward, SumGivesOnes) {
  Tensor w({4}, {1, -2, 3, 0.5}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    backward(tape, ops::sum(w));
  }
  expect_near_all(w.grad(), {1, 1, 1, 1}, 0.0);
}

TEST(Backward, SumOfSquaresGivesTwiceW) {
  Tensor w({4}, {1, -2, 3, 0.5}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    backward(tape, ops::sum(ops::mul(w, w)));
  }
  expect_near_all(w.grad(), {2, -4, 6, 1}, 1e-15);
}

TEST(Backward, GradientsAccumulateAcrossUses) {
  Tensor w({2}, {1.5, -0.5}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor l = ops::add(ops::sum(w), ops::sum(ops::scale(w, 3.0)));
    backward(tape, l);
  }
  expect_near_all(w.grad(), {4, 4}, 0.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w({2}, {1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = ops::scale(w, 2.0);
  EXPECT_THROW(backward(tape, y), ContractError);
}

TEST(Backward, ReluOfConvMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor x = random_tensor(rng, {2, 6});
    Tensor w = random_tensor(rng, {3, 2, 3});
    Tensor b = random_tensor(rng, {3});
    Tensor probe = random_tensor(rng, {3, 4}, -2, 2, false);
    auto f = [&] { return ops::sum(ops::mul(ops::relu(ops::conv1d(x, w, b, 1, 0)), probe)); };
    ASSERT_LT(check_gradients(f, {x, w, b}), kFdRelTol);
  }
}

TEST(Backward, DeterministicAcrossIdenticalTapes) {
  auto run = [] {
    Rng rng(9);
    Tensor x = random_tensor(rng, {2, 3, 8});
    Tensor w = random_tensor(rng, {4, 3, 3});
    Tensor b = random_tensor(rng, {4});
    Tape tape;
    TapeScope scope(tape);
    backward(tape, ops::sum(ops::square(ops::relu(ops::conv1d(x, w, b, 2, 1)))));
    std::vector<double> g(w.grad().begin(), w.grad().end());
    g.insert(g.end(), x.grad().begin(), x.grad().end());
    return g;
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i]));
}

TEST(Elementwise, BroadcastingForwardAndGradients) {
  Rng rng(10);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {4, 3, 2});
    Tensor b = random_tensor(rng, {4, 1, 2});
    Tensor c = random_tensor(rng, {2});
    auto f = [&] { return ops::sum(ops::mul(ops::add(ops::mul(a, b), c), ops::sub(a, b))); };
    ASSERT_LT(check_gradients(f, {a, b, c}), kFdRelTol);
  }
  Tensor y = ops::add(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, {10, 20}));
  expect_near_all(y.data(), {11, 22, 13, 24}, 0.0);
  EXPECT_THROW(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
}

TEST(Elementwise, UnaryOpsGradients) {
  Rng rng(11);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {3, 4});
    Tensor probe = random_tensor(rng, {3, 4}, -2, 2, false);
    auto f = [&] {
      Tensor s = ops::add(ops::sigmoid(a), ops::exp(ops::scale(a, 0.5)));
      s = ops::add(s, ops::relu(ops::add_scalar(a, 0.1)));
      return ops::sum(ops::mul(ops::square(s), probe));
    };
    ASSERT_LT(check_gradients(f, {a}), kFdRelTol);
  }
}

TEST(Shapes, ReshapeConcatSliceIndexSelectCumsumGradients) {
  Rng rng(12);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {2, 3, 4});
    Tensor b = random_tensor(rng, {2, 2, 4});
    Tensor probe = random_tensor(rng, {2, 3, 4}, -2, 2, false);
    const std::vector<std::size_t> idx{4, 0, 2};
    auto f = [&] {
      std::vector<Tensor> parts{a, b};
      Tensor c = ops::concat(parts, 1);                  // 2x5x4
      Tensor s = ops::index_select(c, 1, idx);           // 2x3x4
      Tensor q = ops::cumsum(s, 2);
      Tensor r = ops::reshape(ops::slice(q, 2, 1, 2), {2, 6});
      Tensor m = ops::sum_axis(ops::mul(q, probe), 1, true);
      return ops::add(ops::sum(ops::square(r)), ops::sum(m));
    };
    ASSERT_LT(check_gradients(f, {a, b}), kFdRelTol);
  }
}

TEST(BatchNorm, TrainAndEvalGradientsAndRunningStats) {
  Rng rng(13);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor x = random_tensor(rng, {3, 2, 5});
    Tensor g = random_tensor(rng, {2});
    Tensor b = random_tensor(rng, {2});
    Tensor probe = random_tensor(rng, {3, 2, 5}, -2, 2, false);
    ops::BatchNormState st(2);
    const bool train = trial % 2 == 0;
    auto f = [&] { return ops::sum(ops::mul(ops::batchnorm1d(x, g, b, st, train), probe)); };
    ASSERT_LT(check_gradients(f, {x, g, b}), kFdRelTol);
  }
  // Running statistics move toward the batch statistics by the momentum.
  ops::BatchNormState st(1);
  Tensor x({1, 1, 4}, {1, 2, 3, 4});
  Tensor y = ops::batchnorm1d(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, true);
  EXPECT_NEAR(st.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
  double m = 0;
  for (double v : y.data()) m += v;
  EXPECT_NEAR(m, 0.0, 1e-12);
}

TEST(Dropout, EvalIsIdentityTrainIsSeededAndScaled) {
  Rng rng(14);
  Tensor x = random_tensor(rng, {4, 50}, -2, 2, false);
  Tensor e = ops::dropout(x, 0.25, false, 1);
  EXPECT_TRUE(e.same_as(x));
  Tensor a = ops::dropout(x, 0.25, true, 77);
  Tensor b = ops::dropout(x, 0.25, true, 77);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    if (a[i] == 0.0) {
      ++dropped;
    } else {
      EXPECT_NEAR(a[i], x[i] / 0.75, 1e-15);
    }
  }
  EXPECT_GT(dropped, 20u);
  EXPECT_LT(dropped, 80u);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor z = random_tensor(rng, {3, 6});
    Tensor probe = random_tensor(rng, {3, 6}, -2, 2, false);
    const auto seed = static_cast<std::uint64_t>(trial);
    ASSERT_LT(check_gradients([&] { return ops::sum(ops::mul(ops::dropout(z, 0.25, true, seed), probe)); }, {z}),
              kFdRelTol);
  }
}

TEST(Losses, MseAndCrossEntropyGradients) {
  Rng rng(15);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor p = random_tensor(rng, {2, 5});
    Tensor t = random_tensor(rng, {2, 5});
    ASSERT_LT(check_gradients([&] { return ops::mse_loss(p, t); }, {p, t}), kFdRelTol);
    Tensor logits = random_tensor(rng, {4, 3});
    const std::vector<int> labels{0, 2, 1, 2};
    ASSERT_LT(check_gradients([&] { return ops::cross_entropy_with_softmax(logits, labels); }, {logits}), kFdRelTol);
  }
  EXPECT_NEAR(ops::mse_loss(Tensor({2}, {1, 3}), Tensor({2}, {0, 0})).item(), 5.0, 1e-15);
  EXPECT_NEAR(ops::cross_entropy_with_softmax(Tensor({2}, {0, 0}), std::vector<int>{1}).item(), std::log(2.0), 1e-15);
}

TEST(SpikeFn, HardForwardSmoothGradientMatchesFiniteDifferences) {
  Tensor x({4}, {-1, 0.999, 1.0, 3});
  expect_near_all(ops::spike_fn(x, 1.0, 10.0).data(), {0, 0, 1, 1}, 0.0);
  EXPECT_NEAR(ops::sigmoid_surrogate(1.0, 1.0, 10.0), 2.5, 1e-15);
  Rng rng(16);
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor a = random_tensor(rng, {3, 4});
    Tensor probe = random_tensor(rng, {3, 4}, -2, 2, false);
    auto f = [&] { return ops::sum(ops::mul(ops::spike_fn(a, 0.3, 4.0, ops::SpikeForward::Smooth), probe)); };
    ASSERT_LT(check_gradients(f, {a}), kFdRelTol);
  }
}

TEST(OpCounter, CountsOnlyInsideScope) {
  Tensor x = Tensor::full({3, 20}, 1.0);
  Tensor w = Tensor::full({8, 3, 5}, 0.1);
  ops::conv1d(x, w, Tensor::zeros({8}), 1, 2);
  CountScope cs;
  ops::conv1d(x, w, Tensor::zeros({8}), 1, 2);
  EXPECT_EQ(cs.counts().macs, 8u * 3u * 5u * 20u);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::string path(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("big_ckpt_" + name);
    created_.push_back(p.string());
    return p.string();
  }
  void TearDown() override {
    for (auto& p : created_) std::filesystem::remove(p);
  }
  std::vector<std::string> created_;
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  Rng rng(17);
  Checkpoint c;
  c.tensors.push_back({"enc.w1", random_tensor(rng, {16, 8, 7}, -1, 1, false)});
  c.tensors.push_back({"meta.scale", Tensor::scalar(0.1 + 0.2)});
  TrainingState st;
  st.epoch = 3;
  st.step = 42;
  st.seed = 0xdeadbeefULL;
  st.moments.push_back({"m.enc.w1", random_tensor(rng, {16, 8, 7}, -1, 1, false)});
  c.training = st;
  const auto p = path("roundtrip.bigm");
  save_checkpoint(p, c);
  Checkpoint d = load_checkpoint(p);
  ASSERT_EQ(d.tensors.size(), 2u);
  EXPECT_EQ(d.tensors[0].name, "enc.w1");
  EXPECT_EQ(d.tensors[0].tensor.shape(), (Shape{16, 8, 7}));
  for (std::size_t i = 0; i < c.tensors[0].tensor.numel(); ++i)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(d.tensors[0].tensor[i]), std::bit_cast<std::uint64_t>(c.tensors[0].tensor[i]));
  ASSERT_TRUE(d.training.has_value());
  EXPECT_EQ(d.training->epoch, 3u);
  EXPECT_EQ(d.training->step, 42u);
  EXPECT_EQ(d.training->seed, 0xdeadbeefULL);
  EXPECT_EQ(d.training->moments[0].tensor[5], st.moments[0].tensor[5]);
}

TEST_F(CheckpointTest, LayoutIsLittleEndianAsDocumented) {
  Checkpoint c;
  c.tensors.push_back({"w", Tensor({2}, {1.0, -2.0})});
  const auto p = path("layout.bigm");
  save_checkpoint(p, c);
  std::ifstream in(p, std::ios::binary);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 1 + 4 + 8 + 16);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "BIGM");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[8], 1);   // record count
  EXPECT_EQ(b[12], 1);  // name length
  EXPECT_EQ(b[16], 'w');
  EXPECT_EQ(b[17], 1);  // rank
  EXPECT_EQ(b[21], 2);  // dim 0
  EXPECT_EQ(b[35], 0xf0);  // 1.0 = 0x3ff0...0, low byte first
  EXPECT_EQ(b[36], 0x3f);
}

TEST_F(CheckpointTest, MalformedFilesAreParseErrors) {
  const auto empty = path("empty.bigm");
  std::ofstream(empty).close();
  EXPECT_THROW(load_checkpoint(empty), ParseError);

  const auto bad = path("bad.bigm");
  std::ofstream(bad) << "NOPE0000";
  EXPECT_THROW(load_checkpoint(bad), ParseError);

  Checkpoint c;
  c.tensors.push_back({"w", Tensor({3}, {1, 2, 3})});
  const auto good = path("good.bigm");
  save_checkpoint(good, c);
  auto bytes = binio::read_file(good);
  const auto trunc = path("trunc.bigm");
  std::ofstream(trunc, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
  EXPECT_THROW(load_checkpoint(trunc), ParseError);

  bytes[4] = 9;
  const auto ver = path("ver.bigm");
  std::ofstream(ver, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  try {
    load_checkpoint(ver);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}
