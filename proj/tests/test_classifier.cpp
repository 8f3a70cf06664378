#include <gtest/gtest.h>

#include <cmath>

#include "big/classifier.hpp"
#include "big/error.hpp"
#include "grad_check.hpp"

using namespace big;
using big::testing::check_gradients;
using big::testing::kFdRelTol;
using big::testing::random_tensor;

namespace {

ClassifierConfig truncated_config() {
  ClassifierConfig c;
  c.in_channels = 2;
  c.length = 8;
  c.n_classes = 3;
  c.filters = {2, 3, 2};
  c.kernels = {3, 4, 2};
  c.pool1 = 2;
  c.pool2 = 2;
  return c;
}

ClassifierConfig fig3_config(std::size_t channels = 4, std::size_t length = 32) {
  ClassifierConfig c;
  c.in_channels = channels;
  c.length = length;
  return c;
}

}  // namespace

TEST(Classifier, DefaultArchitectureConstants) {
  const ClassifierConfig c;
  EXPECT_EQ(c.filters, (std::vector<std::size_t>{8, 16, 32}));
  EXPECT_EQ(c.kernels, (std::vector<std::size_t>{64, 32, 16}));
  EXPECT_EQ(c.pool1, 4u);
  EXPECT_EQ(c.pool2, 8u);
  EXPECT_EQ(c.drop, 0.25);
  Classifier net(fig3_config(), 1);
  EXPECT_EQ(net.conv_w[0].shape(), (Shape{8, 4, 64}));
  EXPECT_EQ(net.conv_w[1].shape(), (Shape{16, 8, 32}));
  EXPECT_EQ(net.conv_w[2].shape(), (Shape{32, 16, 16}));
  EXPECT_EQ(net.dense_w.shape(), (Shape{32, 2}));
}

TEST(Classifier, ProbabilitiesSumToOne) {
  Classifier net(fig3_config(), 2);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor p = net.probabilities(random_tensor(rng, {3, 4, 32}, -2, 2, false), trial % 2 == 0, trial);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_GE(p[r * 2 + k], 0.0);
        s += p[r * 2 + k];
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Classifier, EvalModeIsPure) {
  Classifier net(fig3_config(), 4);
  Rng rng(5);
  const Tensor x = random_tensor(rng, {2, 4, 32}, -1, 1, false);
  const Tensor a = net.logits(x, false), b = net.logits(x, false);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Classifier, TrainModeDeterministicPerSeed) {
  Classifier n1(fig3_config(), 6), n2(fig3_config(), 6);
  Rng rng(7);
  const Tensor x = random_tensor(rng, {4, 4, 32}, -1, 1, false);
  const Tensor a = n1.logits(x, true, 99), b = n2.logits(x, true, 99);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(n1.bn[0].running_mean[c], n2.bn[0].running_mean[c]);
}

TEST(Classifier, ZeroWeightsGiveUniform) {
  Classifier net(fig3_config(), 8);
  for (auto& nt : net.named_parameters()) {
    if (nt.name.find("gamma") != std::string::npos) continue;
    Tensor t = nt.tensor;
    for (auto& e : t.mutable_data()) e = 0.0;
  }
  Rng rng(9);
  for (bool train : {false, true}) {
    const Tensor p = net.probabilities(random_tensor(rng, {2, 4, 32}, -1, 1, false), train, 1);
    for (double v : p.data()) EXPECT_EQ(v, 0.5);
  }
}

TEST(Classifier, ShortInputNamesMinimumLength) {
  auto c = fig3_config(4, 16);
  try {
    Classifier net(c, 1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos) << e.what();
  }
  Classifier net(fig3_config(), 1);
  try {
    net.logits(Tensor::zeros({1, 4, 20}), false);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("32"), std::string::npos) << e.what();
  }
  EXPECT_THROW(net.logits(Tensor::zeros({1, 5, 32}), false), ConfigError);
}

TEST(Classifier, CrossEntropyGradientTrainMode) {
  Classifier net(truncated_config(), 10);
  Rng rng(11);
  const Tensor x = random_tensor(rng, {4, 2, 8}, -1, 1, true);
  const int labels[] = {0, 2, 1, 2};
  auto loss = [&]() { return ops::cross_entropy_with_softmax(net.logits(x, true, 12), labels); };
  std::vector<Tensor> params{x};
  for (auto& nt : net.named_parameters()) params.push_back(nt.tensor);
  EXPECT_LT(check_gradients(loss, params), kFdRelTol);
}

TEST(Classifier, CrossEntropyGradientEvalMode) {
  Classifier net(truncated_config(), 13);
  net.bn[0].running_var = {0.5, 2.0};
  net.bn[1].running_mean = {0.1, -0.2, 0.3};
  Rng rng(14);
  const Tensor x = random_tensor(rng, {3, 2, 8}, -1, 1, true);
  const int labels[] = {1, 0, 2};
  auto loss = [&]() { return ops::cross_entropy_with_softmax(net.logits(x, false), labels); };
  std::vector<Tensor> params{x};
  for (auto& nt : net.named_parameters()) params.push_back(nt.tensor);
  EXPECT_LT(check_gradients(loss, params), kFdRelTol);
}

TEST(Classifier, CheckpointRoundTripIncludesRunningStats) {
  Classifier a(truncated_config(), 15);
  Rng rng(16);
  a.logits(random_tensor(rng, {4, 2, 8}, -1, 1, false), true, 1);
  Checkpoint ck;
  for (auto& nt : a.named_parameters()) ck.tensors.push_back({nt.name, nt.tensor.detach()});
  for (auto& nt : a.buffers()) ck.tensors.push_back(nt);
  Classifier b(truncated_config(), 17);
  b.load_parameters(ck);
  const Tensor x = random_tensor(rng, {2, 2, 8}, -1, 1, false);
  const Tensor la = a.logits(x, false), lb = b.logits(x, false);
  for (std::size_t i = 0; i < la.numel(); ++i) EXPECT_EQ(la[i], lb[i]);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_lowest(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax_lowest(std::vector<double>{0.2, 0.4, 0.4}), 1u);
  EXPECT_EQ(argmax_lowest(std::vector<double>{0.1, 0.2, 0.7}), 2u);
}
