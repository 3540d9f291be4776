#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <utility>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/fs.hpp"
#include "fairvoice/nets/backbones.hpp"
#include "fairvoice/nets/checkpoint.hpp"
#include "fairvoice/nets/layers.hpp"
#include "fairvoice/nets/model.hpp"
#include "test_util.hpp"

using namespace fairvoice;
using namespace fairvoice::nets;
using fairvoice::testutil::random_tensor;

namespace {

ModelState tiny(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.pretrained = false;
  return init_model(BackboneKind::TinyTest, c);
}

std::size_t trainable_count(Layer& layer) {
  ParameterList params;
  layer.collect("", params);
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.param->trainable) n += p.param->value.size();
  }
  return n;
}

// Central-difference check of d sum(forward(x) * probe) for the input and a
// sample of parameters.
void check_layer_gradients(Layer& layer, const Tensor& x, double tol) {
  const Tensor probe = random_tensor(layer.forward(x).shape(), 77);
  const auto loss = [&](const Tensor& in) {
    const Tensor y = layer.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  ParameterList params;
  layer.collect("", params);
  for (auto& p : params) {
    if (p.param->trainable) p.param->grad.fill(0.0);
  }
  layer.forward(x);
  const Tensor gx = layer.backward(probe);
  const double eps = 1e-5;
  for (std::size_t i = 0; i < x.size(); i += std::max<std::size_t>(1, x.size() / 23)) {
    Tensor xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    const double fd = (loss(xp) - loss(xm)) / (2 * eps);
    ASSERT_NEAR(gx[i], fd, tol * std::max(1.0, std::abs(fd))) << "input " << i;
  }
  for (auto& p : params) {
    if (!p.param->trainable) continue;
    Tensor& v = p.param->value;
    const Tensor grad = p.param->grad;
    for (std::size_t i = 0; i < v.size(); i += std::max<std::size_t>(1, v.size() / 7)) {
      const double keep = v[i];
      v[i] = keep + eps;
      const double up = loss(x);
      v[i] = keep - eps;
      const double down = loss(x);
      v[i] = keep;
      const double fd = (up - down) / (2 * eps);
      ASSERT_NEAR(grad[i], fd, tol * std::max(1.0, std::abs(fd))) << p.name << " " << i;
    }
  }
}

}  // namespace

TEST(InitModel, SeedDeterminism) {
  EXPECT_EQ(tiny(1).checksum(), tiny(1).checksum());
  const ModelState a = tiny(1), b = tiny(2);
  EXPECT_NE(a.checksum(), b.checksum());
  EXPECT_GT(max_abs_diff(a.age_head().weight().value, b.age_head().weight().value), 0.0);
  EXPECT_GT(max_abs_diff(a.pd_head().weight().value, b.pd_head().weight().value), 0.0);
}

TEST(InitModel, HeadsAreTwoWideLinearMaps) {
  const ModelState m = tiny(3);
  EXPECT_EQ(m.feature_width(), 48u);
  EXPECT_EQ(m.age_head().weight().value.shape(), (Shape{2, 48}));
  EXPECT_EQ(m.pd_head().weight().value.shape(), (Shape{2, 48}));
  const double bound = 1.0 / std::sqrt(48.0);
  for (double v : m.pd_head().weight().value.values()) EXPECT_LE(std::abs(v), bound);
}

TEST(InitModel, MissingPretrainedWeightsExplainRemedy) {
  ::unsetenv(kPretrainedDirEnv);
  TrainConfig c;
  c.pretrained = true;
  try {
    init_model(BackboneKind::Residual50, c);
    FAIL() << "expected InitError";
  } catch (const InitError& e) {
    EXPECT_NE(std::string(e.what()).find("convert_torchvision"), std::string::npos);
  }
  EXPECT_FALSE(pretrained_weights_path(BackboneKind::Residual50).has_value());
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.epochs, 24);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-5);
  EXPECT_EQ(c.batch_size, 32);
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Backbones, TorchvisionParameterCounts) {
  // Trainable parameters of torchvision's feature extractors without the classifier.
  Sequential r50 = build_residual50();
  EXPECT_EQ(trainable_count(r50), 23508032u);
  Sequential d161 = build_dense161();
  EXPECT_EQ(trainable_count(d161), 26472000u);
  EXPECT_EQ(feature_width(BackboneKind::Residual50), 2048u);
  EXPECT_EQ(feature_width(BackboneKind::Dense161), 2208u);
}

TEST(Backbones, TorchvisionNames) {
  Sequential r50 = build_residual50();
  ParameterList p;
  r50.collect("", p);
  ASSERT_FALSE(p.empty());
  EXPECT_EQ(p.front().name, "conv1.weight");
  bool found = false;
  for (const auto& e : p) found |= e.name == "layer4.2.bn3.running_var";
  EXPECT_TRUE(found);
  Sequential d161 = build_dense161();
  ParameterList q;
  d161.collect("", q);
  EXPECT_EQ(q.front().name, "features.conv0.weight");
}

TEST(Backbones, WideBackbonesPoolToTheirWidth) {
  for (auto kind : {BackboneKind::Residual50, BackboneKind::Dense161}) {
    TrainConfig c;
    c.pretrained = false;
    const ModelState m = init_model(kind, c);
    const Tensor f = extract_final_features(m, random_tensor({1, 3, 64, 64}, 5, 0, 1));
    EXPECT_EQ(f.shape(), (Shape{1, feature_width(kind)}));
  }
}

TEST(Forward, ShapesAndDuplicateRows) {
  const ModelState m = tiny(4);
  Tensor x = random_tensor({3, 3, 224, 224}, 6, 0, 1);
  std::copy_n(x.data(), 3 * 224 * 224, x.data() + 2 * 3 * 224 * 224);
  const ForwardOutput out = forward(m, x);
  EXPECT_EQ(out.feature_maps.shape(), (Shape{3, 48, 7, 7}));
  EXPECT_EQ(out.pooled.shape(), (Shape{3, 48}));
  EXPECT_EQ(out.age_logits.shape(), (Shape{3, 2}));
  EXPECT_EQ(out.pd_logits.shape(), (Shape{3, 2}));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(out.pd_logits.at(0, k), out.pd_logits.at(2, k));
    EXPECT_EQ(out.age_logits.at(0, k), out.age_logits.at(2, k));
  }
  const Tensor f = extract_final_features(m, x);
  for (std::size_t j = 0; j < 48; ++j) EXPECT_EQ(f.at(0, j), f.at(2, j));
  EXPECT_THROW(forward(m, Tensor({1, 1, 224, 224})), InvalidArgument);
  EXPECT_THROW(forward(m, Tensor({3, 224, 224})), InvalidArgument);
}

TEST(Loss, CrossEntropyAnchors) {
  const LossValue l = cross_entropy(Tensor({2, 2}, 0.0), {0, 1});
  EXPECT_NEAR(l.loss, std::numbers::ln2, 1e-15);
  EXPECT_NEAR(l.grad.at(0, 0), -0.25, 1e-15);
  EXPECT_NEAR(l.grad.at(0, 1), 0.25, 1e-15);
  const LossValue big = cross_entropy(Tensor({1, 2}, std::vector<double>{800.0, -800.0}), {1});
  EXPECT_TRUE(std::isfinite(big.loss));
  EXPECT_NEAR(big.loss, 1600.0, 1e-9);
  EXPECT_THROW(cross_entropy(Tensor({1, 2}), {2}), InvalidArgument);
  EXPECT_EQ(positive_probability(Tensor({1, 2}, 1.0)), std::vector<double>{0.5});
  EXPECT_EQ(argmax_rows(Tensor({2, 2}, std::vector<double>{0, 1, 3, 2})), (std::vector<int>{1, 0}));
}

TEST(Gradients, ConvAndBatchNorm) {
  Conv2d conv(2, 3, {3, 2, 1}, true);
  ParameterList p;
  conv.collect("", p);
  for (auto& e : p) e.param->value = random_tensor(e.param->value.shape(), 31);
  check_layer_gradients(conv, random_tensor({2, 2, 6, 6}, 32), 1e-6);
  BatchNorm2d bn(3);
  ParameterList q;
  bn.collect("", q);
  q[0].param->value = random_tensor({3}, 33, 0.5, 1.5);
  q[1].param->value = random_tensor({3}, 34);
  check_layer_gradients(bn, random_tensor({3, 3, 4, 4}, 35), 1e-5);
}

TEST(Gradients, ResidualAndDenseBlocks) {
  Bottleneck block(8, 4, 2);
  ParameterList p;
  block.collect("", p);
  std::uint64_t seed = 40;
  for (auto& e : p) {
    if (e.param->trainable) e.param->value = random_tensor(e.param->value.shape(), seed++, -0.5, 0.5);
  }
  check_layer_gradients(block, random_tensor({2, 8, 6, 6}, 41), 1e-4);
  DenseLayer dense(6, 4, 8);
  ParameterList q;
  dense.collect("", q);
  for (auto& e : q) {
    if (e.param->trainable) e.param->value = random_tensor(e.param->value.shape(), seed++, -0.5, 0.5);
  }
  check_layer_gradients(dense, random_tensor({2, 6, 5, 5}, 42), 1e-4);
}

TEST(Gradients, PoolingAndLinear) {
  MaxPool2d mp({3, 2, 1});
  check_layer_gradients(mp, random_tensor({1, 2, 7, 7}, 50), 1e-6);
  AvgPool2d ap({2, 2, 0});
  check_layer_gradients(ap, random_tensor({1, 2, 6, 6}, 51), 1e-6);
  Linear lin(5, 3);
  lin.weight().value = random_tensor({3, 5}, 52);
  lin.bias().value = random_tensor({3}, 53);
  check_layer_gradients(lin, random_tensor({4, 5}, 54), 1e-6);
}

TEST(BatchNorm, RunningStatisticsUseUnbiasedVariance) {
  BatchNorm2d bn(1, 1e-5, 0.1);
  const Tensor x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  bn.forward(x);
  ParameterList p;
  bn.collect("bn.", p);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[2].name, "bn.running_mean");
  EXPECT_NEAR(p[2].param->value[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(p[3].param->value[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
  const Tensor y = bn.infer(x);
  EXPECT_NEAR(y[0], (1 - 0.25) / std::sqrt(p[3].param->value[0] + 1e-5), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ModelState m = tiny(5);
  const Tensor before = m.pd_head().weight().value;
  m.pd_head().weight().grad.fill(0.3);
  m.pd_head().weight().grad[0] = -2.0;
  Adam adam({.learning_rate = 1e-3});
  adam.step(m);
  const Tensor& after = m.pd_head().weight().value;
  EXPECT_NEAR(after[0] - before[0], 1e-3, 1e-9);
  EXPECT_NEAR(after[1] - before[1], -1e-3, 1e-9);
  EXPECT_EQ(max_abs_diff(m.age_head().weight().value, tiny(5).age_head().weight().value), 0.0);
  for (double g : m.pd_head().weight().grad.values()) EXPECT_EQ(g, 0.0);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(ModelState, CopiesAreDeep) {
  ModelState a = tiny(6);
  ModelState b = a;
  b.pd_head().weight().value[0] += 1.0;
  EXPECT_NE(a.checksum(), b.checksum());
  auto params = b.parameters();
  EXPECT_EQ(params.front().name.rfind("backbone.", 0), 0u);
  EXPECT_EQ(params.back().name, "pd_head.bias");
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  testutil::TempDir dir("ckpt");
  const ModelState m = tiny(7);
  save_checkpoint(m, dir / "m.ckpt");
  const ModelState back = load_checkpoint(dir / "m.ckpt", BackboneKind::TinyTest);
  EXPECT_EQ(back.checksum(), m.checksum());
  EXPECT_EQ(back.seed(), 7u);
  const Tensor x = random_tensor({2, 3, 224, 224}, 8, 0, 1);
  EXPECT_EQ(max_abs_diff(forward(m, x).pd_logits, forward(back, x).pd_logits), 0.0);
}

TEST(Checkpoint, WrongKindAndCorruption) {
  testutil::TempDir dir("ckpt");
  save_checkpoint(tiny(8), dir / "m.ckpt");
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", BackboneKind::Residual50), CheckpointError);

  std::string bytes = read_text_file(dir / "m.ckpt");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x5a;
  write_file_atomic(dir / "flip.ckpt", flipped);
  EXPECT_THROW(load_checkpoint(dir / "flip.ckpt"), CheckpointError);

  write_file_atomic(dir / "short.ckpt", bytes.substr(0, bytes.size() / 3));
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), CheckpointError);

  std::string magic = bytes;
  magic[0] = 'X';
  write_file_atomic(dir / "magic.ckpt", magic);
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), CheckpointError);
}

TEST(Checkpoint, BackboneWeightsLoadByName) {
  testutil::TempDir dir("ckpt");
  const ModelState src = tiny(9);
  save_checkpoint(src, dir / "b.ckpt");
  ModelState dst = tiny(10);
  load_backbone_weights(dst, dir / "b.ckpt");
  const auto a = src.parameters();
  const auto b = std::as_const(dst).parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool backbone = a[i].first.rfind("backbone.", 0) == 0;
    const double d = max_abs_diff(a[i].second->value, b[i].second->value);
    if (backbone) EXPECT_EQ(d, 0.0) << a[i].first;
    else EXPECT_GT(d, 0.0) << a[i].first;
  }
}
