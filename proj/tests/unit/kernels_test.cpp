#include <gtest/gtest.h>

#include <cmath>

#include "fairvoice/common/error.hpp"
#include "fairvoice/common/parallel.hpp"
#include "fairvoice/kernels/kernels.hpp"
#include "fairvoice/kernels/reference.hpp"
#include "test_util.hpp"

using namespace fairvoice;
using namespace fairvoice::kernels;
using fairvoice::testutil::random_tensor;

namespace {

struct ConvCase {
  std::size_t n, cin, cout, h, w;
  ConvGeometry g;
};

const ConvCase kConvCases[] = {
    {2, 3, 4, 9, 9, {3, 1, 1}},
    {1, 2, 5, 8, 6, {3, 2, 1}},
    {3, 4, 2, 7, 7, {1, 1, 0}},
    {1, 3, 6, 12, 12, {4, 4, 0}},
    {2, 2, 3, 11, 10, {7, 2, 3}},
};

// Runs fn with the given thread count, restoring the previous one.
template <class F>
auto with_threads(int n, F&& fn) {
#if defined(_OPENMP)
  const int prev = omp_get_max_threads();
  omp_set_num_threads(n);
  auto out = fn();
  omp_set_num_threads(prev);
  return out;
#else
  (void)n;
  return fn();
#endif
}

}  // namespace

TEST(Conv2d, ForwardMatchesReference) {
  std::uint64_t seed = 1;
  for (const auto& c : kConvCases) {
    const Tensor x = random_tensor({c.n, c.cin, c.h, c.w}, seed++);
    const Tensor wt = random_tensor({c.cout, c.cin, c.g.kernel, c.g.kernel}, seed++);
    const Tensor b = random_tensor({c.cout}, seed++);
    const Tensor fast = conv2d_forward(x, wt, b, c.g);
    const Tensor slow = reference::conv2d_forward(x, wt, b, c.g);
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_LT(max_abs_diff(fast, slow), 1e-12);
    const Tensor nobias = conv2d_forward(x, wt, Tensor(), c.g);
    EXPECT_LT(max_abs_diff(nobias, reference::conv2d_forward(x, wt, Tensor(), c.g)), 1e-12);
  }
}

TEST(Conv2d, BackwardMatchesReference) {
  std::uint64_t seed = 100;
  for (const auto& c : kConvCases) {
    const Tensor x = random_tensor({c.n, c.cin, c.h, c.w}, seed++);
    const Tensor wt = random_tensor({c.cout, c.cin, c.g.kernel, c.g.kernel}, seed++);
    const Tensor go = random_tensor({c.n, c.cout, c.g.out_extent(c.h), c.g.out_extent(c.w)}, seed++);
    Tensor gw(wt.shape()), gb({c.cout}), gx;
    Tensor rgw(wt.shape()), rgb({c.cout}), rgx;
    conv2d_backward(x, wt, go, c.g, gw, gb, &gx);
    reference::conv2d_backward(x, wt, go, c.g, rgw, rgb, &rgx);
    EXPECT_LT(max_abs_diff(gw, rgw), 1e-10);
    EXPECT_LT(max_abs_diff(gb, rgb), 1e-10);
    EXPECT_LT(max_abs_diff(gx, rgx), 1e-10);
  }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  const ConvGeometry g{3, 2, 1};
  const Tensor x = random_tensor({1, 2, 6, 6}, 7);
  Tensor wt = random_tensor({3, 2, 3, 3}, 8);
  const Tensor b = random_tensor({3}, 9);
  const Tensor go = random_tensor({1, 3, 3, 3}, 10);
  const auto loss = [&](const Tensor& xx, const Tensor& ww) {
    const Tensor y = conv2d_forward(xx, ww, b, g);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * go[i];
    return s;
  };
  Tensor gw(wt.shape()), gb({3}), gx;
  conv2d_backward(x, wt, go, g, gw, gb, &gx);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < wt.size(); i += 5) {
    Tensor wp = wt, wm = wt;
    wp[i] += eps;
    wm[i] -= eps;
    EXPECT_NEAR(gw[i], (loss(x, wp) - loss(x, wm)) / (2 * eps), 1e-6);
  }
  for (std::size_t i = 0; i < x.size(); i += 7) {
    Tensor xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    EXPECT_NEAR(gx[i], (loss(xp, wt) - loss(xm, wt)) / (2 * eps), 1e-6);
  }
}

TEST(Conv2d, RejectsChannelMismatch) {
  const Tensor x({1, 3, 5, 5});
  const Tensor wt({2, 4, 3, 3});
  EXPECT_THROW(conv2d_forward(x, wt, Tensor(), {3, 1, 1}), InvalidArgument);
}

TEST(Pooling, MaxAndAverageMatchReference) {
  const Tensor x = random_tensor({2, 3, 9, 8}, 11);
  for (const PoolGeometry g : {PoolGeometry{2, 2, 0}, PoolGeometry{3, 2, 1}, PoolGeometry{3, 1, 1}}) {
    std::vector<std::uint32_t> argmax;
    EXPECT_EQ(max_abs_diff(max_pool2d_forward(x, g, &argmax), reference::max_pool2d_forward(x, g)), 0.0);
    EXPECT_LT(max_abs_diff(avg_pool2d_forward(x, g), reference::avg_pool2d_forward(x, g)), 1e-14);
  }
}

TEST(Pooling, MaxBackwardRoutesToArgmax) {
  const Tensor x({1, 1, 2, 2}, std::vector<double>{1, 4, 3, 2});
  std::vector<std::uint32_t> argmax;
  const Tensor y = max_pool2d_forward(x, {2, 2, 0}, &argmax);
  EXPECT_DOUBLE_EQ(y[0], 4.0);
  const Tensor gx = max_pool2d_backward(Tensor({1, 1, 1, 1}, 2.5), x.shape(), argmax);
  EXPECT_EQ(gx.storage(), (std::vector<double>{0, 2.5, 0, 0}));
}

TEST(Pooling, AverageBackwardIsAdjoint) {
  const PoolGeometry g{3, 2, 1};
  const Tensor x = random_tensor({1, 2, 7, 7}, 12);
  const Tensor y = avg_pool2d_forward(x, g);
  const Tensor go = random_tensor(y.shape(), 13);
  const Tensor gx = avg_pool2d_backward(go, x.shape(), g);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * go[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(GlobalPool, MeanAndBackward) {
  const Tensor x = random_tensor({2, 3, 4, 5}, 14);
  const Tensor y = global_avg_pool(x);
  EXPECT_LT(max_abs_diff(y, reference::global_avg_pool(x)), 1e-14);
  double s = 0.0;
  for (std::size_t i = 0; i < 20; ++i) s += x[20 + i];
  EXPECT_NEAR(y.at(0, 1), s / 20.0, 1e-14);
  const Tensor g = global_avg_pool_backward(Tensor({2, 3}, 1.0), x.shape());
  for (double v : g.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 20.0);
}

TEST(Linear, ForwardAndBackward) {
  const Tensor x = random_tensor({3, 4}, 15);
  const Tensor w = random_tensor({2, 4}, 16);
  const Tensor b = random_tensor({2}, 17);
  const Tensor y = linear_forward(x, w, b);
  EXPECT_NEAR(y.at(2, 1), b[1] + x.at(2, 0) * w.at(1, 0) + x.at(2, 1) * w.at(1, 1) + x.at(2, 2) * w.at(1, 2) +
                              x.at(2, 3) * w.at(1, 3),
              1e-14);
  const Tensor go = random_tensor({3, 2}, 18);
  Tensor gw(w.shape()), gb({2});
  const Tensor gx = linear_backward(x, w, go, &gw, &gb);
  EXPECT_NEAR(gx.at(1, 2), go.at(1, 0) * w.at(0, 2) + go.at(1, 1) * w.at(1, 2), 1e-14);
  EXPECT_NEAR(gw.at(0, 3), go.at(0, 0) * x.at(0, 3) + go.at(1, 0) * x.at(1, 3) + go.at(2, 0) * x.at(2, 3), 1e-14);
  EXPECT_NEAR(gb[1], go.at(0, 1) + go.at(1, 1) + go.at(2, 1), 1e-14);
  // Input gradient alone needs no activations.
  const Tensor gx2 = linear_backward(Tensor(), w, go, nullptr, nullptr);
  EXPECT_EQ(max_abs_diff(gx, gx2), 0.0);
}

TEST(Relu, ForwardBackward) {
  const Tensor x({4}, std::vector<double>{-1, 0, 2, 3});
  const Tensor y = relu_forward(x);
  EXPECT_EQ(y.storage(), (std::vector<double>{0, 0, 2, 3}));
  const Tensor g = relu_backward(y, Tensor({4}, 1.0));
  EXPECT_EQ(g.storage(), (std::vector<double>{0, 0, 1, 1}));
}

TEST(Bilinear, MatchesReferenceAndPreservesConstants) {
  Grid src(7, 5);
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& v : src.values) v = u(rng);
  const Grid up = bilinear_resize(src, 224, 224);
  const Grid ref = reference::bilinear_resize(src, 224, 224);
  ASSERT_EQ(up.rows, 224u);
  for (std::size_t i = 0; i < up.size(); ++i) ASSERT_NEAR(up.values[i], ref.values[i], 1e-14);
  const Grid flat = bilinear_resize(Grid(3, 4, 0.25), 10, 9);
  for (double v : flat.values) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_EQ(bilinear_resize(src, 7, 5), src);
}

TEST(Gemm, SmallProduct) {
  const double a[] = {1, 2, 3, 4, 5, 6};        // 2x3
  const double b[] = {7, 8, 9, 10, 11, 12};     // 3x2
  double c[] = {1, 1, 1, 1};
  gemm_nn(2, 2, 3, a, b, c);
  EXPECT_DOUBLE_EQ(c[0], 1 + 58);
  EXPECT_DOUBLE_EQ(c[1], 1 + 64);
  EXPECT_DOUBLE_EQ(c[2], 1 + 139);
  EXPECT_DOUBLE_EQ(c[3], 1 + 154);
}

TEST(Determinism, ResultsIndependentOfThreadCount) {
  const ConvGeometry g{3, 1, 1};
  const Tensor x = random_tensor({2, 4, 16, 16}, 20);
  const Tensor w = random_tensor({8, 4, 3, 3}, 21);
  const Tensor go = random_tensor({2, 8, 16, 16}, 22);
  const auto run = [&] {
    Tensor gw(w.shape()), gb({8}), gx;
    conv2d_backward(x, w, go, g, gw, gb, &gx);
    return std::vector<Tensor>{conv2d_forward(x, w, Tensor(), g), gw, gb, gx};
  };
  const auto one = with_threads(1, run);
  const auto four = with_threads(4, run);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(max_abs_diff(one[i], four[i]), 0.0);
}
