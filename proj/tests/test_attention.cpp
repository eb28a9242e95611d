#include "dvdgan/attention.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace dvdgan;
using namespace dvdgan::attention;
namespace ts = testing_support;

namespace {

std::vector<std::vector<double>> rows(const torch::Tensor& t) {
  auto a = t.to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> m(a.size(0), std::vector<double>(a.size(1)));
  for (int64_t i = 0; i < a.size(0); ++i)
    for (int64_t j = 0; j < a.size(1); ++j) m[i][j] = a[i][j].item<double>();
  return m;
}

}  // namespace

TEST(SelfAttention, SingletonAndConstant) {
  auto gen = make_generator(0);
  auto q = torch::randn({3, 3}, gen, torch::kFloat64), k = torch::randn({3, 3}, gen, torch::kFloat64),
       v = torch::randn({3, 3}, gen, torch::kFloat64);
  auto x = torch::randn({1, 3}, gen, torch::kFloat64);
  EXPECT_TRUE(torch::allclose(self_attention(x, q, k, v), torch::mm(x, v)));

  auto constant = torch::randn({1, 3}, gen, torch::kFloat64).expand({5, 3});
  auto out = self_attention(constant, q, k, v);
  EXPECT_TRUE(torch::allclose(out, torch::mm(constant, v)));
  EXPECT_THROW(self_attention(x, torch::randn({2, 2}), k, v), InvalidInput);
}

TEST(SelfAttention, MatchesScalarLoops) {
  auto gen = make_generator(1);
  for (int i = 0; i < 20; ++i) {
    auto x = torch::randn({3, 2}, gen, torch::kFloat64);
    auto q = torch::randn({2, 2}, gen, torch::kFloat64), k = torch::randn({2, 2}, gen, torch::kFloat64),
         v = torch::randn({2, 2}, gen, torch::kFloat64);
    auto ref = ts::attention_loops(rows(x), rows(q), rows(k), rows(v));
    auto out = self_attention(x, q, k, v);
    for (int64_t r = 0; r < 3; ++r)
      for (int64_t c = 0; c < 2; ++c) EXPECT_NEAR(out[r][c].item<double>(), ref[r][c], 1e-6);
  }
}

TEST(SelfAttention, ScaledVariant) {
  auto gen = make_generator(2);
  auto x = torch::randn({4, 4}, gen, torch::kFloat64);
  auto q = torch::randn({4, 4}, gen, torch::kFloat64), k = torch::randn({4, 4}, gen, torch::kFloat64),
       v = torch::randn({4, 4}, gen, torch::kFloat64);
  // scaling the logits by 1/sqrt(C) equals scaling Q
  EXPECT_TRUE(torch::allclose(self_attention(x, q, k, v, true), self_attention(x, q / 2.0, k, v)));
}

TEST(SeparableAttention, MatchesLoopOracle) {
  auto gen = make_generator(3);
  for (int i = 0; i < 20; ++i) {
    const int64_t b = 1 + i % 2, h = 2 + i % 2, w = 1 + i % 3, t = 3 - i % 2, c = 2;
    auto x = torch::randn({b, h, w, t, c}, gen, torch::kFloat64);
    auto p = AttentionParams::random(c, gen, torch::kFloat64, 0.7);
    auto ref = ts::separable_attention_loops(x, p.q, p.k, p.v);
    auto out = separable_attention(x, p);
    ASSERT_EQ(out.sizes(), x.sizes());
    EXPECT_LT((out - ref).abs().max().item<double>(), 1e-6) << i;
  }
}

TEST(SeparableAttention, ReductionCases) {
  auto gen = make_generator(4);
  auto p = AttentionParams::random(3, gen, torch::kFloat64);
  auto x = torch::randn({2, 1, 1, 1, 3}, gen, torch::kFloat64);
  auto expected = torch::matmul(torch::matmul(torch::matmul(x, p.v[0]), p.v[1]), p.v[2]);
  EXPECT_TRUE(torch::allclose(separable_attention(x, p), expected));

  auto xt = torch::randn({1, 1, 1, 3, 3}, gen, torch::kFloat64);
  auto over_time = self_attention(xt.view({3, 3}), p.q[0], p.k[0], p.v[0]);
  auto reduced = torch::matmul(torch::matmul(over_time, p.v[1]), p.v[2]).view({1, 1, 1, 3, 3});
  EXPECT_TRUE(torch::allclose(separable_attention(xt, p), reduced));

  for (auto shape : {std::vector<int64_t>{1, 2, 3, 4, 2}, {3, 1, 2, 2, 2}}) {
    auto q = AttentionParams::random(2, gen);
    EXPECT_EQ(separable_attention(torch::randn(shape, gen), q).sizes(), shape);
  }
}

TEST(SeparableAttention, EveryPositionReachesEveryOutput) {
  auto gen = make_generator(5);
  auto p = AttentionParams::random(2, gen, torch::kFloat64, 0.5);
  auto x = torch::randn({1, 2, 2, 2, 2}, gen, torch::kFloat64).requires_grad_(true);
  auto y = separable_attention(x, p).reshape({8, 2}).sum(1);
  for (int64_t out = 0; out < 8; ++out) {
    auto g = torch::autograd::grad({y[out]}, {x}, {}, true)[0].reshape({8, 2}).abs().sum(1);
    EXPECT_GT(g.min().item<double>(), 0.0) << out;
  }
}

TEST(SeparableAttention, PeakMemoryTrace) {
  auto gen = make_generator(6);
  for (auto shape : {std::vector<int64_t>{2, 3, 4, 5, 2}, {1, 6, 2, 3, 2}, {3, 2, 2, 7, 2}}) {
    AttentionTrace trace;
    separable_attention(torch::randn(shape, gen), AttentionParams::random(2, gen), false, &trace);
    const int64_t b = shape[0], h = shape[1], w = shape[2], t = shape[3];
    const int64_t expected = std::max({b * h * w * t * t, b * w * t * h * h, b * h * t * w * w});
    EXPECT_EQ(trace.peak_entries, expected);
    EXPECT_EQ(trace.full_entries, b * (h * w * t) * (h * w * t));
    EXPECT_LT(trace.peak_entries, trace.full_entries);
  }
}

TEST(SeparableAttention, GradientCheck) {
  auto gen = make_generator(7);
  auto p = AttentionParams::random(3, gen, torch::kFloat64, 0.5);
  auto x = torch::randn({2, 2, 2, 2, 3}, gen, torch::kFloat64);
  auto read = ts::random_readout(9);
  auto f = [&] { return read(separable_attention(x, p)); };
  EXPECT_LT(ts::gradient_error(f, x), 1e-4);
  EXPECT_LT(ts::gradient_error(f, p.q[1]), 1e-4);
  EXPECT_LT(ts::gradient_error(f, p.v[2]), 1e-4);
}
