#include "dvdgan/generator.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace dvdgan;
namespace ts = testing_support;

namespace {

GeneratorConfig tiny(int64_t resolution = 16, int64_t frames = 4) {
  GeneratorConfig c;
  c.resolution = resolution;
  c.clip_length = frames;
  c.ch = 4;
  c.layer_constants.clear();
  for (int64_t side = 4, k = 1; side <= resolution; side *= 2, ++k) c.layer_constants.insert(c.layer_constants.begin(), k);
  c.num_classes = 3;
  c.latent_dim = 6;
  c.embed_dim = 5;
  return c;
}

double mean_pairwise_distance(const torch::Tensor& videos) {
  auto flat = videos.reshape({videos.size(0), -1}).to(torch::kFloat64);
  return torch::cdist(flat.unsqueeze(0), flat.unsqueeze(0)).sum().item<double>() /
         static_cast<double>(videos.size(0) * (videos.size(0) - 1));
}

}  // namespace

TEST(GeneratorShape, Law) {
  EXPECT_EQ(GeneratorConfig::output_resolution(1), 4);
  EXPECT_EQ(GeneratorConfig::output_resolution(3), 16);
  EXPECT_EQ(GeneratorConfig::output_resolution(4), 32);
  EXPECT_EQ(GeneratorConfig::output_resolution(5), 64);

  // Three constants give 4 -> 8 -> 16 with the first scale not upsampling.
  GeneratorConfig c;
  c.resolution = 32;
  c.clip_length = 4;
  c.ch = 8;
  c.layer_constants = {8, 4, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c.resolution = 16;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.gru_resolution(0), 4);
  EXPECT_EQ(c.gru_resolution(1), 4);
  EXPECT_EQ(c.gru_resolution(2), 8);

  auto gen = make_generator(0);
  c.latent_dim = c.embed_dim = 8;
  Generator g(c, gen);
  g->eval();
  auto out = g(torch::randn({2, 8}, gen), torch::tensor({0, 3}, torch::kLong));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 4, 16, 16, 3}));
}

TEST(GeneratorShape, DeskConfigIs32) {
  auto gen = make_generator(1);
  GeneratorConfig c;
  c.ch = 2;
  c.latent_dim = c.embed_dim = 4;
  Generator g(c, gen);
  auto out = g(torch::randn({2, 4}, gen), torch::tensor({1, 2}, torch::kLong));
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{2, 8, 32, 32, 3}));
  EXPECT_LE(out.abs().max().item<float>(), 1.0f);
}

TEST(Generator, DeterministicInEvalAndRejectsBadClass) {
  auto gen = make_generator(2);
  Generator g(tiny(), gen);
  g->eval();
  auto z = torch::randn({2, 6}, gen);
  auto y = torch::tensor({0, 2}, torch::kLong);
  EXPECT_TRUE(torch::equal(g(z, y), g(z, y)));
  EXPECT_THROW(g(z, torch::tensor({0, 3}, torch::kLong)), InvalidInput);
  EXPECT_THROW(g(z, torch::tensor({-1, 0}, torch::kLong)), InvalidInput);
}

TEST(Generator, NoCrossFrameLeakageWithoutRecurrence) {
  auto gen = make_generator(3);
  Generator g(tiny(), gen);
  {
    torch::NoGradGuard no_grad;
    for (auto& cell : g->grus) {
      const auto hid = cell->hidden_channels(), in = cell->input_channels();
      // gates read [h; x]; the candidate reads [x; r . h]
      cell->reset_gate->weight.slice(1, 0, hid).zero_();
      cell->update_gate->weight.slice(1, 0, hid).zero_();
      cell->candidate->weight.slice(1, in, in + hid).zero_();
      // The u . h carry term bypasses every weight; closing the gate removes it.
      cell->update_gate->weight.zero_();
      cell->update_gate->bias.fill_(-50.0);
    }
  }
  auto z = torch::randn({2, 6}, gen);
  auto out = g(z, torch::tensor({1, 2}, torch::kLong));
  for (int64_t t = 1; t < out.size(1); ++t) {
    EXPECT_TRUE(torch::equal(out.select(1, t), out.select(1, 0))) << t;
  }
}

TEST(Generator, RecurrentCarryAloneBreaksFrameIdentity) {
  // Zeroing only the weights acting on h is not enough: h_t = u . h + ...
  // still carries the previous state, so frames differ.
  auto gen = make_generator(3);
  Generator g(tiny(), gen);
  {
    torch::NoGradGuard no_grad;
    for (auto& cell : g->grus) {
      const auto hid = cell->hidden_channels(), in = cell->input_channels();
      cell->reset_gate->weight.slice(1, 0, hid).zero_();
      cell->update_gate->weight.slice(1, 0, hid).zero_();
      cell->candidate->weight.slice(1, in, in + hid).zero_();
    }
  }
  auto out = g(torch::randn({2, 6}, gen), torch::tensor({1, 2}, torch::kLong));
  EXPECT_FALSE(torch::equal(out.select(1, 1), out.select(1, 0)));
}

TEST(Generator, EveryFrameDependsOnZ) {
  auto gen = make_generator(4);
  Generator g(tiny(), gen);
  auto z = torch::randn({2, 6}, gen).requires_grad_(true);
  auto out = g(z, torch::tensor({0, 1}, torch::kLong));
  for (int64_t t = 0; t < out.size(1); ++t) {
    auto grad = torch::autograd::grad({out.select(1, t).sum()}, {z}, {}, true)[0];
    EXPECT_GT(grad.abs().max().item<float>(), 0.0f) << t;
  }
}

TEST(Generator, EndToEndGradientCheck) {
  auto gen = make_generator(5);
  GeneratorConfig c = tiny(8, 2);
  c.ch = 2;
  c.latent_dim = 3;
  c.embed_dim = 2;
  Generator g(c, gen);
  g->to(torch::kFloat64);
  auto z = torch::randn({2, 3}, gen, torch::kFloat64);
  auto y = torch::tensor({0, 2}, torch::kLong);
  auto read = ts::random_readout(7);
  auto f = [&] { return read(g(z, y)); };
  EXPECT_LT(ts::gradient_error(f, z), 1e-3);
  EXPECT_LT(ts::gradient_error(f, g->grus[1]->candidate->weight), 1e-3);
  EXPECT_LT(ts::gradient_error(f, g->input->weight), 1e-3);
}

TEST(Truncation, ZeroStddevGivesIdenticalSamples) {
  auto gen = make_generator(6);
  Generator g(tiny(), gen);
  g->eval();
  auto y = torch::full({3}, 1, torch::kLong);
  auto out = sample_truncated(g, 0.0, y, gen);
  EXPECT_TRUE(torch::equal(out[0], out[1]));
  EXPECT_TRUE(torch::equal(out[1], out[2]));
  EXPECT_THROW(sample_truncated(g, 1.5, y, gen), InvalidInput);

  auto a = make_generator(9), b = make_generator(9);
  EXPECT_TRUE(torch::equal(sample_latents(4, 6, 1.0, a), torch::randn({4, 6}, b)));
}

TEST(Truncation, DiversityGrowsWithStddev) {
  auto gen = make_generator(7);
  Generator g(tiny(), gen);
  g->eval();
  torch::NoGradGuard no_grad;
  auto y = torch::full({100}, 0, torch::kLong);
  std::vector<double> d;
  for (double s : {0.0, 0.5, 1.0}) d.push_back(mean_pairwise_distance(sample_truncated(g, s, y, gen)));
  EXPECT_NEAR(d[0], 0.0, 1e-5);  // cdist leaves rounding noise on identical rows
  EXPECT_LE(d[0], d[1]);
  EXPECT_LE(d[1], d[2]);
}

TEST(Interpolation, EndpointsAndDegenerateCases) {
  auto gen = make_generator(8);
  Generator g(tiny(), gen);
  g->eval();
  auto z1 = torch::randn({1, 6}, gen), z2 = torch::randn({1, 6}, gen);
  auto path = interpolate_latent(g, z1, z2, 1, 5);
  ASSERT_EQ(path.size(), 5u);
  auto y = torch::tensor({1}, torch::kLong);
  EXPECT_TRUE(torch::equal(path.front(), g(z1, y)[0]));
  EXPECT_TRUE(torch::equal(path.back(), g(z2, y)[0]));
  for (const auto& v : interpolate_latent(g, z1, z1, 1, 3)) EXPECT_TRUE(torch::equal(v, path.front()));

  auto cls = interpolate_class(g, z1, 0, 2, 4);
  EXPECT_TRUE(torch::equal(cls.front(), g(z1, torch::tensor({0}, torch::kLong))[0]));
  EXPECT_TRUE(torch::equal(cls.back(), g(z1, torch::tensor({2}, torch::kLong))[0]));
  for (const auto& v : interpolate_class(g, z1, 2, 2, 3)) EXPECT_TRUE(torch::equal(v, cls.back()));
  EXPECT_THROW(interpolate_latent(g, z1, z2, 1, 1), InvalidInput);
}
