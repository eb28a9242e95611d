#include "dvdgan/generator.hpp"

#include "dvdgan/nn/layers.hpp"

#include <sstream>

namespace dvdgan {

int64_t GeneratorConfig::output_resolution(size_t num_scales) {
  return int64_t{4} << (num_scales - 1);
}

void GeneratorConfig::validate() const {
  if (layer_constants.empty()) {
    throw ConfigError("generator.layer_constants must not be empty");
  }
  for (auto c : layer_constants) {
    if (c < 1) throw ConfigError("generator.layer_constants entries must be >= 1");
  }
  if (output_resolution(layer_constants.size()) != resolution) {
    std::ostringstream msg;
    msg << "generator.resolution " << resolution << " does not match "
        << layer_constants.size() << " layer constants (output side "
        << output_resolution(layer_constants.size()) << ")";
    throw ConfigError(msg.str());
  }
  if (clip_length < 1) throw ConfigError("generator.clip_length must be >= 1");
  if (ch < 1) throw ConfigError("generator.ch must be >= 1");
  if (num_classes < 1) throw ConfigError("generator.num_classes must be >= 1");
  if (latent_dim < 1 || embed_dim < 1) throw ConfigError("latent/embedding dims must be >= 1");
}

int64_t GeneratorConfig::scale_input_channels(int64_t scale) const {
  return scale == 0 ? ch0() : scale_output_channels(scale - 1);
}

int64_t GeneratorConfig::scale_output_channels(int64_t scale) const {
  return ch * layer_constants.at(static_cast<size_t>(scale));
}

int64_t GeneratorConfig::gru_resolution(int64_t scale) const {
  return scale <= 1 ? 4 : int64_t{4} << (scale - 1);
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config, at::Generator& gen)
    : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  embedding = register_module("embedding", torch::nn::Embedding(c.num_classes, c.embed_dim));
  {
    torch::NoGradGuard no_grad;
    embedding->weight.copy_(torch::randn({c.num_classes, c.embed_dim}, gen));
  }
  input = register_module("input", nn::make_linear(c.cond_dim(), 16 * c.ch0(), gen));
  for (int64_t s = 0; s < c.num_scales(); ++s) {
    const auto in = c.scale_input_channels(s), out = c.scale_output_channels(s);
    grus.push_back(register_module("gru" + std::to_string(s), nn::ConvGRUCell(in, in, gen)));
    blocks.push_back(register_module("block" + std::to_string(s) + "a",
                                     nn::GResBlock(in, out, c.clip_length, c.cond_dim(), s > 0, gen)));
    blocks.push_back(register_module("block" + std::to_string(s) + "b",
                                     nn::GResBlock(out, out, c.clip_length, c.cond_dim(), false, gen)));
  }
  const auto last = c.scale_output_channels(c.num_scales() - 1);
  out_bn = register_module("out_bn", nn::TimestepBatchNorm(last, c.clip_length, true));
  out_conv = register_module("out_conv", nn::make_conv2d(last, 3, 3, gen));
}

torch::Tensor GeneratorImpl::embed(const torch::Tensor& labels) {
  if (labels.dim() != 1) {
    throw InvalidInput("labels must be a 1-D tensor");
  }
  if (labels.numel() > 0 && (labels.min().item<int64_t>() < 0 ||
                             labels.max().item<int64_t>() >= config_.num_classes)) {
    throw InvalidInput("class id out of range [0, " + std::to_string(config_.num_classes) + ")");
  }
  return embedding(labels);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& labels) {
  return generate(z, embed(labels));
}

torch::Tensor GeneratorImpl::generate(const torch::Tensor& z, const torch::Tensor& e,
                                      const std::vector<torch::Tensor>& initial_states) {
  const auto& c = config_;
  if (z.dim() != 2 || z.size(1) != c.latent_dim || e.dim() != 2 || e.size(1) != c.embed_dim ||
      z.size(0) != e.size(0)) {
    throw InvalidInput("generator expects z [B, " + std::to_string(c.latent_dim) + "] and e [B, " +
                       std::to_string(c.embed_dim) + "]");
  }
  if (!initial_states.empty() && static_cast<int64_t>(initial_states.size()) != c.num_scales()) {
    throw InvalidInput("need one initial ConvGRU state per generator scale");
  }
  const auto b = z.size(0), t = c.clip_length;
  auto cond = torch::cat({z, e}, 1);
  auto seed = input(cond).view({b, c.ch0(), 4, 4});
  auto x = seed.unsqueeze(1).expand({b, t, c.ch0(), 4, 4});
  torch::Tensor frames;
  for (int64_t s = 0; s < c.num_scales(); ++s) {
    auto h0 = initial_states.empty() ? torch::Tensor() : initial_states[static_cast<size_t>(s)];
    auto hs = nn::unroll(grus[static_cast<size_t>(s)], x, h0);
    frames = hs.reshape({b * t, hs.size(2), hs.size(3), hs.size(4)});
    frames = blocks[static_cast<size_t>(2 * s)](frames, cond);
    frames = blocks[static_cast<size_t>(2 * s + 1)](frames, cond);
    x = frames.view({b, t, frames.size(1), frames.size(2), frames.size(3)});
  }
  auto out = torch::tanh(out_conv(torch::relu(out_bn(frames))));
  return unfold_time(out, t);
}

torch::Tensor sample_latents(int64_t n, int64_t latent_dim, double stddev, at::Generator& gen) {
  if (stddev < 0.0 || stddev > 1.0) {
    throw InvalidInput("truncation stddev must lie in [0, 1]");
  }
  return torch::randn({n, latent_dim}, gen) * stddev;
}

torch::Tensor sample_truncated(Generator& g, double stddev, const torch::Tensor& labels,
                               at::Generator& gen) {
  auto z = sample_latents(labels.size(0), g->config().latent_dim, stddev, gen);
  return g(z, labels);
}

std::vector<torch::Tensor> interpolate_latent(Generator& g, const torch::Tensor& z1,
                                              const torch::Tensor& z2, int64_t label,
                                              int64_t steps) {
  if (steps < 2) {
    throw InvalidInput("interpolation needs steps >= 2");
  }
  auto y = torch::tensor({label}, torch::kLong);
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < steps; ++i) {
    const double a = static_cast<double>(i) / static_cast<double>(steps - 1);
    auto z = z1.reshape({1, -1}) * (1.0 - a) + z2.reshape({1, -1}) * a;
    out.push_back(g(z, y).squeeze(0));
  }
  return out;
}

std::vector<torch::Tensor> interpolate_class(Generator& g, const torch::Tensor& z, int64_t y1,
                                             int64_t y2, int64_t steps) {
  if (steps < 2) {
    throw InvalidInput("interpolation needs steps >= 2");
  }
  auto e1 = g->embed(torch::tensor({y1}, torch::kLong));
  auto e2 = g->embed(torch::tensor({y2}, torch::kLong));
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < steps; ++i) {
    const double a = static_cast<double>(i) / static_cast<double>(steps - 1);
    out.push_back(g->generate(z.reshape({1, -1}), e1 * (1.0 - a) + e2 * a).squeeze(0));
  }
  return out;
}

}  // namespace dvdgan
