#include "dvdgan/nn/layers.hpp"

#include <numeric>
#include <optional>

namespace dvdgan::nn {

torch::Tensor orthogonal_init(at::IntArrayRef shape, at::Generator& gen, torch::Dtype dtype) {
  if (shape.size() < 2) {
    throw InvalidInput("orthogonal_init needs at least two dimensions");
  }
  const int64_t rows = shape[0];
  const int64_t cols = std::accumulate(shape.begin() + 1, shape.end(), int64_t{1},
                                       std::multiplies<int64_t>());
  const auto tall = std::max(rows, cols), wide = std::min(rows, cols);
  auto a = torch::randn({tall, wide}, gen, torch::kFloat64);
  auto [q, r] = torch::linalg_qr(a);
  // sign fix makes the result Haar-distributed
  q = q * torch::sign(torch::diagonal(r)).unsqueeze(0);
  if (rows < cols) {
    q = q.t();
  }
  return q.contiguous().reshape(shape).to(dtype);
}

SpectralEstimate spectral_normalize(const torch::Tensor& weight, torch::Tensor& u,
                                    torch::Tensor& v, int iterations) {
  // power iteration and sigma carry no gradient; the division below does
  std::optional<torch::NoGradGuard> no_grad(std::in_place);
  const auto w = weight.detach().reshape({weight.size(0), -1});
  auto normalize = [](const torch::Tensor& x) {
    const double n = x.norm().item<double>();
    return std::pair{n, x / n};
  };
  constexpr double kTiny = 1e-12;
  if (w.abs().max().item<double>() == 0.0) {
    return {weight, 0.0, true};
  }
  for (int i = 0; i < iterations; ++i) {
    auto [nv, next_v] = normalize(torch::mv(w.t(), u));
    if (nv < kTiny) {
      return {weight, 0.0, true};
    }
    v.copy_(next_v);
    auto [nu, next_u] = normalize(torch::mv(w, v));
    if (nu < kTiny) {
      return {weight, 0.0, true};
    }
    u.copy_(next_u);
  }
  const double sigma = torch::dot(u, torch::mv(w, v)).item<double>();
  if (!(sigma > kTiny)) {
    return {weight, sigma, true};
  }
  no_grad.reset();
  return {weight / sigma, sigma, false};
}

SpectralState::SpectralState(torch::nn::Module& owner, const torch::Tensor& weight,
                             at::Generator& gen) {
  const auto rows = weight.size(0);
  const auto cols = weight.numel() / rows;
  auto u = torch::randn({rows}, gen, torch::kFloat64);
  auto v = torch::randn({cols}, gen, torch::kFloat64);
  u_ = owner.register_buffer("sn_u", (u / u.norm()).to(weight.scalar_type()));
  v_ = owner.register_buffer("sn_v", (v / v.norm()).to(weight.scalar_type()));
}

torch::Tensor SpectralState::apply(const torch::Tensor& weight, bool training) {
  auto est = spectral_normalize(weight, u_, v_, training ? 1 : 0);
  last_sigma_ = est.sigma;
  degenerate_ = est.degenerate;
  return est.weight;
}

SNLinearImpl::SNLinearImpl(int64_t in_features, int64_t out_features, at::Generator& gen,
                           bool use_bias) {
  weight = register_parameter("weight", orthogonal_init({out_features, in_features}, gen));
  if (use_bias) {
    bias = register_parameter("bias", torch::zeros({out_features}));
  }
  spectral = SpectralState(*this, weight, gen);
}

torch::Tensor SNLinearImpl::normalized_weight() { return spectral.apply(weight, is_training()); }

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
  return torch::nn::functional::linear(x, normalized_weight(), bias);
}

SNEmbeddingImpl::SNEmbeddingImpl(int64_t num_embeddings, int64_t dim, at::Generator& gen) {
  weight = register_parameter("weight", orthogonal_init({num_embeddings, dim}, gen));
  spectral = SpectralState(*this, weight, gen);
}

torch::Tensor SNEmbeddingImpl::forward(const torch::Tensor& ids) {
  const auto n = weight.size(0);
  if (ids.numel() > 0 && (ids.min().item<int64_t>() < 0 || ids.max().item<int64_t>() >= n)) {
    throw InvalidInput("class id out of range [0, " + std::to_string(n) + ")");
  }
  return spectral.apply(weight, is_training()).index_select(0, ids);
}

SNConvImpl::SNConvImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
                       int64_t spatial_dims, at::Generator& gen)
    : spatial_dims_(spatial_dims), padding_(kernel / 2) {
  TORCH_CHECK(spatial_dims == 2 || spatial_dims == 3, "SNConv supports 2-D or 3-D kernels");
  std::vector<int64_t> shape{out_channels, in_channels};
  shape.insert(shape.end(), static_cast<size_t>(spatial_dims), kernel);
  weight = register_parameter("weight", orthogonal_init(shape, gen));
  bias = register_parameter("bias", torch::zeros({out_channels}));
  spectral = SpectralState(*this, weight, gen);
}

torch::Tensor SNConvImpl::forward(const torch::Tensor& x) {
  auto w = spectral.apply(weight, is_training());
  if (spatial_dims_ == 2) {
    return torch::conv2d(x, w, bias, 1, padding_);
  }
  return torch::conv3d(x, w, bias, 1, padding_);
}

torch::nn::Conv2d make_conv2d(int64_t in_channels, int64_t out_channels, int64_t kernel,
                              at::Generator& gen) {
  torch::nn::Conv2d conv(
      torch::nn::Conv2dOptions(in_channels, out_channels, kernel).padding(kernel / 2));
  torch::NoGradGuard no_grad;
  conv->weight.copy_(orthogonal_init(conv->weight.sizes(), gen));
  conv->bias.zero_();
  return conv;
}

torch::nn::Linear make_linear(int64_t in_features, int64_t out_features, at::Generator& gen) {
  torch::nn::Linear linear(in_features, out_features);
  torch::NoGradGuard no_grad;
  linear->weight.copy_(orthogonal_init(linear->weight.sizes(), gen));
  linear->bias.zero_();
  return linear;
}

torch::Tensor average_pool_video(const torch::Tensor& video, int64_t factor) {
  const auto d = video.dim();
  if (d != 4 && d != 5) {
    throw InvalidInput("average pooling expects [T, H, W, C] or [B, T, H, W, C]");
  }
  const auto h = video.size(d - 3), w = video.size(d - 2);
  if (factor < 1 || h % factor != 0 || w % factor != 0) {
    throw InvalidInput("spatial dims " + std::to_string(h) + "x" + std::to_string(w) +
                       " are not divisible by " + std::to_string(factor));
  }
  if (factor == 1) {
    return video;
  }
  std::vector<int64_t> shape(video.sizes().begin(), video.sizes().end() - 3);
  const auto lead = static_cast<int64_t>(shape.size());
  const auto c = video.size(d - 1);
  shape.insert(shape.end(), {h / factor, factor, w / factor, factor, c});
  // [..., h/f, f, w/f, f, c] -> [..., h/f, w/f, c, f*f]
  std::vector<int64_t> perm(static_cast<size_t>(lead));
  std::iota(perm.begin(), perm.end(), 0);
  perm.insert(perm.end(), {lead, lead + 2, lead + 4, lead + 1, lead + 3});
  auto blocks = video.reshape(shape).permute(perm).flatten(-2);
  // Summing the sorted block makes the result independent of pixel order
  // within a block, bit for bit.
  auto sorted = std::get<0>(blocks.sort(-1));
  return sorted.sum(-1) / static_cast<double>(factor * factor);
}

torch::Tensor average_pool_2x2(const torch::Tensor& video) {
  if (video.dim() != 4) {
    throw InvalidInput("average_pool_2x2 expects a [T, H, W, C] video");
  }
  return average_pool_video(video, 2);
}

}  // namespace dvdgan::nn
