#include "dvdgan/nn/res_blocks.hpp"

namespace dvdgan::nn {

namespace {

torch::Tensor upsample_nearest(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

GResBlockImpl::GResBlockImpl(int64_t in_channels, int64_t out_channels, int64_t num_frames,
                             int64_t cond_dim, bool upsample, at::Generator& gen)
    : upsample_(upsample) {
  bn1 = register_module("bn1", ClassConditionalBatchNorm(in_channels, num_frames, cond_dim, gen));
  conv1 = register_module("conv1", make_conv2d(in_channels, out_channels, 3, gen));
  bn2 = register_module("bn2", ClassConditionalBatchNorm(out_channels, num_frames, cond_dim, gen));
  conv2 = register_module("conv2", make_conv2d(out_channels, out_channels, 3, gen));
  if (in_channels != out_channels) {
    skip = register_module("skip", make_conv2d(in_channels, out_channels, 1, gen));
  }
}

torch::Tensor GResBlockImpl::forward(const torch::Tensor& frames, const torch::Tensor& cond) {
  auto h = torch::relu(bn1(frames, cond));
  auto s = frames;
  if (upsample_) {
    h = upsample_nearest(h);
    s = upsample_nearest(s);
  }
  h = conv1(h);
  h = conv2(torch::relu(bn2(h, cond)));
  if (!skip.is_empty()) {
    s = skip(s);
  }
  return h + s;
}

DResBlockImpl::DResBlockImpl(int64_t in_channels, int64_t out_channels, bool downsample,
                             bool is_3d, at::Generator& gen)
    : downsample_(downsample), is_3d_(is_3d) {
  const int64_t dims = is_3d ? 3 : 2;
  conv1 = register_module("conv1", SNConv(in_channels, out_channels, 3, dims, gen));
  conv2 = register_module("conv2", SNConv(out_channels, out_channels, 3, dims, gen));
  if (in_channels != out_channels || downsample) {
    skip = register_module("skip", SNConv(in_channels, out_channels, 1, dims, gen));
  }
}

torch::Tensor DResBlockImpl::pool(const torch::Tensor& x) const {
  if (!downsample_) {
    return x;
  }
  const auto h = x.size(-2), w = x.size(-1);
  if (h % 2 != 0 || w % 2 != 0) {
    throw InvalidInput("cannot downsample odd spatial dims " + std::to_string(h) + "x" +
                       std::to_string(w));
  }
  if (is_3d_) {
    return torch::avg_pool3d(x, {1, 2, 2});
  }
  return torch::avg_pool2d(x, {2, 2});
}

torch::Tensor DResBlockImpl::forward(const torch::Tensor& x) {
  const int64_t expected = is_3d_ ? 5 : 4;
  if (x.dim() != expected) {
    throw InvalidInput(std::string("D block expects a ") + (is_3d_ ? "[N, C, T, H, W]" : "[N, C, H, W]") +
                       " input, got " + c10::str(x.sizes()));
  }
  auto h = conv1(torch::relu(x));
  h = pool(conv2(torch::relu(h)));
  auto s = skip.is_empty() ? x : pool(skip(x));
  return h + s;
}

}  // namespace dvdgan::nn
