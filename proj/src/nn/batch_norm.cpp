#include "dvdgan/nn/batch_norm.hpp"

#include "dvdgan/nn/layers.hpp"

namespace dvdgan::nn {

torch::Tensor batch_norm_per_timestep(const torch::Tensor& x, bool training,
                                      torch::Tensor& running_mean, torch::Tensor& running_var,
                                      double eps, double momentum) {
  TORCH_CHECK(x.dim() == 5, "batch_norm_per_timestep expects [B, T, C, H, W], got ", x.sizes());
  const auto t = x.size(1), c = x.size(2);
  TORCH_CHECK(running_mean.sizes() == at::IntArrayRef({t, c}),
              "running statistics are ", running_mean.sizes(), " but input has T=", t, " C=", c);
  if (!training) {
    auto mean = running_mean.view({1, t, c, 1, 1});
    auto var = running_var.view({1, t, c, 1, 1});
    return (x - mean) * torch::rsqrt(var + eps);
  }
  if (x.size(0) < 2) {
    throw InvalidInput("per-timestep batch norm needs batch >= 2 in training mode");
  }
  const std::vector<int64_t> dims{0, 3, 4};
  auto mean = x.mean(dims, /*keepdim=*/true);
  auto centered = x - mean;
  auto var = centered.square().mean(dims, /*keepdim=*/true);
  {
    torch::NoGradGuard no_grad;
    const double n = static_cast<double>(x.size(0) * x.size(3) * x.size(4));
    const double unbias = n > 1 ? n / (n - 1) : 1.0;
    running_mean.mul_(momentum).add_(mean.detach().view({t, c}), 1.0 - momentum);
    running_var.mul_(momentum).add_(var.detach().view({t, c}) * unbias, 1.0 - momentum);
  }
  return centered * torch::rsqrt(var + eps);
}

TimestepBatchNormImpl::TimestepBatchNormImpl(int64_t channels, int64_t num_frames, bool affine)
    : channels_(channels), num_frames_(num_frames) {
  running_mean = register_buffer("running_mean", torch::zeros({num_frames, channels}));
  running_var = register_buffer("running_var", torch::ones({num_frames, channels}));
  if (affine) {
    weight = register_parameter("weight", torch::ones({channels}));
    bias = register_parameter("bias", torch::zeros({channels}));
  }
}

torch::Tensor TimestepBatchNormImpl::forward(const torch::Tensor& frames) {
  TORCH_CHECK(frames.dim() == 4 && frames.size(1) == channels_ &&
                  frames.size(0) % num_frames_ == 0,
              "expected [B*", num_frames_, ", ", channels_, ", H, W], got ", frames.sizes());
  const auto b = frames.size(0) / num_frames_;
  auto x = frames.view({b, num_frames_, channels_, frames.size(2), frames.size(3)});
  auto y = batch_norm_per_timestep(x, is_training(), running_mean, running_var)
               .view(frames.sizes());
  if (weight.defined()) {
    y = y * weight.view({1, -1, 1, 1}) + bias.view({1, -1, 1, 1});
  }
  return y;
}

ClassConditionalBatchNormImpl::ClassConditionalBatchNormImpl(int64_t channels,
                                                             int64_t num_frames,
                                                             int64_t cond_dim,
                                                             at::Generator& gen)
    : cond_dim_(cond_dim) {
  norm = register_module("norm", TimestepBatchNorm(channels, num_frames, false));
  gain = register_module("gain", make_linear(cond_dim, channels, gen));
  offset = register_module("offset", make_linear(cond_dim, channels, gen));
  torch::NoGradGuard no_grad;
  gain->bias.fill_(1.0);
}

torch::Tensor ClassConditionalBatchNormImpl::forward(const torch::Tensor& frames,
                                                     const torch::Tensor& cond) {
  if (cond.dim() != 2 || cond.size(1) != cond_dim_) {
    throw InvalidInput("conditioning vector must be [B, " + std::to_string(cond_dim_) +
                       "], got " + c10::str(cond.sizes()));
  }
  const auto t = norm->num_frames();
  if (frames.size(0) != cond.size(0) * t) {
    throw InvalidInput("conditioning batch does not match the frame batch");
  }
  auto gamma = repeat_per_frame(gain(cond), t).unsqueeze(-1).unsqueeze(-1);
  auto beta = repeat_per_frame(offset(cond), t).unsqueeze(-1).unsqueeze(-1);
  return gamma * norm(frames) + beta;
}

torch::Tensor repeat_per_frame(const torch::Tensor& rows, int64_t num_frames) {
  const auto b = rows.size(0);
  return rows.unsqueeze(1).expand({b, num_frames, rows.size(1)}).reshape({b * num_frames, -1});
}

}  // namespace dvdgan::nn
