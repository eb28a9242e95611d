#include "dvdgan/nn/conv_gru.hpp"

#include "dvdgan/nn/layers.hpp"

namespace dvdgan::nn {

ConvGRUCellImpl::ConvGRUCellImpl(int64_t input_channels, int64_t hidden_channels,
                                 at::Generator& gen)
    : input_channels_(input_channels), hidden_channels_(hidden_channels) {
  const auto both = input_channels + hidden_channels;
  reset_gate = register_module("reset_gate", make_conv2d(both, hidden_channels, 3, gen));
  update_gate = register_module("update_gate", make_conv2d(both, hidden_channels, 3, gen));
  candidate = register_module("candidate", make_conv2d(both, hidden_channels, 3, gen));
}

torch::Tensor ConvGRUCellImpl::forward(const torch::Tensor& x, const torch::Tensor& h) {
  if (x.dim() != 4 || h.dim() != 4 || x.size(0) != h.size(0) || x.size(2) != h.size(2) ||
      x.size(3) != h.size(3) || x.size(1) != input_channels_ ||
      h.size(1) != hidden_channels_) {
    throw InvalidInput("ConvGRU shape mismatch: x " + c10::str(x.sizes()) + ", h " +
                       c10::str(h.sizes()));
  }
  auto hx = torch::cat({h, x}, 1);
  auto r = torch::sigmoid(reset_gate(hx));
  auto u = torch::sigmoid(update_gate(hx));
  auto c = torch::relu(candidate(torch::cat({x, r * h}, 1)));
  return u * h + (1 - u) * c;
}

torch::Tensor unroll(ConvGRUCell& cell, const torch::Tensor& inputs, torch::Tensor h0) {
  TORCH_CHECK(inputs.dim() == 5, "unroll expects [B, T, C, H, W] inputs");
  const auto b = inputs.size(0), t = inputs.size(1), hh = inputs.size(3), ww = inputs.size(4);
  auto h = h0.defined() ? h0 : torch::zeros({b, cell->hidden_channels(), hh, ww}, inputs.options());
  std::vector<torch::Tensor> outputs;
  outputs.reserve(static_cast<size_t>(t));
  for (int64_t step = 0; step < t; ++step) {
    h = cell(inputs.select(1, step), h);
    outputs.push_back(h);
  }
  return torch::stack(outputs, 1);
}

}  // namespace dvdgan::nn
