#pragma once

#include "dvdgan/common.hpp"

namespace dvdgan::nn {

/// Convolutional GRU cell:
///   r   = sigmoid(W_r * [h; x] + b_r)
///   u   = sigmoid(W_u * [h; x] + b_u)
///   c   = relu(W_c * [x; r . h] + b_c)
///   h'  = u . h + (1 - u) . c
/// with 3x3 same-padded convolutions. Note the concatenation order differs
/// between the gates ([h; x]) and the candidate ([x; r . h]).
class ConvGRUCellImpl : public torch::nn::Module {
 public:
  ConvGRUCellImpl(int64_t input_channels, int64_t hidden_channels, at::Generator& gen);

  /// x [N, C_in, H, W], h [N, C_hidden, H, W] -> h' [N, C_hidden, H, W].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& h);

  int64_t input_channels() const { return input_channels_; }
  int64_t hidden_channels() const { return hidden_channels_; }

  torch::nn::Conv2d reset_gate{nullptr};
  torch::nn::Conv2d update_gate{nullptr};
  torch::nn::Conv2d candidate{nullptr};

 private:
  int64_t input_channels_;
  int64_t hidden_channels_;
};
TORCH_MODULE(ConvGRUCell);

/// Unrolls a cell over inputs [B, T, C_in, H, W] from `h0` (zeros when
/// undefined); returns the per-step outputs [B, T, C_hidden, H, W].
torch::Tensor unroll(ConvGRUCell& cell, const torch::Tensor& inputs, torch::Tensor h0);

}  // namespace dvdgan::nn
