#pragma once

#include "dvdgan/common.hpp"

#include <array>

namespace dvdgan::attention {

/// softmax(X Q (X K)^T) X V over the last axis, with batched matmul semantics
/// for any leading axes. X is [..., N, C]; Q, K, V are [C, C]. With `scaled`
/// the logits are divided by sqrt(C) (off by default).
torch::Tensor self_attention(const torch::Tensor& x, const torch::Tensor& q,
                             const torch::Tensor& k, const torch::Tensor& v,
                             bool scaled = false);

/// Q, K, V for each of the three passes: [0] time, [1] height, [2] width.
struct AttentionParams {
  std::array<torch::Tensor, 3> q;
  std::array<torch::Tensor, 3> k;
  std::array<torch::Tensor, 3> v;

  static AttentionParams random(int64_t channels, at::Generator& gen,
                                torch::Dtype dtype = torch::kFloat32, double scale = 1.0);
};

/// Sizes of the attention matrices materialized by separable_attention.
struct AttentionTrace {
  int64_t peak_entries = 0;   // largest single attention matrix batch
  int64_t full_entries = 0;   // B * (H*W*T)^2, what full attention would need
};

/// Attention over T, then H, then W for X [B, H, W, T, C]. Axes are transposed
/// before every reshape so each pass sees [B*H*W, T, C], [B*W*T, H, C] and
/// [B*H*T, W, C] respectively. Output has the input's shape and axis order.
torch::Tensor separable_attention(const torch::Tensor& x, const AttentionParams& params,
                                  bool scaled = false, AttentionTrace* trace = nullptr);

}  // namespace dvdgan::attention
