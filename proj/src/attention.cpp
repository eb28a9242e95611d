#include "dvdgan/attention.hpp"

#include <algorithm>
#include <cmath>

namespace dvdgan::attention {

namespace {

torch::Tensor attend(const torch::Tensor& x, const torch::Tensor& q, const torch::Tensor& k,
                     const torch::Tensor& v, bool scaled, int64_t* logits_entries) {
  const auto c = x.size(-1);
  for (const auto* m : {&q, &k, &v}) {
    if (m->dim() != 2 || m->size(0) != c || m->size(1) != c) {
      throw InvalidInput("attention parameters must be [" + std::to_string(c) + ", " +
                         std::to_string(c) + "], got " + c10::str(m->sizes()));
    }
  }
  if (x.dim() < 2) {
    throw InvalidInput("self_attention expects [..., N, C]");
  }
  auto xq = torch::matmul(x, q);
  auto xk = torch::matmul(x, k);
  auto xv = torch::matmul(x, v);
  auto logits = torch::matmul(xq, xk.transpose(-1, -2));
  if (scaled) {
    logits = logits / std::sqrt(static_cast<double>(c));
  }
  if (logits_entries != nullptr) {
    *logits_entries = std::max(*logits_entries, logits.numel());
  }
  return torch::matmul(torch::softmax(logits, -1), xv);
}

}  // namespace

torch::Tensor self_attention(const torch::Tensor& x, const torch::Tensor& q,
                             const torch::Tensor& k, const torch::Tensor& v, bool scaled) {
  return attend(x, q, k, v, scaled, nullptr);
}

AttentionParams AttentionParams::random(int64_t channels, at::Generator& gen, torch::Dtype dtype,
                                        double scale) {
  AttentionParams p;
  for (int i = 0; i < 3; ++i) {
    p.q[i] = torch::randn({channels, channels}, gen, dtype) * scale;
    p.k[i] = torch::randn({channels, channels}, gen, dtype) * scale;
    p.v[i] = torch::randn({channels, channels}, gen, dtype) * scale;
  }
  return p;
}

torch::Tensor separable_attention(const torch::Tensor& x, const AttentionParams& params,
                                  bool scaled, AttentionTrace* trace) {
  if (x.dim() != 5) {
    throw InvalidInput("separable_attention expects [B, H, W, T, C]");
  }
  const auto b = x.size(0), h = x.size(1), w = x.size(2), t = x.size(3), c = x.size(4);
  int64_t peak = 0;

  // time: [B, H, W, T, C] is already ordered for [B*H*W, T, C]
  auto y = attend(x.reshape({b * h * w, t, c}), params.q[0], params.k[0], params.v[0], scaled,
                  &peak)
               .view({b, h, w, t, c});
  // height: [B, W, T, H, C]
  y = attend(y.permute({0, 2, 3, 1, 4}).reshape({b * w * t, h, c}), params.q[1], params.k[1],
             params.v[1], scaled, &peak)
          .view({b, w, t, h, c})
          .permute({0, 3, 1, 2, 4});
  // width: [B, H, T, W, C]
  y = attend(y.permute({0, 1, 3, 2, 4}).reshape({b * h * t, w, c}), params.q[2], params.k[2],
             params.v[2], scaled, &peak)
          .view({b, h, t, w, c})
          .permute({0, 1, 3, 2, 4});

  if (trace != nullptr) {
    trace->peak_entries = peak;
    const auto n = h * w * t;
    trace->full_entries = b * n * n;
  }
  return y.contiguous();
}

}  // namespace dvdgan::attention
