#include "dvdgan/common.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cstdio>
#include <cstring>
#include <mutex>

namespace dvdgan {

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int64_t uniform_int(at::Generator& gen, int64_t lo, int64_t hi) {
  if (hi < lo) {
    throw InvalidInput("uniform_int: empty range [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
  }
  if (hi == lo) {
    return lo;
  }
  return torch::randint(lo, hi + 1, {1}, gen, torch::kLong).item<int64_t>();
}

std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k, at::Generator& gen) {
  if (k < 0 || k > n) {
    throw InvalidInput("cannot draw " + std::to_string(k) + " distinct indices from " +
                       std::to_string(n));
  }
  auto perm = torch::randperm(n, gen, torch::kLong);
  std::vector<int64_t> out(k);
  auto acc = perm.accessor<int64_t, 1>();
  for (int64_t i = 0; i < k; ++i) {
    out[i] = acc[i];
  }
  return out;
}

std::vector<uint8_t> generator_state(at::Generator& gen) {
  std::lock_guard<std::mutex> lock(gen.mutex());
  auto state = gen.get_state().contiguous();
  const auto* p = state.data_ptr<uint8_t>();
  return {p, p + state.numel()};
}

void set_generator_state(at::Generator& gen, const std::vector<uint8_t>& state) {
  auto t = torch::empty({static_cast<int64_t>(state.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr<uint8_t>(), state.data(), state.size());
  std::lock_guard<std::mutex> lock(gen.mutex());
  gen.set_state(t);
}

torch::Tensor fold_time(const torch::Tensor& videos) {
  TORCH_CHECK(videos.dim() == 5, "expected [B, T, H, W, C] video, got ", videos.sizes());
  const auto b = videos.size(0), t = videos.size(1), h = videos.size(2), w = videos.size(3),
             c = videos.size(4);
  return videos.permute({0, 1, 4, 2, 3}).reshape({b * t, c, h, w});
}

torch::Tensor unfold_time(const torch::Tensor& frames, int64_t num_frames) {
  TORCH_CHECK(frames.dim() == 4 && frames.size(0) % num_frames == 0,
              "cannot unfold ", frames.sizes(), " into ", num_frames, " frames");
  const auto b = frames.size(0) / num_frames;
  return frames.reshape({b, num_frames, frames.size(1), frames.size(2), frames.size(3)})
      .permute({0, 1, 3, 4, 2});
}

uint64_t fnv1a(std::span<const uint8_t> bytes, uint64_t h) {
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t fnv1a(const std::string& text, uint64_t h) {
  return fnv1a(std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()), h);
}

uint64_t hash_tensor(const torch::Tensor& t, uint64_t h) {
  auto c = t.detach().contiguous().cpu();
  return fnv1a(std::span(static_cast<const uint8_t*>(c.data_ptr()), c.nbytes()), h);
}

uint64_t hash_tensors(const std::vector<torch::Tensor>& ts) {
  uint64_t h = kFnvOffset;
  for (const auto& t : ts) {
    h = hash_tensor(t, h);
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace dvdgan
