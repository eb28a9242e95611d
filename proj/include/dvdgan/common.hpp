#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvdgan {

// Error taxonomy. The CLI maps these onto process exit codes.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a loss or score becomes non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// ---------------------------------------------------------------------------
// Randomness. Every stochastic operation takes an explicit at::Generator so
// results are a pure function of (inputs, generator state).
// ---------------------------------------------------------------------------
at::Generator make_generator(uint64_t seed);

/// splitmix64 mix of (seed, stream); used for per-worker / per-replica streams.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

/// Uniform integer in [lo, hi] inclusive.
int64_t uniform_int(at::Generator& gen, int64_t lo, int64_t hi);

/// k distinct indices drawn uniformly from [0, n), in draw order.
std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k, at::Generator& gen);

std::vector<uint8_t> generator_state(at::Generator& gen);
void set_generator_state(at::Generator& gen, const std::vector<uint8_t>& state);

// ---------------------------------------------------------------------------
// Layout helpers. Public video tensors are channels-last [B, T, H, W, C];
// networks run on time-folded channels-first frames [B*T, C, H, W].
// ---------------------------------------------------------------------------
torch::Tensor fold_time(const torch::Tensor& videos);
torch::Tensor unfold_time(const torch::Tensor& frames, int64_t num_frames);

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, 64 bit). Stable across runs and platforms.
// ---------------------------------------------------------------------------
constexpr uint64_t kFnvOffset = 1469598103934665603ULL;

uint64_t fnv1a(std::span<const uint8_t> bytes, uint64_t h = kFnvOffset);
uint64_t fnv1a(const std::string& text, uint64_t h = kFnvOffset);
uint64_t hash_tensor(const torch::Tensor& t, uint64_t h = kFnvOffset);
uint64_t hash_tensors(const std::vector<torch::Tensor>& ts);
std::string hex64(uint64_t v);

}  // namespace dvdgan
