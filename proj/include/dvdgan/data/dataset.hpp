#pragma once

#include "dvdgan/data/video.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace dvdgan::data {

using Dataset = std::vector<RawVideo>;

// On-disk layout: one raw tensor file per video (uint8, frame-major
// [T, H, W, 3]) plus `index.tsv` with a header row and the columns
// path, label, num_frames, height, width. Paths are relative to the directory.
void write_dataset(const std::filesystem::path& dir, const Dataset& videos);
Dataset read_dataset(const std::filesystem::path& dir);

void write_raw_tensor(const std::filesystem::path& file, const torch::Tensor& frames_u8);
torch::Tensor read_raw_tensor(const std::filesystem::path& file, int64_t num_frames,
                              int64_t height, int64_t width);

uint64_t dataset_hash(const Dataset& videos);

/// A stream of real training batches. Implementations must be checkpointable
/// so training can resume bit-exactly.
class BatchSource {
 public:
  virtual ~BatchSource() = default;
  virtual VideoBatch next(int64_t batch_size) = 0;
  virtual std::vector<uint8_t> save_state() const = 0;
  virtual void load_state(const std::vector<uint8_t>& state) = 0;
};

/// Epoch-shuffled batches with full preprocessing applied on access. Each
/// replica seed yields an independent shuffle order; a crop and clip start
/// are redrawn every time a video is visited.
class Batcher final : public BatchSource {
 public:
  Batcher(std::shared_ptr<const Dataset> dataset, PreprocessConfig config, uint64_t seed);

  VideoBatch next(int64_t batch_size) override;
  std::vector<uint8_t> save_state() const override;
  void load_state(const std::vector<uint8_t>& state) override;

  int64_t epoch() const { return epoch_; }
  const PreprocessConfig& config() const { return config_; }

 private:
  void reshuffle();

  std::shared_ptr<const Dataset> dataset_;
  PreprocessConfig config_;
  at::Generator gen_;
  std::vector<int64_t> order_;
  int64_t cursor_ = 0;
  int64_t epoch_ = 0;
};

/// One batch from a Batcher; kept as a free function for one-off use.
VideoBatch make_batch(Batcher& batcher, int64_t batch_size);

/// Stacks preprocessed clips into a batch.
VideoBatch stack_clips(const std::vector<Clip>& clips);

}  // namespace dvdgan::data
