#pragma once

#include "dvdgan/data/dataset.hpp"
#include "dvdgan/training.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace dvdgan::eval {

/// Raised when the desk classifier misses its held-out accuracy gate; metrics
/// computed with such an extractor would be meaningless.
class ExtractorGateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassifierConfig {
  int64_t width = 16;
  int64_t epochs = 40;
  int64_t batch_size = 32;
  double lr = 1e-3;
  double holdout_fraction = 0.2;
  double min_accuracy = 0.9;
  uint64_t seed = 0;
};

/// Small 3-D convolutional video classifier: three conv3x3x3 + ReLU stages
/// with average pooling, global average pooling ("avgpool" features), then a
/// linear layer to logits.
class VideoClassifierImpl : public torch::nn::Module {
 public:
  VideoClassifierImpl(int64_t num_classes, int64_t width, at::Generator& gen);

  /// videos [B, T, H, W, 3] in [-1, 1] -> pooled features [B, 4 * width].
  torch::Tensor features(const torch::Tensor& videos);
  torch::Tensor forward(const torch::Tensor& videos);

  torch::nn::Conv3d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(VideoClassifier);

/// Frozen classifier used for FID/IS. All outputs are float64 and computed in
/// eval mode without gradients.
class FeatureExtractor {
 public:
  struct Info {
    int64_t num_classes = 4;
    int64_t width = 16;
    int64_t resolution = 32;
    int64_t clip_length = 8;
    double heldout_accuracy = 0;
  };

  FeatureExtractor(VideoClassifier model, Info info);

  torch::Tensor features(const torch::Tensor& videos, int64_t batch = 64) const;
  torch::Tensor logits(const torch::Tensor& videos, int64_t batch = 64) const;
  torch::Tensor probabilities(const torch::Tensor& videos, int64_t batch = 64) const;

  const Info& info() const { return info_; }
  /// Hash of the frozen weights; cited next to every metric.
  uint64_t hash() const;

  void save(const std::filesystem::path& file) const;
  static FeatureExtractor load(const std::filesystem::path& file);

 private:
  VideoClassifier model_;
  Info info_;
};

/// One preprocessed clip per video, stacked: [N, T, R, R, 3].
struct ClipSet {
  torch::Tensor videos;
  torch::Tensor labels;
};
ClipSet preprocess_all(const data::Dataset& dataset, const data::PreprocessConfig& config,
                       uint64_t seed);

/// Trains on a class-stratified split and refuses to return an extractor below
/// `min_accuracy` on the held-out part.
FeatureExtractor train_feature_extractor(const data::Dataset& dataset,
                                         const data::PreprocessConfig& preprocess,
                                         int64_t num_classes, const ClassifierConfig& config,
                                         const std::function<void(int64_t, double)>& on_epoch = {});

double classification_accuracy(const FeatureExtractor& extractor, const torch::Tensor& videos,
                               const torch::Tensor& labels);

struct EvalStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  int64_t n = 0;

  int64_t dim() const { return mu.size(); }
  /// Sigma can only be full rank when n > dim.
  bool well_conditioned() const { return n > dim(); }
};

/// Sample mean and unbiased covariance of features [n, d]; n >= 2.
EvalStats compute_stats(const torch::Tensor& features);

/// Symmetric PSD square root by eigendecomposition. Eigenvalues below
/// -tol * max(1, max|lambda|) raise InvalidInput; the rest are clamped at 0.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, double tol = 1e-10);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2), clamped at 0.
double fid(const EvalStats& a, const EvalStats& b);

struct InceptionScore {
  double mean = 0;
  double std = 0;
};

/// exp(E_x KL(p(y|x) || p(y))) per split; mean and population std over splits.
InceptionScore inception_score(const torch::Tensor& probs, int64_t splits = 10);

void save_stats(const std::filesystem::path& file, const EvalStats& stats, uint64_t key);
std::optional<EvalStats> load_stats(const std::filesystem::path& file, uint64_t key);

/// Training-set reference statistics, cached under `cache_dir` by
/// (dataset hash, extractor hash).
EvalStats reference_stats(const data::Dataset& dataset, const data::PreprocessConfig& preprocess,
                          const FeatureExtractor& extractor,
                          const std::optional<std::filesystem::path>& cache_dir,
                          uint64_t seed = 0);

/// Produces n videos [n, T, R, R, 3].
using VideoSampler = std::function<torch::Tensor(int64_t n, at::Generator& gen)>;

/// EMA samples at truncation `stddev` with uniformly drawn class ids. In
/// frame-prediction mode the conditioning frames come from `conditioning`.
VideoSampler ema_sampler(Trainer& trainer, double stddev,
                         data::BatchSource* conditioning = nullptr);
/// Draws from a fixed set of real clips in order, cycling.
VideoSampler clip_sampler(torch::Tensor videos);

struct EvalResult {
  double fid = 0;
  double is_mean = 0;
  double is_std = 0;
};

EvalResult evaluate_model(const VideoSampler& sampler, const FeatureExtractor& extractor,
                          const EvalStats& reference, int64_t num_samples, uint64_t seed,
                          int64_t batch = 64, int64_t splits = 10);

struct TruncationPoint {
  double stddev = 1;
  EvalResult result;
};

std::vector<TruncationPoint> truncation_sweep(
    const std::function<VideoSampler(double stddev)>& make_sampler,
    const FeatureExtractor& extractor, const EvalStats& reference,
    const std::vector<double>& stddevs, int64_t num_samples, uint64_t seed, int64_t batch = 64,
    int64_t splits = 10);

/// Index of the best-IS point (first on ties).
size_t best_is_index(const std::vector<TruncationPoint>& points);

/// CSV with columns stddev, fid, is, is_std preceded by one `#` provenance line.
void write_truncation_csv(const std::filesystem::path& file,
                          const std::vector<TruncationPoint>& points,
                          const std::string& provenance);

/// FID (top) and IS (bottom) against stddev; the best-IS point is ringed.
torch::Tensor truncation_plot(const std::vector<TruncationPoint>& points);

}  // namespace dvdgan::eval
