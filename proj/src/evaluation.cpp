#include "dvdgan/evaluation.hpp"

#include "dvdgan/image.hpp"
#include "dvdgan/nn/layers.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace dvdgan::eval {

namespace {

torch::nn::Conv3d make_conv3d(int64_t in, int64_t out, at::Generator& gen) {
  auto conv = torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).padding(1));
  torch::NoGradGuard no_grad;
  conv->weight.copy_(nn::orthogonal_init(conv->weight.sizes(), gen));
  conv->bias.zero_();
  return conv;
}

}  // namespace

VideoClassifierImpl::VideoClassifierImpl(int64_t num_classes, int64_t width, at::Generator& gen) {
  conv1 = register_module("conv1", make_conv3d(3, width, gen));
  conv2 = register_module("conv2", make_conv3d(width, 2 * width, gen));
  conv3 = register_module("conv3", make_conv3d(2 * width, 4 * width, gen));
  fc = register_module("fc", nn::make_linear(4 * width, num_classes, gen));
}

torch::Tensor VideoClassifierImpl::features(const torch::Tensor& videos) {
  if (videos.dim() != 5 || videos.size(4) != 3) {
    throw InvalidInput("classifier expects videos [B, T, H, W, 3]");
  }
  auto x = videos.permute({0, 4, 1, 2, 3});  // [B, 3, T, H, W]
  x = torch::avg_pool3d(torch::relu(conv1(x)), {1, 2, 2});
  x = torch::relu(conv2(x));
  x = torch::avg_pool3d(x, {x.size(2) >= 2 ? 2 : 1, 2, 2});
  x = torch::relu(conv3(x));
  return x.mean({2, 3, 4});
}

torch::Tensor VideoClassifierImpl::forward(const torch::Tensor& videos) {
  return fc(features(videos));
}

// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(VideoClassifier model, Info info)
    : model_(std::move(model)), info_(info) {
  model_->eval();
  for (auto& p : model_->parameters()) p.requires_grad_(false);
}

namespace {

template <typename Fn>
torch::Tensor batched(const torch::Tensor& videos, int64_t batch, Fn&& fn) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> parts;
  for (int64_t i = 0; i < videos.size(0); i += batch) {
    parts.push_back(fn(videos.slice(0, i, std::min(i + batch, videos.size(0)))));
  }
  return torch::cat(parts, 0).to(torch::kFloat64);
}

}  // namespace

torch::Tensor FeatureExtractor::features(const torch::Tensor& videos, int64_t batch) const {
  auto& m = const_cast<VideoClassifier&>(model_);
  return batched(videos.to(torch::kFloat32), batch,
                 [&](const torch::Tensor& v) { return m->features(v); });
}

torch::Tensor FeatureExtractor::logits(const torch::Tensor& videos, int64_t batch) const {
  auto& m = const_cast<VideoClassifier&>(model_);
  return batched(videos.to(torch::kFloat32), batch,
                 [&](const torch::Tensor& v) { return m->forward(v); });
}

torch::Tensor FeatureExtractor::probabilities(const torch::Tensor& videos, int64_t batch) const {
  return torch::softmax(logits(videos, batch), 1);
}

uint64_t FeatureExtractor::hash() const {
  std::vector<torch::Tensor> ts;
  for (const auto& p : model_->parameters()) ts.push_back(p);
  return hash_tensors(ts);
}

namespace {
constexpr const char* kExtractorKind = "DVDGFEAT";
constexpr const char* kStatsKind = "DVDGSTAT";
}  // namespace

void FeatureExtractor::save(const std::filesystem::path& file) const {
  Archive a;
  a.kind = kExtractorKind;
  a.meta = {{"num_classes", info_.num_classes},
            {"width", info_.width},
            {"resolution", info_.resolution},
            {"clip_length", info_.clip_length},
            {"heldout_accuracy", info_.heldout_accuracy}};
  add_module_state(a, "", *model_);
  write_archive(file, a);
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& file) {
  const auto a = read_archive(file);
  if (a.kind != kExtractorKind) {
    throw CheckpointError(file.string() + " is not a feature-extractor file");
  }
  Info info;
  info.num_classes = a.meta.at("num_classes").get<int64_t>();
  info.width = a.meta.at("width").get<int64_t>();
  info.resolution = a.meta.at("resolution").get<int64_t>();
  info.clip_length = a.meta.at("clip_length").get<int64_t>();
  info.heldout_accuracy = a.meta.at("heldout_accuracy").get<double>();
  auto gen = make_generator(0);
  VideoClassifier model(info.num_classes, info.width, gen);
  load_module_state(a, "", *model);
  return FeatureExtractor(model, info);
}

// ---------------------------------------------------------------------------

ClipSet preprocess_all(const data::Dataset& dataset, const data::PreprocessConfig& config,
                       uint64_t seed) {
  auto gen = make_generator(seed);
  std::vector<data::Clip> clips;
  clips.reserve(dataset.size());
  for (const auto& v : dataset) clips.push_back(data::preprocess(v, config, gen));
  auto batch = data::stack_clips(clips);
  return {batch.videos, batch.labels};
}

double classification_accuracy(const FeatureExtractor& extractor, const torch::Tensor& videos,
                               const torch::Tensor& labels) {
  auto pred = extractor.logits(videos).argmax(1);
  return pred.eq(labels).to(torch::kFloat64).mean().item<double>();
}

FeatureExtractor train_feature_extractor(const data::Dataset& dataset,
                                         const data::PreprocessConfig& preprocess,
                                         int64_t num_classes, const ClassifierConfig& config,
                                         const std::function<void(int64_t, double)>& on_epoch) {
  // stratified split: the last holdout_fraction of each class is held out
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(num_classes));
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto y = dataset[i].label;
    if (y < 0 || y >= num_classes) throw InvalidInput("dataset label out of range");
    by_class[static_cast<size_t>(y)].push_back(i);
  }
  data::Dataset train, held;
  for (const auto& idx : by_class) {
    const auto n_held = static_cast<size_t>(std::ceil(config.holdout_fraction *
                                                      static_cast<double>(idx.size())));
    for (size_t j = 0; j < idx.size(); ++j) {
      (j + n_held < idx.size() ? train : held).push_back(dataset[idx[j]]);
    }
  }
  if (train.empty() || held.empty()) {
    throw InvalidInput("dataset too small for a train/held-out split");
  }
  auto gen = make_generator(config.seed);
  VideoClassifier model(num_classes, config.width, gen);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(config.lr));
  const auto heldout = preprocess_all(held, preprocess, derive_seed(config.seed, 7));

  FeatureExtractor::Info info{num_classes, config.width, preprocess.resolution,
                              preprocess.num_frames, 0.0};
  double accuracy = 0;
  const auto n = static_cast<int64_t>(train.size());
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    model->train();
    const auto order = sample_without_replacement(n, n, gen);
    for (int64_t i = 0; i < n; i += config.batch_size) {
      std::vector<data::Clip> clips;
      for (int64_t j = i; j < std::min(n, i + config.batch_size); ++j) {
        clips.push_back(data::preprocess(train[static_cast<size_t>(order[static_cast<size_t>(j)])],
                                         preprocess, gen));
      }
      auto batch = data::stack_clips(clips);
      opt.zero_grad();
      auto loss = torch::nn::functional::cross_entropy(model->forward(batch.videos), batch.labels);
      loss.backward();
      opt.step();
    }
    model->eval();
    {
      torch::NoGradGuard no_grad;
      accuracy = model->forward(heldout.videos).argmax(1).eq(heldout.labels)
                     .to(torch::kFloat64).mean().item<double>();
    }
    if (on_epoch) on_epoch(epoch, accuracy);
    if (accuracy >= 0.99) break;
  }
  if (accuracy < config.min_accuracy) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "classifier reached %.3f held-out accuracy, below the %.2f gate; refusing to "
                  "freeze it as a feature extractor",
                  accuracy, config.min_accuracy);
    throw ExtractorGateError(buf);
  }
  info.heldout_accuracy = accuracy;
  return FeatureExtractor(model, info);
}

// ---------------------------------------------------------------------------

EvalStats compute_stats(const torch::Tensor& features) {
  if (features.dim() != 2) throw InvalidInput("features must be [n, d]");
  if (features.size(0) < 2) throw InvalidInput("need at least 2 feature rows");
  auto f = features.to(torch::kFloat64).contiguous();
  const auto n = f.size(0), d = f.size(1);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      f.data_ptr<double>(), n, d);
  EvalStats s;
  s.n = n;
  s.mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return s;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) throw InvalidInput("sqrt_psd needs a square matrix");
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw InvalidInput("eigendecomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -tol * scale) {
      throw InvalidInput("matrix is not positive semidefinite (eigenvalue " +
                         std::to_string(lambda[i]) + ")");
    }
    lambda[i] = std::sqrt(std::max(lambda[i], 0.0));
  }
  return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto ha = sqrt_psd(a);
  return sqrt_psd(ha * b * ha).trace();
}

}  // namespace

double fid(const EvalStats& a, const EvalStats& b) {
  if (a.dim() != b.dim()) throw InvalidInput("FID needs statistics of equal dimension");
  const double mean_term = (a.mu - b.mu).squaredNorm();
  // Tr((S_a S_b)^1/2) is symmetric in (a, b); averaging both evaluation
  // orders makes the rounding symmetric too
  const double cross = 0.5 * (trace_sqrt_product(a.sigma, b.sigma) +
                              trace_sqrt_product(b.sigma, a.sigma));
  return std::max(0.0, mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * cross);
}

InceptionScore inception_score(const torch::Tensor& probs, int64_t splits) {
  if (probs.dim() != 2) throw InvalidInput("probabilities must be [n, classes]");
  auto p = probs.to(torch::kFloat64).contiguous();
  const auto n = p.size(0);
  if (splits < 1 || n < splits) throw InvalidInput("need at least one row per split");
  if ((p.min().item<double>() < -1e-5) ||
      (p.sum(1) - 1.0).abs().max().item<double>() > 1e-5) {
    throw InvalidInput("probability rows must be non-negative and sum to 1 (tolerance 1e-5)");
  }
  p = p.clamp_min(0.0);
  std::vector<double> scores;
  for (int64_t s = 0; s < splits; ++s) {
    auto part = p.slice(0, s * n / splits, (s + 1) * n / splits);
    auto py = part.mean(0, true);
    auto terms = torch::where(part > 0, part * (part.log() - py.log()), torch::zeros_like(part));
    const double kl = std::max(0.0, terms.sum(1).mean().item<double>());
    scores.push_back(std::exp(kl));
  }
  InceptionScore out;
  for (double v : scores) out.mean += v / static_cast<double>(splits);
  for (double v : scores) out.std += (v - out.mean) * (v - out.mean) / static_cast<double>(splits);
  out.std = std::sqrt(out.std);
  return out;
}

// ---------------------------------------------------------------------------

void save_stats(const std::filesystem::path& file, const EvalStats& stats, uint64_t key) {
  Archive a;
  a.kind = kStatsKind;
  a.config_hash = key;
  a.meta["n"] = stats.n;
  const auto d = stats.dim();
  a.add("mu", torch::from_blob(const_cast<double*>(stats.mu.data()), {d}, torch::kFloat64).clone());
  // Eigen is column-major; sigma is symmetric so the layout does not matter
  a.add("sigma",
        torch::from_blob(const_cast<double*>(stats.sigma.data()), {d, d}, torch::kFloat64).clone());
  write_archive(file, a);
}

std::optional<EvalStats> load_stats(const std::filesystem::path& file, uint64_t key) {
  if (!std::filesystem::exists(file)) return std::nullopt;
  const auto a = read_archive(file);
  if (a.kind != kStatsKind || a.config_hash != key) return std::nullopt;
  EvalStats s;
  s.n = a.meta.at("n").get<int64_t>();
  const auto& mu = a.tensor("mu");
  const auto& sigma = a.tensor("sigma");
  const auto d = mu.size(0);
  s.mu = Eigen::Map<const Eigen::VectorXd>(mu.data_ptr<double>(), d);
  s.sigma = Eigen::Map<const Eigen::MatrixXd>(sigma.data_ptr<double>(), d, d);
  return s;
}

EvalStats reference_stats(const data::Dataset& dataset, const data::PreprocessConfig& preprocess,
                          const FeatureExtractor& extractor,
                          const std::optional<std::filesystem::path>& cache_dir, uint64_t seed) {
  const auto dh = data::dataset_hash(dataset);
  const auto eh = extractor.hash();
  const auto key = fnv1a(hex64(dh) + hex64(eh) + std::to_string(preprocess.resolution) + "/" +
                         std::to_string(preprocess.num_frames) + "/" +
                         std::to_string(preprocess.stride) + "/" + std::to_string(seed));
  std::filesystem::path file;
  if (cache_dir) {
    file = *cache_dir / ("stats_" + hex64(dh) + "_" + hex64(eh) + ".bin");
    if (auto cached = load_stats(file, key)) return *cached;
  }
  const auto clips = preprocess_all(dataset, preprocess, seed);
  auto stats = compute_stats(extractor.features(clips.videos));
  if (cache_dir) save_stats(file, stats, key);
  return stats;
}

// ---------------------------------------------------------------------------

VideoSampler ema_sampler(Trainer& trainer, double stddev, data::BatchSource* conditioning) {
  return [&trainer, stddev, conditioning](int64_t n, at::Generator& gen) {
    const auto& spec = trainer.spec();
    auto z = sample_latents(n, spec.generator.latent_dim, stddev, gen);
    auto y = torch::randint(0, spec.generator.num_classes, {n}, gen, torch::kInt64);
    torch::Tensor cond;
    if (spec.fp.enabled) {
      if (conditioning == nullptr) {
        throw InvalidInput("frame-prediction evaluation needs a conditioning source");
      }
      cond = conditioning->next(n).videos.slice(1, 0, spec.fp.conditioning_frames);
    }
    return trainer.sample(z, y, cond);
  };
}

VideoSampler clip_sampler(torch::Tensor videos) {
  auto cursor = std::make_shared<int64_t>(0);
  return [videos, cursor](int64_t n, at::Generator&) {
    std::vector<torch::Tensor> parts;
    int64_t need = n;
    while (need > 0) {
      const auto take = std::min(need, videos.size(0) - *cursor);
      parts.push_back(videos.slice(0, *cursor, *cursor + take));
      *cursor = (*cursor + take) % videos.size(0);
      need -= take;
    }
    return torch::cat(parts, 0);
  };
}

EvalResult evaluate_model(const VideoSampler& sampler, const FeatureExtractor& extractor,
                          const EvalStats& reference, int64_t num_samples, uint64_t seed,
                          int64_t batch, int64_t splits) {
  if (num_samples < 2) throw InvalidInput("evaluation needs at least 2 samples");
  auto gen = make_generator(seed);
  std::vector<torch::Tensor> feats, probs;
  for (int64_t done = 0; done < num_samples; done += batch) {
    torch::NoGradGuard no_grad;
    auto videos = sampler(std::min(batch, num_samples - done), gen);
    feats.push_back(extractor.features(videos));
    probs.push_back(extractor.probabilities(videos));
  }
  EvalResult r;
  r.fid = fid(compute_stats(torch::cat(feats, 0)), reference);
  const auto is = inception_score(torch::cat(probs, 0), std::min(splits, num_samples));
  r.is_mean = is.mean;
  r.is_std = is.std;
  return r;
}

std::vector<TruncationPoint> truncation_sweep(
    const std::function<VideoSampler(double)>& make_sampler, const FeatureExtractor& extractor,
    const EvalStats& reference, const std::vector<double>& stddevs, int64_t num_samples,
    uint64_t seed, int64_t batch, int64_t splits) {
  std::vector<TruncationPoint> points;
  for (double s : stddevs) {
    points.push_back({s, evaluate_model(make_sampler(s), extractor, reference, num_samples, seed,
                                        batch, splits)});
  }
  return points;
}

size_t best_is_index(const std::vector<TruncationPoint>& points) {
  size_t best = 0;
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].result.is_mean > points[best].result.is_mean) best = i;
  }
  return best;
}

void write_truncation_csv(const std::filesystem::path& file,
                          const std::vector<TruncationPoint>& points,
                          const std::string& provenance) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << "# " << provenance << "\n";
  out << "stddev,fid,is,is_std\n";
  char buf[128];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.4g,%.9g,%.9g,%.9g\n", p.stddev, p.result.fid,
                  p.result.is_mean, p.result.is_std);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + file.string());
}

torch::Tensor truncation_plot(const std::vector<TruncationPoint>& points) {
  image::Series f{"fid", {}, {}, {}, image::palette(0)};
  image::Series s{"is", {}, {}, {}, image::palette(1)};
  for (const auto& p : points) {
    f.x.push_back(p.stddev);
    f.y.push_back(p.result.fid);
    s.x.push_back(p.stddev);
    s.y.push_back(p.result.is_mean);
    s.err.push_back(p.result.is_std);
  }
  std::array<double, 2> best{0, 0};
  if (!points.empty()) {
    const auto& b = points[best_is_index(points)];
    best = {b.stddev, b.result.is_mean};
  }
  auto top = image::line_plot({f}, 480, 240);
  auto bottom = image::line_plot({s}, 480, 240, points.empty() ? nullptr : &best);
  return torch::cat({top, bottom}, 0);
}

}  // namespace dvdgan::eval
