#include "dvdgan/data/synthetic.hpp"
#include "dvdgan/evaluation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace dvdgan;
using namespace dvdgan::eval;
namespace ts = testing_support;

namespace {

EvalStats gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  EvalStats s;
  s.mu = mu;
  s.sigma = sigma;
  s.n = 1000;
  return s;
}

Eigen::MatrixXd random_orthogonal(int64_t d, at::Generator& gen) {
  auto a = torch::randn({d, d}, gen, torch::kFloat64);
  auto q = std::get<0>(torch::linalg_qr(a));
  Eigen::MatrixXd m(d, d);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) m(i, j) = q[i][j].item<double>();
  return m;
}

Eigen::VectorXd random_vector(int64_t d, at::Generator& gen, double lo = -1, double hi = 1) {
  auto t = torch::rand({d}, gen, torch::kFloat64) * (hi - lo) + lo;
  Eigen::VectorXd v(d);
  for (int64_t i = 0; i < d; ++i) v[i] = t[i].item<double>();
  return v;
}

FeatureExtractor untrained_extractor(uint64_t seed) {
  auto gen = make_generator(seed);
  FeatureExtractor::Info info;
  info.width = 4;
  info.resolution = 16;
  info.clip_length = 4;
  return FeatureExtractor(VideoClassifier(4, 4, gen), info);
}

data::Dataset small_dataset(int64_t n, uint64_t seed) {
  data::SyntheticDatasetConfig cfg;
  cfg.dataset_size = n;
  cfg.resolution = 16;
  cfg.clip_length = 8;
  cfg.seed = seed;
  return data::generate_synthetic_dataset(cfg);
}

std::string slurp(const std::filesystem::path& f) {
  std::ifstream in(f);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Stats, Examples) {
  auto same = torch::tensor({1.0, 2.0, 1.0, 2.0, 1.0, 2.0}, torch::kFloat64).view({3, 2});
  auto s = compute_stats(same);
  EXPECT_EQ(s.n, 3);
  EXPECT_DOUBLE_EQ(s.mu[0], 1.0);
  EXPECT_DOUBLE_EQ(s.mu[1], 2.0);
  EXPECT_DOUBLE_EQ(s.sigma.norm(), 0.0);

  auto two = torch::tensor({0.0, 0.0, 2.0, 0.0}, torch::kFloat64).view({2, 2});
  auto t = compute_stats(two);
  EXPECT_DOUBLE_EQ(t.mu[0], 1.0);
  EXPECT_DOUBLE_EQ(t.mu[1], 0.0);
  EXPECT_DOUBLE_EQ(t.sigma(0, 0), 2.0);  // unbiased: ((-1)^2 + 1^2) / 1
  EXPECT_DOUBLE_EQ(t.sigma(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(t.sigma(0, 1), 0.0);
  EXPECT_FALSE(t.well_conditioned());

  auto gen = make_generator(0);
  auto x = torch::randn({20, 3}, gen, torch::kFloat64);
  auto a = compute_stats(x), b = compute_stats(x.index_select(0, torch::randperm(20, gen)));
  EXPECT_LT((a.mu - b.mu).norm(), 1e-12);
  EXPECT_LT((a.sigma - b.sigma).norm(), 1e-12);
  EXPECT_TRUE(a.well_conditioned());
  EXPECT_THROW(compute_stats(torch::randn({1, 3}, torch::kFloat64)), InvalidInput);
}

TEST(SqrtPsd, MatchesJacobiOracle) {
  auto gen = make_generator(1);
  for (int i = 0; i < 10; ++i) {
    auto a = torch::randn({5, 5}, gen, torch::kFloat64);
    auto spd = torch::mm(a, a.t());
    Eigen::MatrixXd m(5, 5);
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 5; ++c) m(r, c) = spd[r][c].item<double>();
    auto got = sqrt_psd(m);
    auto want = ts::jacobi_apply(m, [](double l) { return std::sqrt(std::max(l, 0.0)); });
    EXPECT_LT((got - want).norm(), 1e-6 * std::max(1.0, want.norm()));
    EXPECT_LT((got * got - m).norm(), 1e-8 * m.norm());
  }
  Eigen::MatrixXd neg = Eigen::MatrixXd::Identity(2, 2);
  neg(1, 1) = -1;
  EXPECT_THROW(sqrt_psd(neg), InvalidInput);
}

TEST(Fid, ClosedForms) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_NEAR(fid(gaussian(zero, eye), gaussian(zero, eye)), 0.0, 1e-12);
  Eigen::VectorXd shift = zero;
  shift[0] = 1;
  EXPECT_NEAR(fid(gaussian(zero, eye), gaussian(shift, eye)), 1.0, 1e-12);
  // Tr(4I + I - 2 * 2I) = 2 for d = 2
  EXPECT_NEAR(fid(gaussian(zero, 4 * eye), gaussian(zero, eye)), 2.0, 1e-12);
  EXPECT_NEAR(ts::fid_1d(0, 4, 0, 1), 1.0, 1e-15);
}

TEST(Fid, SymmetricAndTranslation) {
  auto gen = make_generator(2);
  for (int i = 0; i < 10; ++i) {
    auto fa = torch::randn({40, 4}, gen, torch::kFloat64);
    auto fb = torch::randn({40, 4}, gen, torch::kFloat64) * 1.5 + 0.3;
    auto a = compute_stats(fa), b = compute_stats(fb);
    const double ab = fid(a, b);
    EXPECT_NEAR(ab, fid(b, a), 1e-8 * std::max(1.0, ab));
    auto t = random_vector(4, gen);
    auto moved = a;
    moved.mu += t;
    const double expected = fid(a, b) - (a.mu - b.mu).squaredNorm() + (moved.mu - b.mu).squaredNorm();
    EXPECT_NEAR(fid(moved, b), expected, 1e-8 * std::max(1.0, expected));
    EXPECT_NEAR(fid(moved, a), t.squaredNorm(), 1e-8);
  }
}

TEST(Fid, CommutingOracle) {
  auto gen = make_generator(3);
  for (int i = 0; i < 20; ++i) {
    const int64_t d = 2 + i % 5;
    auto q = random_orthogonal(d, gen);
    auto la = random_vector(d, gen, 0.1, 3.0), lb = random_vector(d, gen, 0.1, 3.0);
    auto mu_a = random_vector(d, gen), mu_b = random_vector(d, gen);
    Eigen::MatrixXd sa = q * la.asDiagonal() * q.transpose();
    Eigen::MatrixXd sb = q * lb.asDiagonal() * q.transpose();
    const double want = ts::fid_commuting(mu_a, la, mu_b, lb);
    EXPECT_NEAR(fid(gaussian(mu_a, sa), gaussian(mu_b, sb)), want, 1e-6 * std::max(1.0, want)) << i;
  }
}

TEST(InceptionScore, Bounds) {
  const int64_t n = 40, k = 4;
  auto uniform = torch::full({n, k}, 1.0 / k, torch::kFloat64);
  EXPECT_NEAR(inception_score(uniform, 4).mean, 1.0, 1e-12);
  auto onehot = torch::one_hot(torch::arange(n) % k, k).to(torch::kFloat64);
  auto full = inception_score(onehot, 1);
  EXPECT_NEAR(full.mean, static_cast<double>(k), 1e-9);
  EXPECT_NEAR(full.std, 0.0, 1e-12);
  auto single = torch::one_hot(torch::zeros({n}, torch::kLong), k).to(torch::kFloat64);
  EXPECT_NEAR(inception_score(single, 2).mean, 1.0, 1e-12);

  auto gen = make_generator(4);
  for (int i = 0; i < 10; ++i) {
    auto p = torch::softmax(torch::randn({n, k}, gen, torch::kFloat64) * 3, 1);
    auto is = inception_score(p, 5);
    EXPECT_GE(is.mean, 1.0 - 1e-12);
    EXPECT_LE(is.mean, static_cast<double>(k) + 1e-12);
  }
  EXPECT_THROW(inception_score(torch::ones({4, 2}, torch::kFloat64), 1), InvalidInput);
  EXPECT_THROW(inception_score(uniform, 0), InvalidInput);
}

TEST(Extractor, DeterministicProbabilitiesAndRoundTrip) {
  auto ex = untrained_extractor(5);
  auto gen = make_generator(5);
  auto v = torch::rand({6, 4, 16, 16, 3}, gen) * 2 - 1;
  auto p = ex.probabilities(v, 4);
  EXPECT_EQ(p.scalar_type(), torch::kFloat64);
  EXPECT_LT((p.sum(1) - 1).abs().max().item<double>(), 1e-12);
  EXPECT_TRUE(torch::equal(p, ex.probabilities(v, 2)));  // batching does not matter
  EXPECT_EQ(ex.features(v).size(1), 16);

  const auto file = ts::scratch_dir("extractor") / "ex.bin";
  ex.save(file);
  auto back = FeatureExtractor::load(file);
  EXPECT_EQ(back.hash(), ex.hash());
  EXPECT_TRUE(torch::equal(back.features(v), ex.features(v)));
  EXPECT_NE(untrained_extractor(6).hash(), ex.hash());
}

TEST(Extractor, TrainingIsDeterministicAndGated) {
  const auto ds = small_dataset(40, 0);
  data::PreprocessConfig pre{16, 4, 2};
  ClassifierConfig cfg;
  cfg.width = 4;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.min_accuracy = 0.0;
  auto a = train_feature_extractor(ds, pre, 4, cfg);
  auto b = train_feature_extractor(ds, pre, 4, cfg);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.info().resolution, 16);
  EXPECT_GE(a.info().heldout_accuracy, 0.0);
  cfg.min_accuracy = 1.01;
  EXPECT_THROW(train_feature_extractor(ds, pre, 4, cfg), ExtractorGateError);
}

TEST(Evaluation, StatsCacheRoundTrip) {
  auto gen = make_generator(7);
  auto s = compute_stats(torch::randn({10, 3}, gen, torch::kFloat64));
  const auto file = ts::scratch_dir("stats") / "ref.bin";
  save_stats(file, s, 42);
  auto back = load_stats(file, 42);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->mu, s.mu);
  EXPECT_EQ(back->sigma, s.sigma);
  EXPECT_EQ(back->n, s.n);
  EXPECT_FALSE(load_stats(file, 43));
  EXPECT_FALSE(load_stats(file.parent_path() / "none.bin", 42));
}

TEST(Evaluation, RealFloorBelowUntrainedGenerator) {
  auto ex = untrained_extractor(8);
  data::PreprocessConfig pre{16, 4, 2};
  const auto train = small_dataset(80, 0), held = small_dataset(80, 1);
  auto ref = reference_stats(train, pre, ex, std::nullopt);
  auto real = clip_sampler(preprocess_all(held, pre, 3).videos);
  auto noise = [](int64_t n, at::Generator& g) { return torch::rand({n, 4, 16, 16, 3}, g) * 2 - 1; };
  const auto floor = evaluate_model(real, ex, ref, 80, 0, 16, 4);
  const auto junk = evaluate_model(noise, ex, ref, 80, 0, 16, 4);
  EXPECT_LT(floor.fid, junk.fid);
  EXPECT_GE(floor.fid, 0.0);
}

TEST(Truncation, CsvIsReproducible) {
  auto ex = untrained_extractor(9);
  data::PreprocessConfig pre{16, 4, 2};
  auto ref = reference_stats(small_dataset(40, 0), pre, ex, std::nullopt);
  // a stand-in generator whose spread scales with the truncation stddev
  auto make = [](double s) -> VideoSampler {
    return [s](int64_t n, at::Generator& g) { return (torch::randn({n, 4, 16, 16, 3}, g) * s).clamp(-1, 1); };
  };
  const std::vector<double> sds{0.0, 0.5, 1.0};
  const auto dir = ts::scratch_dir("truncation");
  for (const char* name : {"a.csv", "b.csv"}) {
    auto points = truncation_sweep(make, ex, ref, sds, 24, 5, 8, 2);
    ASSERT_EQ(points.size(), 3u);
    write_truncation_csv(dir / name, points, "extractor " + hex64(ex.hash()));
  }
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const auto text = slurp(dir / "a.csv");
  EXPECT_EQ(text.rfind("# extractor ", 0), 0u);

  std::vector<TruncationPoint> pts(3);
  pts[0].result.is_mean = 1.5;
  pts[1].result.is_mean = 2.5;
  pts[2].result.is_mean = 2.5;
  EXPECT_EQ(best_is_index(pts), 1u);
  auto plot = truncation_plot(pts);
  EXPECT_EQ(plot.dim(), 3);
}
