#include "dvdgan/ablation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

using namespace dvdgan;
using namespace dvdgan::ablation;
namespace ts = testing_support;

namespace {

AblationSpec two_by_three() {
  AblationSpec s;
  s.axis = "k";
  s.values = {"1", "4"};
  s.seeds = {0, 1, 2};
  s.steps = 4;
  s.eval_every = 2;
  return s;
}

ExperimentConfig base() { return preset("smoke"); }

// Deterministic curve derived from (k, seed); also writes metrics.csv as a
// real run would, so the bundle can be re-read.
std::vector<CurvePoint> fake_curve(const ExperimentConfig& c) {
  std::vector<CurvePoint> curve;
  MetricsLog log(std::filesystem::path(c.out_dir) / "metrics.csv");
  for (int64_t step = 1; step <= c.train.total_steps; ++step) {
    std::optional<double> fid, is;
    if (step % c.eval.every == 0) {
      fid = 100.0 / static_cast<double>(c.discriminator.k) + static_cast<double>(c.seed) + step;
      is = static_cast<double>(c.discriminator.k) + 0.5 * static_cast<double>(c.seed);
      curve.push_back({step, *fid, *is});
    }
    log.write(step, StepStats{}, fid, is, 0.0);
  }
  return curve;
}

std::string slurp(const std::filesystem::path& f) {
  std::ifstream in(f);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Ablation, RunsEveryValueSeedPair) {
  const auto dir = ts::scratch_dir("ablation_grid");
  std::mutex mu;
  std::set<std::string> seen;
  auto run = [&](const ExperimentConfig& c) {
    {
      std::lock_guard<std::mutex> lock(mu);
      seen.insert(std::to_string(c.discriminator.k) + "/" + std::to_string(c.seed));
    }
    EXPECT_EQ(c.train.total_steps, 4);
    EXPECT_EQ(c.eval.every, 2);
    return fake_curve(c);
  };
  auto report = run_ablation(two_by_three(), base(), dir, run);
  EXPECT_EQ(report.runs.size(), 6u);
  EXPECT_EQ(seen.size(), 6u);
  ASSERT_EQ(report.groups.size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "k=4" / "seed2" / "metrics.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "final.csv"));

  // mean and n - 1 standard deviation over seeds 0, 1, 2
  const auto& g = report.groups.at("4");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].step, 2);
  EXPECT_EQ(g[0].n, 3);
  EXPECT_DOUBLE_EQ(g[0].fid_mean, 25.0 + 1.0 + 2.0);
  EXPECT_DOUBLE_EQ(g[0].fid_std, 1.0);
  EXPECT_DOUBLE_EQ(g[0].is_mean, 4.5);
  EXPECT_DOUBLE_EQ(g[0].is_std, 0.5);
}

TEST(Ablation, DivergedRunIsCountedNotAggregated) {
  const auto dir = ts::scratch_dir("ablation_fail");
  auto run = [&](const ExperimentConfig& c) {
    if (c.discriminator.k == 1 && c.seed == 1) throw DivergenceError("non-finite loss");
    return fake_curve(c);
  };
  auto report = run_ablation(two_by_three(), base(), dir, run);
  int failed = 0;
  for (const auto& r : report.runs) failed += r.failed ? 1 : 0;
  EXPECT_EQ(failed, 1);
  EXPECT_EQ(report.groups.at("1")[0].n, 2);
  EXPECT_EQ(report.groups.at("4")[0].n, 3);
  EXPECT_NE(slurp(dir / "final.csv").find("# failed k=1 seed 1"), std::string::npos);
}

TEST(Ablation, BundleRereadAndDeterminism) {
  const auto a = ts::scratch_dir("ablation_a"), b = ts::scratch_dir("ablation_b");
  auto spec = two_by_three();
  auto ra = run_ablation(spec, base(), a, fake_curve);
  spec.parallelism = 3;
  auto rb = run_ablation(spec, base(), b, fake_curve);
  EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
  EXPECT_EQ(slurp(a / "final.csv"), slurp(b / "final.csv"));

  auto reread = read_bundle(spec, a);
  for (const auto& v : spec.values) {
    ASSERT_EQ(reread.groups.at(v).size(), ra.groups.at(v).size());
    for (size_t i = 0; i < ra.groups.at(v).size(); ++i) {
      EXPECT_DOUBLE_EQ(reread.groups.at(v)[i].fid_mean, ra.groups.at(v)[i].fid_mean);
      EXPECT_DOUBLE_EQ(reread.groups.at(v)[i].is_std, ra.groups.at(v)[i].is_std);
    }
  }
}

TEST(Ablation, TrendFraction) {
  AblationReport r;
  r.groups["a"] = {{1, 3, 10, 0, 2.0, 0}, {2, 3, 8, 0, 2.0, 0}, {3, 3, 5, 0, 1.0, 0}};
  r.groups["b"] = {{1, 3, 12, 0, 1.5, 0}, {2, 3, 7, 0, 2.0, 0}, {3, 3, 6, 0, 1.5, 0}, {4, 3, 1, 0, 9, 0}};
  auto [is_frac, fid_frac] = trend_fraction(r, "a", "b");
  EXPECT_DOUBLE_EQ(is_frac, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(fid_frac, 2.0 / 3.0);
}

TEST(Ablation, SpecAndAxisValidation) {
  auto s = two_by_three();
  EXPECT_NO_THROW(s.validate());
  s.values = {"1"};
  EXPECT_THROW(s.validate(), ConfigError);
  s = two_by_three();
  s.seeds = {0};
  EXPECT_THROW(s.validate(), ConfigError);
  s = two_by_three();
  s.axis = "lr";
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(apply_axis(base(), "phi", "identity").discriminator.phi, Phi::kIdentity);
  EXPECT_EQ(apply_axis(base(), "k", "3").discriminator.k, 3);
  EXPECT_THROW(apply_axis(base(), "k", "three"), ConfigError);
  EXPECT_THROW(apply_axis(base(), "phi", "maxpool"), ConfigError);
}
