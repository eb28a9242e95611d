#pragma once

#include "dvdgan/runner.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dvdgan::ablation {

struct AblationSpec {
  std::string axis = "k";           // "k" or "phi"
  std::vector<std::string> values;  // e.g. {"1", "8"} or phi names
  std::vector<uint64_t> seeds{0, 1, 2};
  int64_t steps = 5000;
  int64_t eval_every = 500;
  int64_t parallelism = 1;

  void validate() const;
};

/// Outcome of one (value, seed) run. Diverged runs carry their error and are
/// excluded from aggregation, but still counted.
struct RunRecord {
  std::string value;
  uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::vector<CurvePoint> curve;
};

/// Per-group, per-step aggregate over the runs that reported that step.
struct GroupPoint {
  int64_t step = 0;
  int64_t n = 0;
  double fid_mean = 0, fid_std = 0;
  double is_mean = 0, is_std = 0;
};

struct AblationReport {
  std::vector<RunRecord> runs;
  std::map<std::string, std::vector<GroupPoint>> groups;  // keyed by value
};

/// Applies one axis value to a base config.
ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value);

/// Trains one configured run (in its own out_dir) and returns its curve.
using RunFn = std::function<std::vector<CurvePoint>(const ExperimentConfig&)>;

/// Mean and sample standard deviation (n - 1; 0 for a single run) per step.
std::vector<GroupPoint> aggregate(const std::vector<const RunRecord*>& runs);

/// |values| x |seeds| runs under out_dir/<axis>=<value>/seed<s>/, then
/// summary.csv, final.csv and the fid.png / is.png error-bar plots.
AblationReport run_ablation(const AblationSpec& spec, const ExperimentConfig& base,
                            const std::filesystem::path& out_dir, const RunFn& run);

/// Re-aggregates a bundle from the per-run metrics.csv files it contains.
AblationReport read_bundle(const AblationSpec& spec, const std::filesystem::path& out_dir);

void write_report(const AblationReport& report, const AblationSpec& spec,
                  const std::filesystem::path& out_dir);

/// Fraction of common checkpoints at which group `a`'s mean IS is >= group
/// `b`'s (and, for FID, <=). Returns {is_fraction, fid_fraction}.
std::pair<double, double> trend_fraction(const AblationReport& report, const std::string& a,
                                         const std::string& b);

}  // namespace dvdgan::ablation
