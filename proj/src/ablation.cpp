#include "dvdgan/ablation.hpp"

#include "dvdgan/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace dvdgan::ablation {

void AblationSpec::validate() const {
  if (axis != "k" && axis != "phi") throw ConfigError("ablation axis must be 'k' or 'phi'");
  if (values.size() < 2) throw ConfigError("ablation needs at least 2 values");
  if (seeds.size() < 2) throw ConfigError("ablation needs at least 2 seeds for a std");
  if (steps < 1) throw ConfigError("ablation steps must be >= 1");
  if (eval_every < 1) throw ConfigError("ablation eval_every must be >= 1");
  if (parallelism < 1) throw ConfigError("ablation parallelism must be >= 1");
}

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis,
                            const std::string& value) {
  auto c = base;
  if (axis == "k") {
    try {
      c.discriminator.k = std::stoll(value);
    } catch (const std::exception&) {
      throw ConfigError("ablation value '" + value + "' is not an integer k");
    }
  } else if (axis == "phi") {
    c.discriminator.phi = parse_phi(value);
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
  return c;
}

namespace {

std::filesystem::path run_dir(const std::filesystem::path& out, const std::string& axis,
                              const std::string& value, uint64_t seed) {
  return out / (axis + "=" + value) / ("seed" + std::to_string(seed));
}

}  // namespace

std::vector<GroupPoint> aggregate(const std::vector<const RunRecord*>& runs) {
  std::map<int64_t, std::vector<const CurvePoint*>> by_step;
  for (const auto* r : runs) {
    if (r->failed) continue;
    for (const auto& p : r->curve) by_step[p.step].push_back(&p);
  }
  std::vector<GroupPoint> out;
  for (const auto& [step, pts] : by_step) {
    GroupPoint g;
    g.step = step;
    g.n = static_cast<int64_t>(pts.size());
    for (const auto* p : pts) {
      g.fid_mean += p->fid / static_cast<double>(g.n);
      g.is_mean += p->is / static_cast<double>(g.n);
    }
    if (g.n > 1) {
      for (const auto* p : pts) {
        g.fid_std += (p->fid - g.fid_mean) * (p->fid - g.fid_mean);
        g.is_std += (p->is - g.is_mean) * (p->is - g.is_mean);
      }
      g.fid_std = std::sqrt(g.fid_std / static_cast<double>(g.n - 1));
      g.is_std = std::sqrt(g.is_std / static_cast<double>(g.n - 1));
    }
    out.push_back(g);
  }
  return out;
}

namespace {

void build_groups(AblationReport& report, const AblationSpec& spec) {
  report.groups.clear();
  for (const auto& v : spec.values) {
    std::vector<const RunRecord*> members;
    for (const auto& r : report.runs) {
      if (r.value == v) members.push_back(&r);
    }
    report.groups[v] = aggregate(members);
  }
}

}  // namespace

AblationReport run_ablation(const AblationSpec& spec, const ExperimentConfig& base,
                            const std::filesystem::path& out_dir, const RunFn& run) {
  spec.validate();
  AblationReport report;
  for (const auto& v : spec.values) {
    for (auto s : spec.seeds) report.runs.push_back({v, s, false, {}, {}});
  }
  std::vector<ExperimentConfig> configs;
  for (const auto& r : report.runs) {
    auto c = apply_axis(base, spec.axis, r.value);
    c.seed = r.seed;
    c.train.total_steps = spec.steps;
    c.eval.every = spec.eval_every;
    c.name = base.name + "-" + spec.axis + "=" + r.value + "-seed" + std::to_string(r.seed);
    c.out_dir = run_dir(out_dir, spec.axis, r.value, r.seed).string();
    c.validate();
    configs.push_back(std::move(c));
  }

  std::mutex mu;
  size_t next = 0;
  auto worker = [&]() {
    while (true) {
      size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= configs.size()) return;
        i = next++;
      }
      try {
        report.runs[i].curve = run(configs[i]);
      } catch (const DivergenceError& e) {
        report.runs[i].failed = true;
        report.runs[i].error = e.what();
      }
    }
  };
  const auto threads = std::min<int64_t>(spec.parallelism, static_cast<int64_t>(configs.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int64_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  build_groups(report, spec);
  write_report(report, spec, out_dir);
  return report;
}

AblationReport read_bundle(const AblationSpec& spec, const std::filesystem::path& out_dir) {
  AblationReport report;
  for (const auto& v : spec.values) {
    for (auto s : spec.seeds) {
      RunRecord r{v, s, false, {}, {}};
      const auto file = run_dir(out_dir, spec.axis, v, s) / "metrics.csv";
      if (!std::filesystem::exists(file)) {
        r.failed = true;
        r.error = "missing " + file.string();
      } else {
        for (const auto& row : read_metrics(file)) {
          if (row.fid && row.is) r.curve.push_back({row.step, *row.fid, *row.is});
        }
      }
      report.runs.push_back(std::move(r));
    }
  }
  build_groups(report, spec);
  return report;
}

void write_report(const AblationReport& report, const AblationSpec& spec,
                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  char buf[256];
  {
    std::ofstream f(out_dir / "summary.csv", std::ios::trunc);
    f << "group,step,n,fid_mean,fid_std,is_mean,is_std\n";
    for (const auto& v : spec.values) {
      for (const auto& g : report.groups.at(v)) {
        std::snprintf(buf, sizeof(buf), "%s=%s,%lld,%lld,%.9g,%.9g,%.9g,%.9g\n",
                      spec.axis.c_str(), v.c_str(), static_cast<long long>(g.step),
                      static_cast<long long>(g.n), g.fid_mean, g.fid_std, g.is_mean, g.is_std);
        f << buf;
      }
    }
    if (!f) throw IoError("cannot write summary.csv");
  }
  {
    std::ofstream f(out_dir / "final.csv", std::ios::trunc);
    f << "group,runs,failed,step,fid_mean,fid_std,is_mean,is_std\n";
    for (const auto& v : spec.values) {
      int64_t runs = 0, failed = 0;
      for (const auto& r : report.runs) {
        if (r.value != v) continue;
        ++runs;
        failed += r.failed ? 1 : 0;
      }
      const auto& pts = report.groups.at(v);
      GroupPoint last;
      if (!pts.empty()) last = pts.back();
      std::snprintf(buf, sizeof(buf), "%s=%s,%lld,%lld,%lld,%.9g,%.9g,%.9g,%.9g\n",
                    spec.axis.c_str(), v.c_str(), static_cast<long long>(runs),
                    static_cast<long long>(failed), static_cast<long long>(last.step),
                    last.fid_mean, last.fid_std, last.is_mean, last.is_std);
      f << buf;
    }
    for (const auto& r : report.runs) {
      if (r.failed) f << "# failed " << spec.axis << "=" << r.value << " seed " << r.seed << ": "
                      << r.error << "\n";
    }
  }
  std::vector<image::Series> fid_series, is_series;
  size_t color = 0;
  for (const auto& v : spec.values) {
    image::Series f{spec.axis + "=" + v, {}, {}, {}, image::palette(color)};
    image::Series s{spec.axis + "=" + v, {}, {}, {}, image::palette(color)};
    ++color;
    for (const auto& g : report.groups.at(v)) {
      f.x.push_back(static_cast<double>(g.step));
      f.y.push_back(g.fid_mean);
      f.err.push_back(g.fid_std);
      s.x.push_back(static_cast<double>(g.step));
      s.y.push_back(g.is_mean);
      s.err.push_back(g.is_std);
    }
    fid_series.push_back(std::move(f));
    is_series.push_back(std::move(s));
  }
  image::write_png(out_dir / "fid.png", image::line_plot(fid_series));
  image::write_png(out_dir / "is.png", image::line_plot(is_series));
}

std::pair<double, double> trend_fraction(const AblationReport& report, const std::string& a,
                                         const std::string& b) {
  const auto& ga = report.groups.at(a);
  const auto& gb = report.groups.at(b);
  int64_t common = 0, is_ok = 0, fid_ok = 0;
  for (const auto& pa : ga) {
    for (const auto& pb : gb) {
      if (pa.step != pb.step) continue;
      ++common;
      is_ok += pa.is_mean >= pb.is_mean ? 1 : 0;
      fid_ok += pa.fid_mean <= pb.fid_mean ? 1 : 0;
    }
  }
  if (common == 0) return {0.0, 0.0};
  return {static_cast<double>(is_ok) / static_cast<double>(common),
          static_cast<double>(fid_ok) / static_cast<double>(common)};
}

}  // namespace dvdgan::ablation
