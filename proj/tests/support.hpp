#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. Nothing here calls into the library's numerics.

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace testing_support {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dvdgan_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues; `vectors` receives the eigenvectors as columns.
inline std::vector<double> jacobi_eigen(std::vector<std::vector<double>> a,
                                        std::vector<std::vector<double>>* vectors) {
  const size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (size_t p = 0; p < n; ++p) {
      for (size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> lambda(n);
  for (size_t i = 0; i < n; ++i) lambda[i] = a[i][i];
  if (vectors) *vectors = v;
  return lambda;
}

inline std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> r(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  return r;
}

/// f(M) = V f(Lambda) V^T via Jacobi.
inline Eigen::MatrixXd jacobi_apply(const Eigen::MatrixXd& m, const std::function<double(double)>& f) {
  std::vector<std::vector<double>> v;
  const auto lambda = jacobi_eigen(to_rows(m), &v);
  const auto n = m.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) out(i, j) += v[i][k] * f(lambda[k]) * v[j][k];
  return out;
}

/// Largest singular value, as sqrt of the top eigenvalue of W^T W (Jacobi).
inline double top_singular_value(const torch::Tensor& w) {
  const auto m = w.to(torch::kFloat64).reshape({w.size(0), -1}).contiguous();
  const auto g = torch::mm(m.t(), m).contiguous();
  const auto n = g.size(0);
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  auto acc = g.accessor<double, 2>();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) a[i][j] = acc[i][j];
  const auto lambda = jacobi_eigen(a, nullptr);
  return std::sqrt(std::max(0.0, *std::max_element(lambda.begin(), lambda.end())));
}

/// FID between Gaussians whose covariances are diagonal in one shared
/// orthonormal basis Q: S_a = Q diag(a) Q^T, S_b = Q diag(b) Q^T. Then
/// Tr((S_a^1/2 S_b S_a^1/2)^1/2) = sum sqrt(a_i b_i) exactly.
inline double fid_commuting(const Eigen::VectorXd& mu_a, const Eigen::VectorXd& a,
                            const Eigen::VectorXd& mu_b, const Eigen::VectorXd& b) {
  double d = (mu_a - mu_b).squaredNorm();
  for (Eigen::Index i = 0; i < a.size(); ++i) d += a[i] + b[i] - 2 * std::sqrt(a[i] * b[i]);
  return d;
}

/// FID closed form for 1-D Gaussians, which is exact for any pair.
inline double fid_1d(double mu_a, double var_a, double mu_b, double var_b) {
  return (mu_a - mu_b) * (mu_a - mu_b) + var_a + var_b - 2 * std::sqrt(var_a * var_b);
}

/// softmax(X Q (X K)^T) X V for one [N, C] matrix, by explicit loops.
inline std::vector<std::vector<double>> attention_loops(const std::vector<std::vector<double>>& x,
                                                        const std::vector<std::vector<double>>& q,
                                                        const std::vector<std::vector<double>>& k,
                                                        const std::vector<std::vector<double>>& v) {
  const size_t n = x.size(), c = q.size();
  auto project = [&](const std::vector<std::vector<double>>& w) {
    std::vector<std::vector<double>> out(n, std::vector<double>(c, 0.0));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < c; ++j)
        for (size_t l = 0; l < c; ++l) out[i][j] += x[i][l] * w[l][j];
    return out;
  };
  const auto xq = project(q), xk = project(k), xv = project(v);
  std::vector<std::vector<double>> out(n, std::vector<double>(c, 0.0));
  for (size_t i = 0; i < n; ++i) {
    std::vector<double> logits(n, 0.0);
    for (size_t j = 0; j < n; ++j)
      for (size_t l = 0; l < c; ++l) logits[j] += xq[i][l] * xk[j][l];
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (auto& e : logits) z += (e = std::exp(e - m));
    for (size_t j = 0; j < n; ++j)
      for (size_t l = 0; l < c; ++l) out[i][l] += logits[j] / z * xv[j][l];
  }
  return out;
}

/// Separable attention over T, H, W of X [B, H, W, T, C] (float64) using
/// attention_loops on every line, gathering elements by explicit indices.
inline torch::Tensor separable_attention_loops(const torch::Tensor& x_in,
                                               const std::array<torch::Tensor, 3>& q,
                                               const std::array<torch::Tensor, 3>& k,
                                               const std::array<torch::Tensor, 3>& v) {
  auto x = x_in.to(torch::kFloat64).contiguous().clone();
  const int64_t B = x.size(0), H = x.size(1), W = x.size(2), T = x.size(3), C = x.size(4);
  auto mat = [](const torch::Tensor& t) {
    auto a = t.to(torch::kFloat64).contiguous();
    std::vector<std::vector<double>> m(a.size(0), std::vector<double>(a.size(1)));
    auto acc = a.accessor<double, 2>();
    for (int64_t i = 0; i < a.size(0); ++i)
      for (int64_t j = 0; j < a.size(1); ++j) m[i][j] = acc[i][j];
    return m;
  };
  for (int axis = 0; axis < 3; ++axis) {  // 0: T, 1: H, 2: W
    const auto qm = mat(q[axis]), km = mat(k[axis]), vm = mat(v[axis]);
    auto src = x.clone();
    auto a = src.accessor<double, 5>();
    auto o = x.accessor<double, 5>();
    const int64_t len = axis == 0 ? T : axis == 1 ? H : W;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i0 = 0; i0 < H; ++i0)
        for (int64_t i1 = 0; i1 < W; ++i1)
          for (int64_t i2 = 0; i2 < T; ++i2) {
            // visit each line once, from its first element
            if ((axis == 0 && i2 != 0) || (axis == 1 && i0 != 0) || (axis == 2 && i1 != 0)) continue;
            auto at = [&](int64_t p, int64_t& h, int64_t& w, int64_t& t) {
              h = axis == 1 ? p : i0;
              w = axis == 2 ? p : i1;
              t = axis == 0 ? p : i2;
            };
            std::vector<std::vector<double>> line(len, std::vector<double>(C));
            for (int64_t p = 0; p < len; ++p) {
              int64_t h, w, t;
              at(p, h, w, t);
              for (int64_t c = 0; c < C; ++c) line[p][c] = a[b][h][w][t][c];
            }
            const auto res = attention_loops(line, qm, km, vm);
            for (int64_t p = 0; p < len; ++p) {
              int64_t h, w, t;
              at(p, h, w, t);
              for (int64_t c = 0; c < C; ++c) o[b][h][w][t][c] = res[p][c];
            }
          }
  }
  return x;
}

/// Relative error ||analytic - numeric|| / max(||numeric||, floor) of the
/// gradient of scalar f w.r.t. the entries of `x` listed in `coords` (all
/// when empty), by float64 central differences with step h.
inline double gradient_error(const std::function<torch::Tensor()>& f, torch::Tensor x,
                             double h = 1e-6, int64_t max_coords = 64, double floor = 1e-8) {
  TORCH_CHECK(x.scalar_type() == torch::kFloat64, "gradient check needs float64");
  if (x.grad().defined()) x.mutable_grad().zero_();
  const bool had = x.requires_grad();
  x.requires_grad_(true);
  auto y = f();
  auto analytic = torch::autograd::grad({y}, {x}, {}, false, false, true)[0];
  if (!analytic.defined()) analytic = torch::zeros_like(x);
  analytic = analytic.detach().reshape(-1);
  auto flat = x.detach().view(-1);
  const int64_t n = flat.numel();
  const int64_t count = std::min(n, max_coords);
  double num_sq = 0, diff_sq = 0;
  torch::NoGradGuard no_grad;
  for (int64_t c = 0; c < count; ++c) {
    const int64_t i = count == n ? c : (c * 7919) % n;
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double fp = f().item<double>();
    flat[i] = orig - h;
    const double fm = f().item<double>();
    flat[i] = orig;
    const double numeric = (fp - fm) / (2 * h);
    const double a = analytic[i].item<double>();
    num_sq += numeric * numeric;
    diff_sq += (a - numeric) * (a - numeric);
  }
  x.requires_grad_(had);
  return std::sqrt(diff_sq) / std::max(std::sqrt(num_sq), floor);
}

/// Fixed random projection turning any output into a scalar, so gradient
/// checks exercise every output element.
inline std::function<torch::Tensor(const torch::Tensor&)> random_readout(uint64_t seed) {
  return [seed](const torch::Tensor& out) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto w = torch::randn(out.sizes(), gen, torch::kFloat64);
    return (out * w).sum();
  };
}

}  // namespace testing_support
