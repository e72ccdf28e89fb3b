#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "maskgate/rng.hpp"
#include "maskgate/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
  double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

inline maskgate::Tensor random_tensor(const std::vector<int>& shape, std::uint64_t seed,
                                      double scale = 1.0) {
  maskgate::Rng rng(seed, "test");
  maskgate::Tensor t(shape);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Central finite differences against the recorded backward pass. The callback
/// rebuilds the scalar loss from the given leaves on a fresh graph each time.
using LossFn = std::function<maskgate::Tensor(maskgate::Graph&, std::vector<maskgate::Tensor>&)>;

inline double max_grad_rel_err(const LossFn& fn, std::vector<maskgate::Tensor> leaves,
                               double h = 1e-5) {
  using maskgate::Graph;
  using maskgate::Tensor;
  Graph g;
  Tensor loss = fn(g, leaves);
  for (Tensor& t : leaves) t.zero_grad();
  g.backward(loss);

  double worst = 0.0;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    std::vector<double>& vals = leaves[t].values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      Graph gp;
      const double up = fn(gp, leaves).item();
      vals[i] = keep - h;
      Graph gm;
      const double down = fn(gm, leaves).item();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(leaves[t].grad()[i], numeric));
    }
  }
  return worst;
}

/// Direct six-loop cross-correlation over a zero-padded input.
inline maskgate::Tensor conv2d_reference(const maskgate::Tensor& x,
                                         const maskgate::Tensor& k, int stride,
                                         int padding) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = (h + 2 * padding - kh) / stride + 1;
  const int ow = (w + 2 * padding - kw) / stride + 1;
  maskgate::Tensor out({n, cout, oh, ow});
  for (int ni = 0; ni < n; ++ni)
    for (int co = 0; co < cout; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride + ky - padding;
                const int ix = ox * stride + kx - padding;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x.values()[((ni * cin + ci) * h + iy) * w + ix] *
                       k.values()[((co * cin + ci) * kh + ky) * kw + kx];
              }
          out.values()[((ni * cout + co) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

inline double max_abs_diff(const maskgate::Tensor& a, const maskgate::Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::fabs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (int attempt = 0; attempt < 64; ++attempt) {
      auto candidate = base / ("maskgate-test-" + std::to_string(rd()));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    std::abort();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Plain logistic regression on a feature subset, trained full-batch; serves
/// as the separability oracle for the synthetic task.
inline double logistic_accuracy(const std::vector<std::vector<double>>& features,
                                const std::vector<int>& labels, int steps = 400,
                                double lr = 0.5) {
  const std::size_t n = features.size();
  const std::size_t d = features.front().size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int s = 0; s < steps; ++s) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double t = b;
      for (std::size_t j = 0; j < d; ++j) t += w[j] * features[i][j];
      const double p = 1.0 / (1.0 + std::exp(-t));
      const double err = p - static_cast<double>(labels[i]);
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * features[i][j];
      gb += err;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j] / static_cast<double>(n);
    b -= lr * gb / static_cast<double>(n);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = b;
    for (std::size_t j = 0; j < d; ++j) t += w[j] * features[i][j];
    if ((t > 0.0 ? 1 : 0) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

inline std::string read_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) return "";
  std::string out;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) out.append(buf, got);
  std::fclose(f);
  return out;
}

}  // namespace testutil
