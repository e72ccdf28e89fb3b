#include "maskgate/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <utility>

namespace maskgate {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) {
      throw DimensionError("tensor shape entries must be >= 1, got " + shape_str(shape));
    }
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape) {
  const std::size_t n = checked_size(shape);
  storage_ = std::make_shared<Storage>();
  storage_->shape = std::move(shape);
  storage_->values.assign(n, 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) {
  const std::size_t n = checked_size(shape);
  if (n != values.size()) {
    throw DimensionError("tensor value count " + std::to_string(values.size()) +
                         " does not match shape " + maskgate::shape_str(shape));
  }
  storage_ = std::make_shared<Storage>();
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

const std::vector<int>& Tensor::shape() const {
  if (!storage_) throw UsageError("operation on an undefined tensor");
  return storage_->shape;
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const { return shape().at(static_cast<std::size_t>(i)); }

std::size_t Tensor::size() const {
  if (!storage_) throw UsageError("operation on an undefined tensor");
  return storage_->values.size();
}

std::vector<double>& Tensor::values() const {
  if (!storage_) throw UsageError("operation on an undefined tensor");
  return storage_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() requires a single-element tensor, got shape " + shape_str());
  }
  return values()[0];
}

bool Tensor::has_grad() const { return storage_ && storage_->grad_present; }

std::vector<double>& Tensor::grad() const {
  if (!storage_) throw UsageError("operation on an undefined tensor");
  if (!storage_->grad_present) {
    storage_->grad.assign(storage_->values.size(), 0.0);
    storage_->grad_present = true;
  }
  return storage_->grad;
}

void Tensor::zero_grad() const {
  if (storage_ && storage_->grad_present) {
    std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
  }
}

Tensor Tensor::clone() const {
  Tensor t(shape(), values());
  return t;
}

std::string Tensor::shape_str() const { return maskgate::shape_str(shape()); }

void Graph::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + loss.shape_str());
  }
  loss.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Graph::clear() { nodes_.clear(); }

namespace detail {

void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double av = a[i * k + kk];
      const double* brow = b + kk * n;
      double* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = c[i * n + j];
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      c[i * n + j] = s;
    }
  }
}

void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

namespace {

void require_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                         ", got shape " + t.shape_str());
  }
}

std::size_t spatial_size(const Tensor& t) {
  std::size_t s = 1;
  for (int i = 2; i < t.rank(); ++i) s *= static_cast<std::size_t>(t.dim(i));
  return s;
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree: " + a.shape_str() + " vs " +
                         b.shape_str());
  }
  Tensor out({m, n});
  detail::mm_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  g.record([a, b, out, m, k, n]() {
    const double* go = out.grad().data();
    detail::mm_nt(go, b.values().data(), a.grad().data(), m, n, k);
    detail::mm_tn(a.values().data(), go, b.grad().data(), k, m, n);
  });
  return out;
}

Tensor transpose(Graph& g, const Tensor& a) {
  require_rank(a, 2, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  const auto& av = a.values();
  auto& ov = out.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
  g.record([a, out, m, n]() {
    const auto& go = out.grad();
    auto& ga = a.grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
  });
  return out;
}

Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernels, int stride,
              int padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernels, 4, "conv2d");
  if (stride < 1 || padding < 0) {
    throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
  }
  const int n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != cin) {
    throw DimensionError("conv2d: input channels disagree: " + input.shape_str() + " vs " +
                         kernels.shape_str());
  }
  const int oh_num = h + 2 * padding - kh;
  const int ow_num = w + 2 * padding - kw;
  if (oh_num < 0 || ow_num < 0 || oh_num % stride != 0 || ow_num % stride != 0) {
    throw ConfigError("conv2d: output size is not a positive integer for input " +
                      input.shape_str() + ", kernel " + kernels.shape_str() + ", stride " +
                      std::to_string(stride) + ", padding " + std::to_string(padding));
  }
  const int oh = oh_num / stride + 1;
  const int ow = ow_num / stride + 1;

  const int ckk = cin * kh * kw;
  const int ohw = oh * ow;
  auto cols = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(n) * ckk * ohw, 0.0);
  Tensor out({n, cout, oh, ow});

  const double* in = input.values().data();
  const double* ker = kernels.values().data();
  double* ov = out.values().data();
  for (int s = 0; s < n; ++s) {
    double* col = cols->data() + static_cast<std::size_t>(s) * ckk * ohw;
    const double* im = in + static_cast<std::size_t>(s) * cin * h * w;
    for (int ci = 0; ci < cin; ++ci) {
      for (int ki = 0; ki < kh; ++ki) {
        for (int kj = 0; kj < kw; ++kj) {
          double* crow = col + (static_cast<std::size_t>(ci) * kh * kw + ki * kw + kj) * ohw;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ki - padding;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kj - padding;
              if (ix < 0 || ix >= w) continue;
              crow[oy * ow + ox] = im[(static_cast<std::size_t>(ci) * h + iy) * w + ix];
            }
          }
        }
      }
    }
    detail::mm_nn(ker, col, ov + static_cast<std::size_t>(s) * cout * ohw, cout, ckk, ohw);
  }

  g.record([input, kernels, out, cols, n, cin, h, w, cout, kh, kw, stride, padding, oh,
            ow]() {
    const int ckk = cin * kh * kw;
    const int ohw = oh * ow;
    const double* go = out.grad().data();
    double* gi = input.grad().data();
    double* gk = kernels.grad().data();
    std::vector<double> dcol(static_cast<std::size_t>(ckk) * ohw);
    for (int s = 0; s < n; ++s) {
      const double* col = cols->data() + static_cast<std::size_t>(s) * ckk * ohw;
      const double* gout = go + static_cast<std::size_t>(s) * cout * ohw;
      detail::mm_nt(gout, col, gk, cout, ohw, ckk);
      std::fill(dcol.begin(), dcol.end(), 0.0);
      detail::mm_tn(kernels.values().data(), gout, dcol.data(), ckk, cout, ohw);
      double* gim = gi + static_cast<std::size_t>(s) * cin * h * w;
      for (int ci = 0; ci < cin; ++ci) {
        for (int ki = 0; ki < kh; ++ki) {
          for (int kj = 0; kj < kw; ++kj) {
            const double* drow =
                dcol.data() + (static_cast<std::size_t>(ci) * kh * kw + ki * kw + kj) * ohw;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride + ki - padding;
              if (iy < 0 || iy >= h) continue;
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride + kj - padding;
                if (ix < 0 || ix >= w) continue;
                gim[(static_cast<std::size_t>(ci) * h + iy) * w + ix] += drow[oy * ow + ox];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor relu(Graph& g, const Tensor& x) {
  Tensor out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  g.record([x, out]() {
    const auto& go = out.grad();
    const auto& xv = x.values();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < xv.size(); ++i)
      if (xv[i] > 0.0) gx[i] += go[i];
  });
  return out;
}

Tensor tanh(Graph& g, const Tensor& x) {
  Tensor out(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::tanh(xv[i]);
  g.record([x, out]() {
    const auto& go = out.grad();
    const auto& ov = out.values();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < ov.size(); ++i) gx[i] += go[i] * (1.0 - ov[i] * ov[i]);
  });
  return out;
}

Tensor maxpool2d(Graph& g, const Tensor& x, int k, int stride) {
  require_rank(x, 4, "maxpool2d");
  if (k < 1 || stride < 1) throw ConfigError("maxpool2d: window and stride must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k > h || k > w) {
    throw DimensionError("maxpool2d: window " + std::to_string(k) +
                         " exceeds spatial dims of " + x.shape_str());
  }
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& xv = x.values();
  auto& ov = out.values();
  std::size_t o = 0;
  for (int s = 0; s < n; ++s) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best_idx = base + static_cast<std::size_t>(oy * stride) * w + ox * stride;
          double best = xv[best_idx];
          for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
              const std::size_t idx =
                  base + static_cast<std::size_t>(oy * stride + ki) * w + (ox * stride + kj);
              if (xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
              }
            }
          }
          ov[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  g.record([x, out, argmax]() {
    const auto& go = out.grad();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < go.size(); ++i) gx[(*argmax)[i]] += go[i];
  });
  return out;
}

Tensor global_avg_pool(Graph& g, const Tensor& x) {
  require_rank(x, 4, "global_avg_pool");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  Tensor out({n, c});
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int s = 0; s < n; ++s) {
    for (int ci = 0; ci < c; ++ci) {
      const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * h * w;
      double acc = 0.0;
      for (int i = 0; i < h * w; ++i) acc += xv[base + i];
      ov[static_cast<std::size_t>(s) * c + ci] = acc * inv;
    }
  }
  g.record([x, out, n, c, h, w, inv]() {
    const auto& go = out.grad();
    auto& gx = x.grad();
    for (int s = 0; s < n; ++s) {
      for (int ci = 0; ci < c; ++ci) {
        const double gv = go[static_cast<std::size_t>(s) * c + ci] * inv;
        const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * h * w;
        for (int i = 0; i < h * w; ++i) gx[base + i] += gv;
      }
    }
  });
  return out;
}

Tensor concat(Graph& g, const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw UsageError("concat: needs at least one tensor");
  const int rank = xs[0].rank();
  if (axis < 0 || axis >= rank) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  std::vector<int> out_shape = xs[0].shape();
  int axis_total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != rank) {
      throw DimensionError("concat: rank mismatch: " + xs[0].shape_str() + " vs " +
                           t.shape_str());
    }
    for (int d = 0; d < rank; ++d) {
      if (d != axis && t.dim(d) != out_shape[d]) {
        throw DimensionError("concat: off-axis shapes disagree: " + xs[0].shape_str() +
                             " vs " + t.shape_str());
      }
    }
    axis_total += t.dim(axis);
  }
  out_shape[axis] = axis_total;

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(out_shape[d]);

  Tensor out(out_shape);
  auto& ov = out.values();
  const std::size_t out_slab = static_cast<std::size_t>(axis_total) * inner;
  std::vector<std::size_t> slabs, offsets;
  std::size_t offset = 0;
  for (const Tensor& t : xs) {
    const std::size_t slab = static_cast<std::size_t>(t.dim(axis)) * inner;
    slabs.push_back(slab);
    offsets.push_back(offset);
    const auto& tv = t.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(tv.begin() + static_cast<std::ptrdiff_t>(o * slab),
                tv.begin() + static_cast<std::ptrdiff_t>((o + 1) * slab),
                ov.begin() + static_cast<std::ptrdiff_t>(o * out_slab + offset));
    }
    offset += slab;
  }
  g.record([xs, out, outer, out_slab, slabs, offsets]() {
    const auto& go = out.grad();
    for (std::size_t t = 0; t < xs.size(); ++t) {
      auto& gx = xs[t].grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t src = o * out_slab + offsets[t];
        const std::size_t dst = o * slabs[t];
        for (std::size_t i = 0; i < slabs[t]; ++i) gx[dst + i] += go[src + i];
      }
    }
  });
  return out;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  g.record([a, b, out]() {
    const auto& go = out.grad();
    auto& ga = a.grad();
    auto& gb = b.grad();
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga[i] += go[i];
      gb[i] += go[i];
    }
  });
  return out;
}

namespace {

// Channel-broadcast product: out[n,c,...] = x[n,c,...] * v[c].
Tensor mul_channel_broadcast(Graph& g, const Tensor& x, const Tensor& v) {
  const int c = x.dim(1);
  if (v.dim(0) != c) {
    throw DimensionError("mul_elementwise: channel vector " + v.shape_str() +
                         " does not match dim 1 of " + x.shape_str());
  }
  const int n = x.dim(0);
  const std::size_t sp = spatial_size(x);
  Tensor out(x.shape());
  const auto& xv = x.values();
  const auto& vv = v.values();
  auto& ov = out.values();
  for (int s = 0; s < n; ++s) {
    for (int ci = 0; ci < c; ++ci) {
      const double m = vv[ci];
      const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * sp;
      for (std::size_t i = 0; i < sp; ++i) ov[base + i] = xv[base + i] * m;
    }
  }
  g.record([x, v, out, n, c, sp]() {
    const auto& go = out.grad();
    const auto& xv = x.values();
    const auto& vv = v.values();
    auto& gx = x.grad();
    auto& gv = v.grad();
    for (int s = 0; s < n; ++s) {
      for (int ci = 0; ci < c; ++ci) {
        const double m = vv[ci];
        const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * sp;
        double acc = 0.0;
        for (std::size_t i = 0; i < sp; ++i) {
          gx[base + i] += go[base + i] * m;
          acc += go[base + i] * xv[base + i];
        }
        gv[ci] += acc;
      }
    }
  });
  return out;
}

}  // namespace

Tensor mul_elementwise(Graph& g, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
    g.record([a, b, out]() {
      const auto& go = out.grad();
      const auto& av = a.values();
      const auto& bv = b.values();
      auto& ga = a.grad();
      auto& gb = b.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i] * bv[i];
        gb[i] += go[i] * av[i];
      }
    });
    return out;
  }
  if (a.rank() >= 2 && b.rank() == 1) return mul_channel_broadcast(g, a, b);
  if (b.rank() >= 2 && a.rank() == 1) return mul_channel_broadcast(g, b, a);
  throw DimensionError("mul_elementwise: shapes disagree: " + a.shape_str() + " vs " +
                       b.shape_str());
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& b) {
  if (x.rank() < 2 || b.rank() != 1 || b.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: bias " + b.shape_str() + " does not match dim 1 of " +
                         x.shape_str());
  }
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t sp = spatial_size(x);
  Tensor out(x.shape());
  const auto& xv = x.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (int s = 0; s < n; ++s) {
    for (int ci = 0; ci < c; ++ci) {
      const double bias = bv[ci];
      const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * sp;
      for (std::size_t i = 0; i < sp; ++i) ov[base + i] = xv[base + i] + bias;
    }
  }
  g.record([x, b, out, n, c, sp]() {
    const auto& go = out.grad();
    auto& gx = x.grad();
    auto& gb = b.grad();
    for (int s = 0; s < n; ++s) {
      for (int ci = 0; ci < c; ++ci) {
        const std::size_t base = (static_cast<std::size_t>(s) * c + ci) * sp;
        double acc = 0.0;
        for (std::size_t i = 0; i < sp; ++i) {
          gx[base + i] += go[base + i];
          acc += go[base + i];
        }
        gb[ci] += acc;
      }
    }
  });
  return out;
}

Tensor reshape(Graph& g, const Tensor& x, std::vector<int> shape) {
  Tensor out(std::move(shape), x.values());
  g.record([x, out]() {
    const auto& go = out.grad();
    auto& gx = x.grad();
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
  });
  return out;
}

Tensor select_channels(Graph& g, const Tensor& x, const std::vector<int>& keep) {
  if (x.rank() < 2) {
    throw DimensionError("select_channels: expected rank >= 2, got " + x.shape_str());
  }
  if (keep.empty()) throw UsageError("select_channels: empty keep list");
  const int n = x.dim(0), c = x.dim(1);
  for (int idx : keep) {
    if (idx < 0 || idx >= c) {
      throw DimensionError("select_channels: index " + std::to_string(idx) +
                           " out of range for " + x.shape_str());
    }
  }
  const std::size_t sp = spatial_size(x);
  std::vector<int> out_shape = x.shape();
  out_shape[1] = static_cast<int>(keep.size());
  Tensor out(out_shape);
  const auto& xv = x.values();
  auto& ov = out.values();
  for (int s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < keep.size(); ++j) {
      const std::size_t src = (static_cast<std::size_t>(s) * c + keep[j]) * sp;
      const std::size_t dst = (static_cast<std::size_t>(s) * keep.size() + j) * sp;
      std::copy(xv.begin() + static_cast<std::ptrdiff_t>(src),
                xv.begin() + static_cast<std::ptrdiff_t>(src + sp),
                ov.begin() + static_cast<std::ptrdiff_t>(dst));
    }
  }
  g.record([x, out, keep, n, c, sp]() {
    const auto& go = out.grad();
    auto& gx = x.grad();
    for (int s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < keep.size(); ++j) {
        const std::size_t src = (static_cast<std::size_t>(s) * c + keep[j]) * sp;
        const std::size_t dst = (static_cast<std::size_t>(s) * keep.size() + j) * sp;
        for (std::size_t i = 0; i < sp; ++i) gx[src + i] += go[dst + i];
      }
    }
  });
  return out;
}

Tensor sum(Graph& g, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  g.record([x, out]() {
    const double go = out.grad()[0];
    auto& gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go;
  });
  return out;
}

Tensor softmax_cross_entropy(Graph& g, const Tensor& logits,
                             const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw DataError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                    " labels for " + std::to_string(n) + " rows");
  }
  for (int lbl : labels) {
    if (lbl < 0 || lbl >= k) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(lbl) +
                      " out of range [0," + std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(logits.size());
  const auto& lv = logits.values();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = lv.data() + static_cast<std::size_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    const double log_denom = std::log(denom);
    double* prow = probs->data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) prow[j] = std::exp(row[j] - mx) / denom;
    loss += log_denom - (row[labels[static_cast<std::size_t>(i)]] - mx);
  }
  Tensor out = Tensor::scalar(loss / n);
  g.record([logits, out, probs, labels, n, k]() {
    const double go = out.grad()[0];
    auto& gl = logits.grad();
    const double scale = go / n;
    for (int i = 0; i < n; ++i) {
      const double* prow = probs->data() + static_cast<std::size_t>(i) * k;
      double* grow = gl.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) {
        const double onehot = (j == labels[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
        grow[j] += scale * (prow[j] - onehot);
      }
    }
  });
  return out;
}

}  // namespace maskgate
