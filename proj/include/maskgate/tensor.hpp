#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "maskgate/error.hpp"

namespace maskgate {

/// Dense N-dimensional array of 64-bit floats in row-major order, with an
/// optional gradient buffer of the same length. Copying a Tensor shares
/// storage (handle semantics); clone() makes a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return storage_ != nullptr; }
  const std::vector<int>& shape() const;
  int rank() const;
  int dim(int i) const;
  std::size_t size() const;

  std::vector<double>& values() const;
  /// Value of a single-element tensor.
  double item() const;

  bool has_grad() const;
  /// Gradient buffer, allocated to zeros on first access.
  std::vector<double>& grad() const;
  /// Zeroes the gradient buffer if present; keeps the allocation.
  void zero_grad() const;

  Tensor clone() const;
  std::string shape_str() const;

  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

 private:
  struct Storage {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool grad_present = false;
  };
  std::shared_ptr<Storage> storage_;
};

std::string shape_str(const std::vector<int>& shape);

/// Dynamic tape of recorded operations, rebuilt each forward pass. Nodes are
/// appended in execution order, which is a topological order; backward()
/// replays them once in reverse, accumulating gradients.
class Graph {
 public:
  void record(std::function<void()> backward_fn);
  /// Seeds loss.grad with 1 and propagates. Gradients accumulate across
  /// calls until zeroed. Throws UsageError if loss is not a scalar.
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// ---- Recorded operations -------------------------------------------------

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
Tensor transpose(Graph& g, const Tensor& a);
Tensor conv2d(Graph& g, const Tensor& input, const Tensor& kernels, int stride,
              int padding);
Tensor relu(Graph& g, const Tensor& x);
Tensor tanh(Graph& g, const Tensor& x);
Tensor maxpool2d(Graph& g, const Tensor& x, int k, int stride);
Tensor global_avg_pool(Graph& g, const Tensor& x);
Tensor concat(Graph& g, const std::vector<Tensor>& xs, int axis);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
/// Element-wise product. Also accepts one rank-1 operand of length C against
/// a rank>=2 operand whose dim 1 is C; the vector broadcasts across the
/// remaining axes (per-channel gating).
Tensor mul_elementwise(Graph& g, const Tensor& a, const Tensor& b);
/// x + b with b broadcast across dim 1 of x (bias for [N,K] or [N,C,H,W]).
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& b);
Tensor reshape(Graph& g, const Tensor& x, std::vector<int> shape);
/// Keeps the listed dim-1 slices (channels of [N,C,H,W] or columns of [N,C]).
Tensor select_channels(Graph& g, const Tensor& x, const std::vector<int>& keep);
Tensor sum(Graph& g, const Tensor& x);
Tensor softmax_cross_entropy(Graph& g, const Tensor& logits,
                             const std::vector<int>& labels);

namespace detail {
// Accumulating dense kernels: c += op(a, b). Inner accumulation runs in
// ascending-k order so results are bit-identical to a plain nested loop.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n);
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n);
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n);
}  // namespace detail

}  // namespace maskgate
