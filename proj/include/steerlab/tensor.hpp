#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "steerlab/rng.hpp"

namespace steerlab {

namespace detail {

struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same size as data once present
  bool requires_grad = false;
  bool is_leaf = true;  // false for op outputs; their grads are transient per backward pass
};

}  // namespace detail

// Matrix-valued float64 tensor. A Tensor is a cheap handle; copies share
// storage. Scalars are 1x1, vectors 1xn or nx1.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor full(int rows, int cols, double value, bool requires_grad = false);
  static Tensor from_data(int rows, int cols, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);
  // Gaussian init, the standard parameter constructor. requires_grad is on.
  static Tensor randn(int rows, int cols, Rng& rng, double stddev);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  int size() const { return node_->rows * node_->cols; }
  std::vector<int> shape() const { return {rows(), cols()}; }
  std::string shape_str() const;

  double at(int r, int c) const;
  void set(int r, int c, double v);
  double item() const;  // value of a 1x1 tensor

  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg);

  // Empty until backward() has reached this tensor.
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad();
  void zero_grad();

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }
  // Detached deep copy sharing no storage; used for untied-parameter init.
  Tensor clone() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode tape. Ops append themselves in execution order, so the tape is
// topologically sorted by construction; backward() replays it in reverse.
// One tape per thread.
class Tape {
 public:
  static Tape& active();

  void record(std::shared_ptr<detail::TensorNode> out, std::function<void()> backward_fn);
  void clear();
  size_t size() const { return steps_.size(); }

  void run_backward(const Tensor& loss);

 private:
  struct Step {
    std::shared_ptr<detail::TensorNode> out;
    std::function<void()> fn;
  };
  std::vector<Step> steps_;
};

bool grad_enabled();

// Disables tape recording in scope; used for inference and evaluation.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Populates grads of every requires_grad tensor reachable from loss.
// Repeated calls without zero_grad accumulate into leaf grads.
void backward(const Tensor& loss);

// ---- ops ----
// All ops record a backward rule on the active tape when recording is enabled
// and any input requires grad. Reductions run in fixed left-to-right order so
// forward passes are bit-deterministic.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// bias is rows x 1, added to every column of a.
Tensor add_bias_cols(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
// axis 0: each column sums to 1; axis 1: each row sums to 1. Stabilized by
// max subtraction.
Tensor softmax(const Tensor& a, int axis);
// Per-column normalization over rows; gain and bias are rows x 1.
Tensor layer_norm_cols(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
// table is d x V; returns d x n with column j = table column ids[j].
Tensor embedding_cols(const Tensor& table, const std::vector<int>& ids);
Tensor gather_cols(const Tensor& a, const std::vector<int>& idx);
Tensor slice_rows(const Tensor& a, int r0, int r1);  // rows [r0, r1)
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor sum_all(const Tensor& a);  // 1x1
// logits is C x n; targets[j] in [0, C). Returns the summed negative
// log-likelihood over columns as a 1x1 tensor.
Tensor cross_entropy_cols(const Tensor& logits, const std::vector<int>& targets);
// scores is 1 x m or m x 1; labels are 0/1. Summed binary cross entropy.
Tensor bce_with_logits(const Tensor& scores, const std::vector<int>& labels);

}  // namespace steerlab
