#include "steerlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace steerlab {

namespace {

thread_local bool g_grad_enabled = true;

// c[m x n] += a[m x k] * b[k x n]
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void mm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c[m x n] += a[k x m]^T * b[k x n]
void mm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<size_t>(p) * m;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = ap[i];
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

std::vector<double>& ensure_grad(const std::shared_ptr<detail::TensorNode>& node) {
  if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
  return node->grad;
}

bool has_grad(const std::shared_ptr<detail::TensorNode>& node) {
  return !node->grad.empty();
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

NodePtr make_node(int rows, int cols) {
  auto n = std::make_shared<detail::TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->data.assign(static_cast<size_t>(rows) * cols, 0.0);
  return n;
}

// Marks out as an op result and records the backward rule if needed.
Tensor finish_op(NodePtr out, bool any_input_grad, std::function<void()> backward_fn) {
  out->is_leaf = false;
  if (g_grad_enabled && any_input_grad) {
    out->requires_grad = true;
    Tape::active().record(out, std::move(backward_fn));
  }
  return Tensor(std::move(out));
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

}  // namespace

// ---- Tensor ----

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  auto n = make_node(rows, cols);
  std::fill(n->data.begin(), n->data.end(), value);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(int rows, int cols, std::vector<double> data, bool requires_grad) {
  if (static_cast<size_t>(rows) * cols != data.size()) {
    throw std::invalid_argument("Tensor::from_data: " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " does not match data length " + std::to_string(data.size()));
  }
  auto n = std::make_shared<detail::TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return from_data(1, 1, {value}); }

Tensor Tensor::randn(int rows, int cols, Rng& rng, double stddev) {
  auto n = make_node(rows, cols);
  for (auto& v : n->data) v = rng.normal(0.0, stddev);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

std::string Tensor::shape_str() const {
  if (!defined()) return "(undefined)";
  return "(" + std::to_string(rows()) + "x" + std::to_string(cols()) + ")";
}

double Tensor::at(int r, int c) const { return node_->data[static_cast<size_t>(r) * cols() + c]; }

void Tensor::set(int r, int c, double v) { node_->data[static_cast<size_t>(r) * cols() + c] = v; }

double Tensor::item() const {
  if (size() != 1) throw std::logic_error("Tensor::item: tensor is " + shape_str() + ", not scalar");
  return node_->data[0];
}

void Tensor::set_requires_grad(bool rg) { node_->requires_grad = rg; }

std::vector<double>& Tensor::mutable_grad() { return ensure_grad(node_); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto n = std::make_shared<detail::TensorNode>();
  n->rows = rows();
  n->cols = cols();
  n->data = node_->data;
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

// ---- Tape ----

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::shared_ptr<detail::TensorNode> out, std::function<void()> backward_fn) {
  steps_.push_back({std::move(out), std::move(backward_fn)});
}

void Tape::clear() { steps_.clear(); }

void Tape::run_backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::logic_error("backward: loss must be scalar, got " + loss.shape_str());
  }
  if (!loss.requires_grad()) return;
  // Non-leaf grads are transient per pass; only leaves (parameters) accumulate
  // across repeated backward calls.
  for (auto& step : steps_) {
    if (!step.out->is_leaf && has_grad(step.out)) {
      std::fill(step.out->grad.begin(), step.out->grad.end(), 0.0);
    }
  }
  ensure_grad(loss.node())[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
    if (has_grad(it->out)) it->fn();
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) { Tape::active().run_backward(loss); }

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_node(m, n);
  mm_acc(a.data().data(), b.data().data(), out->data.data(), m, k, n);
  auto an = a.node(), bn = b.node(), on = out;
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, on, m, k, n] {
    const double* g = on->grad.data();
    if (an->requires_grad) mm_nt_acc(g, bn->data.data(), ensure_grad(an).data(), m, n, k);
    if (bn->requires_grad) mm_tn_acc(an->data.data(), g, ensure_grad(bn).data(), k, m, n);
  });
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  auto out = make_node(n, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->data[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
  auto an = a.node(), on = out;
  return finish_op(out, a.requires_grad(), [an, on, m, n] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) ag[static_cast<size_t>(i) * n + j] += on->grad[static_cast<size_t>(j) * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("add", a, b);
  auto out = make_node(a.rows(), a.cols());
  const size_t sz = out->data.size();
  for (size_t i = 0; i < sz; ++i) out->data[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node(), on = out;
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, on, sz] {
    if (an->requires_grad) {
      auto& ag = ensure_grad(an);
      for (size_t i = 0; i < sz; ++i) ag[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& bg = ensure_grad(bn);
      for (size_t i = 0; i < sz; ++i) bg[i] += on->grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
  auto out = make_node(a.rows(), a.cols());
  const size_t sz = out->data.size();
  for (size_t i = 0; i < sz; ++i) out->data[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node(), on = out;
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, on, sz] {
    if (an->requires_grad) {
      auto& ag = ensure_grad(an);
      for (size_t i = 0; i < sz; ++i) ag[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& bg = ensure_grad(bn);
      for (size_t i = 0; i < sz; ++i) bg[i] -= on->grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
  auto out = make_node(a.rows(), a.cols());
  const size_t sz = out->data.size();
  for (size_t i = 0; i < sz; ++i) out->data[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node(), on = out;
  return finish_op(out, a.requires_grad() || b.requires_grad(), [an, bn, on, sz] {
    if (an->requires_grad) {
      auto& ag = ensure_grad(an);
      for (size_t i = 0; i < sz; ++i) ag[i] += on->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& bg = ensure_grad(bn);
      for (size_t i = 0; i < sz; ++i) bg[i] += on->grad[i] * an->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_node(a.rows(), a.cols());
  const size_t sz = out->data.size();
  for (size_t i = 0; i < sz; ++i) out->data[i] = a.data()[i] * s;
  auto an = a.node(), on = out;
  return finish_op(out, a.requires_grad(), [an, on, s, sz] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    for (size_t i = 0; i < sz; ++i) ag[i] += on->grad[i] * s;
  });
}

Tensor add_bias_cols(const Tensor& a, const Tensor& bias) {
  if (bias.cols() != 1 || bias.rows() != a.rows()) shape_error("add_bias_cols", a, bias);
  const int m = a.rows(), n = a.cols();
  auto out = make_node(m, n);
  for (int i = 0; i < m; ++i) {
    const double bv = bias.data()[i];
    const size_t off = static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) out->data[off + j] = a.data()[off + j] + bv;
  }
  auto an = a.node(), bn = bias.node(), on = out;
  return finish_op(out, a.requires_grad() || bias.requires_grad(), [an, bn, on, m, n] {
    if (an->requires_grad) {
      auto& ag = ensure_grad(an);
      for (size_t i = 0; i < ag.size(); ++i) ag[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& bg = ensure_grad(bn);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const size_t off = static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += on->grad[off + j];
        bg[i] += acc;
      }
    }
  });
}

Tensor relu(const Tensor& a) {
  auto out = make_node(a.rows(), a.cols());
  const size_t sz = out->data.size();
  for (size_t i = 0; i < sz; ++i) out->data[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto an = a.node(), on = out;
  return finish_op(out, a.requires_grad(), [an, on, sz] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    for (size_t i = 0; i < sz; ++i)
      if (an->data[i] > 0.0) ag[i] += on->grad[i];
  });
}

Tensor softmax(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1, got " + std::to_string(axis));
  const int m = a.rows(), n = a.cols();
  auto out = make_node(m, n);
  auto slice_softmax = [](const double* in, double* o, int count, int stride) {
    double mx = in[0];
    for (int i = 1; i < count; ++i) mx = std::max(mx, in[static_cast<size_t>(i) * stride]);
    double sum = 0.0;
    for (int i = 0; i < count; ++i) {
      double e = std::exp(in[static_cast<size_t>(i) * stride] - mx);
      o[static_cast<size_t>(i) * stride] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < count; ++i) o[static_cast<size_t>(i) * stride] *= inv;
  };
  if (axis == 0) {
    for (int j = 0; j < n; ++j) slice_softmax(a.data().data() + j, out->data.data() + j, m, n);
  } else {
    for (int i = 0; i < m; ++i)
      slice_softmax(a.data().data() + static_cast<size_t>(i) * n, out->data.data() + static_cast<size_t>(i) * n, n, 1);
  }
  auto an = a.node(), on = out;
  return finish_op(out, a.requires_grad(), [an, on, m, n, axis] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    auto slice_bwd = [&](size_t base, int count, int stride) {
      double dot = 0.0;
      for (int i = 0; i < count; ++i) {
        const size_t ix = base + static_cast<size_t>(i) * stride;
        dot += on->grad[ix] * on->data[ix];
      }
      for (int i = 0; i < count; ++i) {
        const size_t ix = base + static_cast<size_t>(i) * stride;
        ag[ix] += on->data[ix] * (on->grad[ix] - dot);
      }
    };
    if (axis == 0) {
      for (int j = 0; j < n; ++j) slice_bwd(j, m, n);
    } else {
      for (int i = 0; i < m; ++i) slice_bwd(static_cast<size_t>(i) * n, n, 1);
    }
  });
}

Tensor layer_norm_cols(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (gain.rows() != a.rows() || gain.cols() != 1) shape_error("layer_norm_cols gain", a, gain);
  if (bias.rows() != a.rows() || bias.cols() != 1) shape_error("layer_norm_cols bias", a, bias);
  const int m = a.rows(), n = a.cols();
  auto out = make_node(m, n);
  // Normalized values and inverse stddevs are needed by backward.
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m) * n);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (int j = 0; j < n; ++j) {
    double mean = 0.0;
    for (int i = 0; i < m; ++i) mean += a.data()[static_cast<size_t>(i) * n + j];
    mean /= m;
    double var = 0.0;
    for (int i = 0; i < m; ++i) {
      double d = a.data()[static_cast<size_t>(i) * n + j] - mean;
      var += d * d;
    }
    var /= m;
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[j] = istd;
    for (int i = 0; i < m; ++i) {
      const size_t ix = static_cast<size_t>(i) * n + j;
      const double xh = (a.data()[ix] - mean) * istd;
      (*xhat)[ix] = xh;
      out->data[ix] = gain.data()[i] * xh + bias.data()[i];
    }
  }
  auto an = a.node(), gn = gain.node(), bn = bias.node(), on = out;
  bool needs = a.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return finish_op(out, needs, [an, gn, bn, on, xhat, inv_std, m, n] {
    if (gn->requires_grad) {
      auto& gg = ensure_grad(gn);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          const size_t ix = static_cast<size_t>(i) * n + j;
          acc += on->grad[ix] * (*xhat)[ix];
        }
        gg[i] += acc;
      }
    }
    if (bn->requires_grad) {
      auto& bg = ensure_grad(bn);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += on->grad[static_cast<size_t>(i) * n + j];
        bg[i] += acc;
      }
    }
    if (an->requires_grad) {
      auto& ag = ensure_grad(an);
      for (int j = 0; j < n; ++j) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int i = 0; i < m; ++i) {
          const size_t ix = static_cast<size_t>(i) * n + j;
          const double gy = on->grad[ix] * gn->data[i];
          sum_g += gy;
          sum_gx += gy * (*xhat)[ix];
        }
        const double mg = sum_g / m, mgx = sum_gx / m;
        for (int i = 0; i < m; ++i) {
          const size_t ix = static_cast<size_t>(i) * n + j;
          const double gy = on->grad[ix] * gn->data[i];
          ag[ix] += (gy - mg - (*xhat)[ix] * mgx) * (*inv_std)[j];
        }
      }
    }
  });
}

Tensor embedding_cols(const Tensor& table, const std::vector<int>& ids) {
  const int d = table.rows(), v = table.cols(), n = static_cast<int>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= v)
      throw std::out_of_range("embedding_cols: id " + std::to_string(id) + " outside table with " + std::to_string(v) + " columns");
  }
  auto out = make_node(d, n);
  for (int i = 0; i < d; ++i) {
    const size_t trow = static_cast<size_t>(i) * v;
    const size_t orow = static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) out->data[orow + j] = table.data()[trow + ids[j]];
  }
  auto tn = table.node(), on = out;
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return finish_op(out, table.requires_grad(), [tn, on, ids_copy, d, v, n] {
    if (!tn->requires_grad) return;
    auto& tg = ensure_grad(tn);
    for (int i = 0; i < d; ++i) {
      const size_t trow = static_cast<size_t>(i) * v;
      const size_t orow = static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) tg[trow + (*ids_copy)[j]] += on->grad[orow + j];
    }
  });
}

Tensor gather_cols(const Tensor& a, const std::vector<int>& idx) {
  const int m = a.rows(), n = a.cols(), k = static_cast<int>(idx.size());
  for (int j : idx) {
    if (j < 0 || j >= n)
      throw std::out_of_range("gather_cols: index " + std::to_string(j) + " outside " + a.shape_str());
  }
  auto out = make_node(m, k);
  for (int i = 0; i < m; ++i) {
    const size_t arow = static_cast<size_t>(i) * n;
    const size_t orow = static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) out->data[orow + j] = a.data()[arow + idx[j]];
  }
  auto an = a.node(), on = out;
  auto idx_copy = std::make_shared<std::vector<int>>(idx);
  return finish_op(out, a.requires_grad(), [an, on, idx_copy, m, n, k] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    for (int i = 0; i < m; ++i) {
      const size_t arow = static_cast<size_t>(i) * n;
      const size_t orow = static_cast<size_t>(i) * k;
      for (int j = 0; j < k; ++j) ag[arow + (*idx_copy)[j]] += on->grad[orow + j];
    }
  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1)
    throw std::out_of_range("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) + ") of " + a.shape_str());
  const int n = a.cols(), m = r1 - r0;
  auto out = make_node(m, n);
  std::copy(a.data().begin() + static_cast<size_t>(r0) * n, a.data().begin() + static_cast<size_t>(r1) * n,
            out->data.begin());
  auto an = a.node(), on = out;
  return finish_op(out, a.requires_grad(), [an, on, r0, m, n] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    const size_t base = static_cast<size_t>(r0) * n;
    for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) ag[base + i] += on->grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int n = parts[0].cols();
  int m = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.cols() != n) shape_error("concat_rows", parts[0], p);
    m += p.rows();
    needs = needs || p.requires_grad();
  }
  auto out = make_node(m, n);
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out->data.begin() + off);
    off += p.data().size();
  }
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  auto on = out;
  return finish_op(out, needs, [nodes, on] {
    size_t off = 0;
    for (const auto& pn : nodes) {
      if (pn->requires_grad) {
        auto& pg = ensure_grad(pn);
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += on->grad[off + i];
      }
      off += pn->data.size();
    }
  });
}

Tensor sum_all(const Tensor& a) {
  auto out = make_node(1, 1);
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out->data[0] = acc;
  auto an = a.node(), on = out;
  return finish_op(out, a.requires_grad(), [an, on] {
    if (!an->requires_grad) return;
    auto& ag = ensure_grad(an);
    const double g = on->grad[0];
    for (auto& v : ag) v += g;
  });
}

Tensor cross_entropy_cols(const Tensor& logits, const std::vector<int>& targets) {
  const int c = logits.rows(), n = logits.cols();
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy_cols: " + std::to_string(targets.size()) + " targets for " +
                                logits.shape_str());
  for (int t : targets) {
    if (t < 0 || t >= c) throw std::out_of_range("cross_entropy_cols: target " + std::to_string(t) + " outside " +
                                                 std::to_string(c) + " classes");
  }
  auto out = make_node(1, 1);
  // Per-column softmax probabilities are reused by backward.
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(c) * n);
  double loss = 0.0;
  for (int j = 0; j < n; ++j) {
    double mx = logits.data()[j];
    for (int i = 1; i < c; ++i) mx = std::max(mx, logits.data()[static_cast<size_t>(i) * n + j]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
      double e = std::exp(logits.data()[static_cast<size_t>(i) * n + j] - mx);
      (*probs)[static_cast<size_t>(i) * n + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < c; ++i) (*probs)[static_cast<size_t>(i) * n + j] *= inv;
    loss -= std::log((*probs)[static_cast<size_t>(targets[j]) * n + j]);
  }
  out->data[0] = loss;
  auto ln = logits.node(), on = out;
  auto tg = std::make_shared<std::vector<int>>(targets);
  return finish_op(out, logits.requires_grad(), [ln, on, probs, tg, c, n] {
    if (!ln->requires_grad) return;
    auto& lg = ensure_grad(ln);
    const double g = on->grad[0];
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < c; ++i) {
        const size_t ix = static_cast<size_t>(i) * n + j;
        double delta = (*probs)[ix] - (i == (*tg)[j] ? 1.0 : 0.0);
        lg[ix] += g * delta;
      }
    }
  });
}

Tensor bce_with_logits(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.rows() != 1 && scores.cols() != 1) shape_error("bce_with_logits", scores, scores);
  const int n = scores.size();
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("bce_with_logits: " + std::to_string(labels.size()) + " labels for " +
                                scores.shape_str());
  auto out = make_node(1, 1);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = scores.data()[i];
    const double y = labels[i] ? 1.0 : 0.0;
    // max(s,0) - y*s + log(1 + exp(-|s|)); stable for large |s|.
    loss += std::max(s, 0.0) - y * s + std::log1p(std::exp(-std::abs(s)));
  }
  out->data[0] = loss;
  auto sn = scores.node(), on = out;
  auto lb = std::make_shared<std::vector<int>>(labels);
  return finish_op(out, scores.requires_grad(), [sn, on, lb, n] {
    if (!sn->requires_grad) return;
    auto& sg = ensure_grad(sn);
    const double g = on->grad[0];
    for (int i = 0; i < n; ++i) {
      const double s = sn->data[i];
      const double sig = 1.0 / (1.0 + std::exp(-s));
      sg[i] += g * (sig - ((*lb)[i] ? 1.0 : 0.0));
    }
  });
}

}  // namespace steerlab
