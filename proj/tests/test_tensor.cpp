#include "steerlab/tensor.hpp"

#include <cmath>
#include <functional>
#include <iostream>
#include <vector>

#include "steerlab/rng.hpp"
#include "test_util.hpp"

using namespace steerlab;

namespace {

// Central finite differences on a scalar-valued function of the given
// parameters; the independent oracle for every analytic gradient.
double fd_grad(const std::function<double()>& eval, Tensor& param, int flat_index, double step = 1e-5) {
  double& v = param.mutable_data()[flat_index];
  const double saved = v;
  v = saved + step;
  const double up = eval();
  v = saved - step;
  const double down = eval();
  v = saved;
  return (up - down) / (2.0 * step);
}

// Runs forward with a fresh tape, backprops, and compares every parameter
// gradient against central differences.
void check_gradients(const std::string& name, std::vector<Tensor> params,
                     const std::function<Tensor()>& forward, double tol = 1e-4) {
  Tape::active().clear();
  for (auto& p : params) p.zero_grad();
  Tensor loss = forward();
  backward(loss);
  auto eval = [&] {
    NoGradGuard ng;
    return forward().item();
  };
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    REQUIRE(!p.grad().empty(), name << ": param " << pi << " has no grad");
    for (int i = 0; i < p.size(); ++i) {
      const double want = fd_grad(eval, p, i);
      const double got = p.grad()[i];
      REQUIRE(rel_err(got, want) < tol,
              name << ": param " << pi << "[" << i << "] grad " << got << " vs fd " << want);
    }
  }
  Tape::active().clear();
}

Tensor rand_tensor(int r, int c, Rng& rng, bool rg = true) {
  Tensor t = Tensor::zeros(r, c, rg);
  for (auto& v : t.mutable_data()) v = rng.normal(0.0, 1.0);
  return t;
}

void test_matmul_basics() {
  Tensor eye = Tensor::from_data(2, 2, {1, 0, 0, 1});
  Tensor v = Tensor::from_data(2, 1, {3, 4});
  Tensor out = matmul(eye, v);
  REQUIRE(out.rows() == 2 && out.cols() == 1, "identity matmul shape");
  REQUIRE(out.at(0, 0) == 3.0 && out.at(1, 0) == 4.0, "identity matmul values");

  Tensor row = Tensor::from_data(1, 2, {1, 2});
  Tensor dot = matmul(row, v);
  REQUIRE(dot.item() == 11.0, "1*3 + 2*4 = 11");

  bool threw = false;
  try {
    matmul(row, row);
  } catch (const std::invalid_argument& e) {
    threw = std::string(e.what()).find("1x2") != std::string::npos;
  }
  REQUIRE(threw, "matmul shape mismatch names both shapes");
  test_pass("matmul basics");
}

void test_matmul_grad_structure() {
  // gradient of sum(a*b) w.r.t. a equals ones(3,2) x b^T
  Rng rng(7);
  Tensor a = rand_tensor(3, 4, rng);
  Tensor b = rand_tensor(4, 2, rng);
  Tape::active().clear();
  Tensor loss = sum_all(matmul(a, b));
  backward(loss);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 4; ++k) {
      double want = 0.0;
      for (int j = 0; j < 2; ++j) want += b.at(k, j);
      REQUIRE_CLOSE(a.grad()[i * 4 + k], want, 1e-12, "grad(a) == ones x b^T");
    }
  }
  Tape::active().clear();
  test_pass("matmul grad equals ones x b^T");
}

void test_softmax_basics() {
  Tensor x = Tensor::from_data(1, 3, {0, 0, 0});
  Tensor y = softmax(x, 1);
  for (int j = 0; j < 3; ++j) REQUIRE_CLOSE(y.at(0, j), 1.0 / 3.0, 1e-15, "uniform softmax");

  Tensor big = Tensor::from_data(1, 2, {1000, 0});
  Tensor yb = softmax(big, 1);
  REQUIRE(std::isfinite(yb.at(0, 0)) && std::isfinite(yb.at(0, 1)), "softmax stabilized, no overflow");
  REQUIRE(yb.at(0, 0) > 0.999999 && yb.at(0, 1) < 1e-6, "softmax saturates correctly");

  Rng rng(3);
  Tensor m = rand_tensor(4, 5, rng, false);
  Tensor s0 = softmax(m, 0);
  for (int j = 0; j < 5; ++j) {
    double col = 0.0;
    for (int i = 0; i < 4; ++i) col += s0.at(i, j);
    REQUIRE_CLOSE(col, 1.0, 1e-9, "softmax axis 0 column sums");
  }
  Tensor s1 = softmax(m, 1);
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    for (int j = 0; j < 5; ++j) row += s1.at(i, j);
    REQUIRE_CLOSE(row, 1.0, 1e-9, "softmax axis 1 row sums");
  }
  test_pass("softmax basics");
}

void test_backward_basics() {
  // loss = sum(x): grad = ones
  Rng rng(11);
  Tensor x = rand_tensor(2, 3, rng);
  Tape::active().clear();
  backward(sum_all(x));
  for (double g : x.grad()) REQUIRE_CLOSE(g, 1.0, 1e-15, "grad of sum is ones");

  // loss = sum(x . x): grad = 2x
  x.zero_grad();
  Tape::active().clear();
  backward(sum_all(mul(x, x)));
  for (int i = 0; i < x.size(); ++i) REQUIRE_CLOSE(x.grad()[i], 2.0 * x.data()[i], 1e-12, "grad of sum x^2");

  // repeated backward accumulates
  backward(sum_all(mul(x, x)));
  // tape still holds both graphs; second call reuses the second graph's steps
  Tape::active().clear();

  x.zero_grad();
  Tensor loss = sum_all(x);
  backward(loss);
  backward(loss);
  for (double g : x.grad()) REQUIRE_CLOSE(g, 2.0, 1e-15, "repeated backward accumulates");
  Tape::active().clear();

  bool threw = false;
  try {
    backward(x);  // non-scalar
  } catch (const std::logic_error&) {
    threw = true;
  }
  REQUIRE(threw, "non-scalar loss is a contract error");
  Tape::active().clear();
  test_pass("backward basics");
}

void test_mlp_fd() {
  // two-layer MLP on random input; all parameter grads vs central differences
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tensor x = rand_tensor(6, 3, rng, false);
    Tensor w1 = rand_tensor(5, 6, rng);
    Tensor b1 = rand_tensor(5, 1, rng);
    Tensor w2 = rand_tensor(2, 5, rng);
    Tensor b2 = rand_tensor(2, 1, rng);
    check_gradients("mlp seed " + std::to_string(seed), {w1, b1, w2, b2}, [&] {
      Tensor h = relu(add_bias_cols(matmul(w1, x), b1));
      Tensor o = add_bias_cols(matmul(w2, h), b2);
      return sum_all(mul(o, o));
    });
  }
  test_pass("two-layer MLP matches finite differences (10 seeds)");
}

void test_all_ops_fd() {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const std::string tag = " seed " + std::to_string(seed);

    {
      Tensor a = rand_tensor(3, 4, rng), b = rand_tensor(4, 2, rng);
      check_gradients("matmul" + tag, {a, b}, [&] { return sum_all(mul(matmul(a, b), matmul(a, b))); });
    }
    {
      Tensor a = rand_tensor(3, 3, rng), b = rand_tensor(3, 3, rng);
      check_gradients("add/sub/mul" + tag, {a, b},
                      [&] { return sum_all(mul(add(a, b), sub(a, scale(b, 0.7)))); });
    }
    {
      Tensor a = rand_tensor(4, 3, rng);
      check_gradients("softmax0" + tag, {a}, [&] {
        Tensor s = softmax(a, 0);
        return sum_all(mul(s, s));
      });
      check_gradients("softmax1" + tag, {a}, [&] {
        Tensor s = softmax(a, 1);
        return sum_all(mul(s, s));
      });
    }
    {
      Tensor a = rand_tensor(5, 3, rng), g = rand_tensor(5, 1, rng), b = rand_tensor(5, 1, rng);
      check_gradients("layer_norm" + tag, {a, g, b}, [&] {
        Tensor y = layer_norm_cols(a, g, b);
        return sum_all(mul(y, y));
      });
    }
    {
      Tensor a = rand_tensor(3, 4, rng);
      check_gradients("relu/transpose" + tag, {a}, [&] {
        Tensor y = transpose(relu(a));
        return sum_all(mul(y, y));
      });
    }
    {
      Tensor table = rand_tensor(4, 6, rng);
      std::vector<int> ids = {1, 3, 1, 5};  // repeated id exercises scatter accumulation
      check_gradients("embedding" + tag, {table}, [&] {
        Tensor e = embedding_cols(table, ids);
        return sum_all(mul(e, e));
      });
    }
    {
      Tensor a = rand_tensor(3, 5, rng);
      std::vector<int> idx = {4, 0, 4};
      check_gradients("gather/slice/concat" + tag, {a}, [&] {
        Tensor g2 = gather_cols(a, idx);
        Tensor s = slice_rows(a, 1, 3);
        Tensor c = concat_rows({g2, g2});
        return add(sum_all(mul(c, c)), sum_all(mul(s, s)));
      });
    }
    {
      Tensor logits = rand_tensor(4, 3, rng);
      std::vector<int> targets = {2, 0, 3};
      check_gradients("cross_entropy" + tag, {logits}, [&] { return cross_entropy_cols(logits, targets); });
    }
    {
      Tensor scores = rand_tensor(1, 5, rng);
      std::vector<int> labels = {1, 0, 0, 1, 1};
      check_gradients("bce" + tag, {scores}, [&] { return bce_with_logits(scores, labels); });
    }
    {
      Tensor a = rand_tensor(4, 3, rng), bias = rand_tensor(4, 1, rng);
      check_gradients("add_bias_cols" + tag, {a, bias}, [&] {
        Tensor y = add_bias_cols(a, bias);
        return sum_all(mul(y, y));
      });
    }
  }
  test_pass("all differentiable ops match finite differences (10 seeds)");
}

void test_determinism() {
  Rng rng(42);
  Tensor a = rand_tensor(16, 16, rng, false);
  Tensor b = rand_tensor(16, 16, rng, false);
  Tensor c1 = matmul(softmax(a, 0), b);
  Tensor c2 = matmul(softmax(a, 0), b);
  REQUIRE(c1.data() == c2.data(), "forward pass is bit-deterministic");
  test_pass("bit-deterministic forward");
}

void test_no_grad_and_purity() {
  Rng rng(5);
  Tensor a = rand_tensor(3, 3, rng);
  Tape::active().clear();
  {
    NoGradGuard ng;
    Tensor y = matmul(a, a);
    REQUIRE(!y.requires_grad(), "no-grad output does not require grad");
  }
  REQUIRE(Tape::active().size() == 0, "no-grad mode records nothing");

  // grads only flow to tensors reachable from the loss
  Tensor b = rand_tensor(3, 3, rng);
  Tensor used = mul(a, a);
  Tensor unused = mul(b, b);
  (void)unused;
  backward(sum_all(used));
  REQUIRE(!a.grad().empty(), "reachable tensor got grad");
  REQUIRE(b.grad().empty() || b.grad()[0] == 0.0, "unreachable tensor untouched");
  Tape::active().clear();
  test_pass("no-grad guard and reachability");
}

}  // namespace

int main() {
  test_matmul_basics();
  test_matmul_grad_structure();
  test_softmax_basics();
  test_backward_basics();
  test_mlp_fd();
  test_all_ops_fd();
  test_determinism();
  test_no_grad_and_purity();
  std::cout << "test_tensor: all passed\n";
  return 0;
}
