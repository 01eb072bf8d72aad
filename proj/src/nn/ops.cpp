#include <algorithm>
#include <cmath>
#include <string>

#include "routing/autodiff.hpp"
#include "routing/errors.hpp"
#include "routing/kernels.hpp"

namespace routing::nn {
namespace {

[[noreturn]] void shape_mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

void require_same_graph(std::string_view op, const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) throw std::logic_error(std::string(op) + ": operands live on different graphs");
}

void require_same_shape(std::string_view op, const Var& a, const Var& b) {
  require_same_graph(op, a, b);
  if (a.value().shape() != b.value().shape()) shape_mismatch(op, a.value(), b.value());
}

void require_rank1(std::string_view op, const Var& a) {
  if (a.value().rank() != 1)
    throw ShapeError(std::string(op) + ": expects a rank-1 tensor, got " + shape_string(a.value().shape()));
}

void accumulate(Graph& g, std::size_t id, std::span<const double> delta, double factor = 1.0) {
  if (Tensor* slot = g.grad_slot(id)) simd::kernels().axpy(factor, delta.data(), slot->data().data(), delta.size());
}

// Elementwise unary op whose derivative is expressible from input and output.
template <typename Fwd, typename Deriv>
Var unary(std::string_view op, const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out = a.value();
  for (double& v : out.values()) v = fwd(v);
  const std::size_t ia = a.id();
  return a.graph().record(op, std::move(out), {ia}, [ia, deriv](Graph& g, std::size_t self) {
    Tensor* slot = g.grad_slot(ia);
    if (!slot) return;
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad(self);
    for (std::size_t i = 0; i < x.size(); ++i) (*slot)[i] += gy[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_graph("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const auto& K = simd::kernels();
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.shape()[1] != B.shape()[0]) shape_mismatch("matmul", A, B);
  const std::size_t m = A.shape()[0];
  const std::size_t k = A.shape()[1];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();

  if (B.rank() == 1) {
    Tensor out({m});
    K.matvec(A.data().data(), B.data().data(), out.data().data(), m, k);
    return a.graph().record("matmul", std::move(out), {ia, ib}, [ia, ib, m, k](Graph& g, std::size_t self) {
      const auto& K = simd::kernels();
      const Tensor& gy = g.grad(self);
      if (Tensor* ga = g.grad_slot(ia)) {
        const Tensor& x = g.value(ib);
        for (std::size_t r = 0; r < m; ++r) K.axpy(gy[r], x.data().data(), ga->data().data() + r * k, k);
      }
      if (Tensor* gb = g.grad_slot(ib)) {
        std::vector<double> tmp(k);
        K.matvec_t(g.value(ia).data().data(), gy.data().data(), tmp.data(), m, k);
        K.add(gb->data().data(), tmp.data(), gb->data().data(), k);
      }
    });
  }

  const std::size_t n = B.shape()[1];
  Tensor out({m, n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < k; ++c) K.axpy(A.at(r, c), B.data().data() + c * n, out.data().data() + r * n, n);
  return a.graph().record("matmul", std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    const auto& K = simd::kernels();
    const Tensor& gy = g.grad(self);
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    if (Tensor* ga = g.grad_slot(ia)) {
      // dA = dC B^T
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < k; ++c)
          (*ga)[r * k + c] += K.dot(gy.data().data() + r * n, B.data().data() + c * n, n);
    }
    if (Tensor* gb = g.grad_slot(ib)) {
      // dB = A^T dC
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < k; ++c) K.axpy(A.at(r, c), gy.data().data() + r * n, gb->data().data() + c * n, n);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros_like(a.value());
  simd::kernels().add(a.value().data().data(), b.value().data().data(), out.data().data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("add", std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    accumulate(g, ia, g.grad(self).data());
    accumulate(g, ib, g.grad(self).data());
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  simd::kernels().axpy(-1.0, b.value().data().data(), out.data().data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("sub", std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    accumulate(g, ia, g.grad(self).data());
    accumulate(g, ib, g.grad(self).data(), -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros_like(a.value());
  simd::kernels().mul(a.value().data().data(), b.value().data().data(), out.data().data(), out.size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("mul", std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    std::vector<double> tmp(gy.size());
    if (Tensor* ga = g.grad_slot(ia)) {
      simd::kernels().mul(gy.data().data(), g.value(ib).data().data(), tmp.data(), tmp.size());
      simd::kernels().add(ga->data().data(), tmp.data(), ga->data().data(), tmp.size());
    }
    if (Tensor* gb = g.grad_slot(ib)) {
      simd::kernels().mul(gy.data().data(), g.value(ia).data().data(), tmp.data(), tmp.size());
      simd::kernels().add(gb->data().data(), tmp.data(), gb->data().data(), tmp.size());
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = Tensor::zeros_like(a.value());
  simd::kernels().scale(s, a.value().data().data(), out.data().data(), out.size());
  const std::size_t ia = a.id();
  return a.graph().record("scale", std::move(out), {ia},
                          [ia, s](Graph& g, std::size_t self) { accumulate(g, ia, g.grad(self).data(), s); });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v += s;
  const std::size_t ia = a.id();
  return a.graph().record("add_scalar", std::move(out), {ia},
                          [ia](Graph& g, std::size_t self) { accumulate(g, ia, g.grad(self).data()); });
}

Var scale_by(const Var& a, const Var& s) {
  require_same_graph("scale_by", a, s);
  if (s.value().size() != 1) shape_mismatch("scale_by", a.value(), s.value());
  const double factor = s.value()[0];
  Tensor out = Tensor::zeros_like(a.value());
  simd::kernels().scale(factor, a.value().data().data(), out.data().data(), out.size());
  const std::size_t ia = a.id(), is = s.id();
  return a.graph().record("scale_by", std::move(out), {ia, is}, [ia, is](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    accumulate(g, ia, gy.data(), g.value(is)[0]);
    if (Tensor* gs = g.grad_slot(is)) (*gs)[0] += simd::kernels().dot(gy.data().data(), g.value(ia).data().data(), gy.size());
  });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softmax(const Var& a) {
  require_rank1("softmax", a);
  const Tensor& x = a.value();
  Tensor out = x;
  const double peak = simd::kernels().max(x.data().data(), x.size());
  for (double& v : out.values()) v = std::exp(v - peak);
  const double total = simd::kernels().sum(out.data().data(), out.size());
  for (double& v : out.values()) v /= total;
  const std::size_t ia = a.id();
  return a.graph().record("softmax", std::move(out), {ia}, [ia](Graph& g, std::size_t self) {
    Tensor* slot = g.grad_slot(ia);
    if (!slot) return;
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad(self);
    const double inner = simd::kernels().dot(gy.data().data(), y.data().data(), y.size());
    for (std::size_t i = 0; i < y.size(); ++i) (*slot)[i] += y[i] * (gy[i] - inner);
  });
}

Var log_softmax(const Var& a) {
  require_rank1("log_softmax", a);
  const Tensor& x = a.value();
  const double peak = simd::kernels().max(x.data().data(), x.size());
  double total = 0.0;
  for (double v : x.values()) total += std::exp(v - peak);
  const double lse = peak + std::log(total);
  Tensor out = x;
  for (double& v : out.values()) v -= lse;
  const std::size_t ia = a.id();
  return a.graph().record("log_softmax", std::move(out), {ia}, [ia](Graph& g, std::size_t self) {
    Tensor* slot = g.grad_slot(ia);
    if (!slot) return;
    const Tensor& y = g.value(self);
    const Tensor& gy = g.grad(self);
    const double total = simd::kernels().sum(gy.data().data(), gy.size());
    for (std::size_t i = 0; i < y.size(); ++i) (*slot)[i] += gy[i] - std::exp(y[i]) * total;
  });
}

Var sum(const Var& a) {
  const double total = simd::kernels().sum(a.value().data().data(), a.value().size());
  const std::size_t ia = a.id();
  return a.graph().record("sum", Tensor::scalar(total), {ia}, [ia](Graph& g, std::size_t self) {
    Tensor* slot = g.grad_slot(ia);
    if (!slot) return;
    const double gy = g.grad(self)[0];
    for (double& v : slot->values()) v += gy;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(const Var& a, const Var& b) {
  require_same_shape("dot", a, b);
  require_rank1("dot", a);
  const double v = simd::kernels().dot(a.value().data().data(), b.value().data().data(), a.value().size());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("dot", Tensor::scalar(v), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const double gy = g.grad(self)[0];
    accumulate(g, ia, g.value(ib).data(), gy);
    accumulate(g, ib, g.value(ia).data(), gy);
  });
}

Var pick(const Var& a, std::size_t index) {
  if (index >= a.value().size())
    throw ShapeError("pick: index " + std::to_string(index) + " out of range for shape " + shape_string(a.value().shape()));
  const std::size_t ia = a.id();
  return a.graph().record("pick", Tensor::scalar(a.value()[index]), {ia}, [ia, index](Graph& g, std::size_t self) {
    if (Tensor* slot = g.grad_slot(ia)) (*slot)[index] += g.grad(self)[0];
  });
}

Var slice(const Var& a, std::size_t begin, std::size_t count) {
  require_rank1("slice", a);
  if (count == 0 || begin + count > a.value().size())
    throw ShapeError("slice: [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") out of range for " +
                     shape_string(a.value().shape()));
  const auto& src = a.value().values();
  Tensor out = Tensor::vector(std::vector<double>(src.begin() + static_cast<std::ptrdiff_t>(begin),
                                                  src.begin() + static_cast<std::ptrdiff_t>(begin + count)));
  const std::size_t ia = a.id();
  return a.graph().record("slice", std::move(out), {ia}, [ia, begin, count](Graph& g, std::size_t self) {
    if (Tensor* slot = g.grad_slot(ia))
      for (std::size_t i = 0; i < count; ++i) (*slot)[begin + i] += g.grad(self)[i];
  });
}

Var concat(const Var& a, const Var& b) {
  require_same_graph("concat", a, b);
  require_rank1("concat", a);
  require_rank1("concat", b);
  std::vector<double> joined = a.value().values();
  joined.insert(joined.end(), b.value().values().begin(), b.value().values().end());
  const std::size_t ia = a.id(), ib = b.id(), na = a.value().size();
  return a.graph().record("concat", Tensor::vector(std::move(joined)), {ia, ib}, [ia, ib, na](Graph& g, std::size_t self) {
    const Tensor& gy = g.grad(self);
    accumulate(g, ia, gy.data().subspan(0, na));
    accumulate(g, ib, gy.data().subspan(na));
  });
}

Var detach(const Var& a) { return a.graph().constant(a.value()); }

Var mse_loss(const Var& prediction, const Tensor& target) {
  if (prediction.value().shape() != target.shape()) shape_mismatch("mse_loss", prediction.value(), target);
  const Tensor& p = prediction.value();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - target[i];
    acc += d * d;
  }
  const std::size_t ip = prediction.id();
  return prediction.graph().record("mse_loss", Tensor::scalar(acc / n), {ip}, [ip, target, n](Graph& g, std::size_t self) {
    Tensor* slot = g.grad_slot(ip);
    if (!slot) return;
    const double gy = g.grad(self)[0];
    const Tensor& p = g.value(ip);
    for (std::size_t i = 0; i < p.size(); ++i) (*slot)[i] += gy * 2.0 * (p[i] - target[i]) / n;
  });
}

Var cross_entropy(const Var& logits, std::size_t target_class) {
  require_rank1("cross_entropy", logits);
  if (target_class >= logits.value().size())
    throw ShapeError("cross_entropy: class " + std::to_string(target_class) + " out of range for " +
                     shape_string(logits.value().shape()));
  return scale(pick(log_softmax(logits), target_class), -1.0);
}

}  // namespace routing::nn
