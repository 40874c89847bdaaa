#include "mgpms/tensor/ops.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "mgpms/error.hpp"
#include "mgpms/kernels/dense.hpp"

namespace mgpms::ops {

using detail::make_result;
using detail::Node;
namespace kp = kernels::parallel;
using kernels::Trans;

namespace {

std::string dims(const Tensor& t) {
  std::string out = "[";
  for (std::size_t i = 0; i < t.rank(); ++i) {
    if (i) out += "x";
    out += std::to_string(t.shape()[i]);
  }
  return out + "]";
}

void require_matrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a matrix, got " + dims(t));
  }
}

// Gradient buffer of input i, or nullptr when it does not need one.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

template <class F, class GA, class GB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, GA ga, GB gb) {
  const bool a_scalar = a.size() == 1 && b.size() != 1;
  const bool b_scalar = b.size() == 1 && a.size() != 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape() &&
      !(a.size() == 1 && b.size() == 1)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " + dims(b));
  }
  Shape shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  return make_result(op, std::move(shape), std::move(out), {a, b},
                     [a_scalar, b_scalar, ga, gb](Node& self) {
                       const auto& x = self.inputs[0]->value;
                       const auto& y = self.inputs[1]->value;
                       auto* gx = grad_of(self, 0);
                       auto* gy = grad_of(self, 1);
                       for (std::size_t i = 0; i < self.value.size(); ++i) {
                         const double g = self.grad[i];
                         const double xv = x[a_scalar ? 0 : i];
                         const double yv = y[b_scalar ? 0 : i];
                         if (gx) (*gx)[a_scalar ? 0 : i] += g * ga(xv, yv, self.value[i]);
                         if (gy) (*gy)[b_scalar ? 0 : i] += g * gb(xv, yv, self.value[i]);
                       }
                     });
}

// d(out)/d(in) is expressed through the input x and the output y.
template <class F, class D>
Tensor unary(std::string_view op, const Tensor& a, F f, D d) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [d](Node& self) {
    const auto& x = self.inputs[0]->value;
    auto& gx = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[i] * d(x[i], self.value[i]);
  });
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary(
      "mul_scalar", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(v));
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {}, {s}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: element count mismatch for " + dims(a));
  }
  return make_result("reshape", std::move(shape), a.to_vector(), {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor gather(const Tensor& a, std::vector<std::uint32_t> index, Shape shape) {
  if (numel(shape) != index.size()) throw ShapeError("gather: index count does not match shape");
  const auto av = a.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.size()) throw ShapeError("gather: index out of range");
    out[i] = av[index[i]];
  }
  return make_result("gather", std::move(shape), std::move(out), {a},
                     [index = std::move(index)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
                     });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch " + dims(a) + " vs " + dims(b));
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.begin() + i * ca, ca, out.begin() + i * c);
    std::copy_n(bv.begin() + i * cb, cb, out.begin() + i * c + ca);
  }
  return make_result("concat_cols", {r, c}, std::move(out), {a, b}, [r, ca, cb, c](Node& self) {
    if (auto* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) (*ga)[i * ca + j] += self.grad[i * c + j];
    if (auto* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j) (*gb)[i * cb + j] += self.grad[i * c + ca + j];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions differ " + dims(a) + " x " + dims(b));
  std::vector<double> out(m * n);
  kp::gemm(a.data(), b.data(), out, m, k, n, Trans::No, Trans::No, false);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = grad_of(self, 0)) kp::gemm(self.grad, bv, *ga, m, n, k, Trans::No, Trans::Yes, true);
    if (auto* gb = grad_of(self, 1)) kp::gemm(av, self.grad, *gb, k, m, n, Trans::Yes, Trans::No, true);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) throw ShapeError("matmul_nt: inner dimensions differ " + dims(a) + " x " + dims(b) + "^T");
  std::vector<double> out(m * n);
  kp::gemm(a.data(), b.data(), out, m, k, n, Trans::No, Trans::Yes, false);
  return make_result("matmul_nt", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = grad_of(self, 0)) kp::gemm(self.grad, bv, *ga, m, n, k, Trans::No, Trans::No, true);
    if (auto* gb = grad_of(self, 1)) kp::gemm(self.grad, av, *gb, n, m, k, Trans::Yes, Trans::No, true);
  });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul_tn: inner dimensions differ " + dims(a) + "^T x " + dims(b));
  std::vector<double> out(m * n);
  kp::gemm(a.data(), b.data(), out, m, k, n, Trans::Yes, Trans::No, false);
  return make_result("matmul_tn", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* ga = grad_of(self, 0)) kp::gemm(bv, self.grad, *ga, k, n, m, Trans::No, Trans::Yes, true);
    if (auto* gb = grad_of(self, 1)) kp::gemm(av, self.grad, *gb, k, m, n, Trans::No, Trans::No, true);
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row_vector");
  const std::size_t r = a.rows(), c = a.cols();
  if (bias.size() != c) throw ShapeError("add_row_vector: bias length does not match " + dims(a));
  const auto av = a.data();
  const auto bv = bias.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] + bv[j];
  return make_result("add_row_vector", {r, c}, std::move(out), {a, bias}, [r, c](Node& self) {
    if (auto* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < r * c; ++i) (*ga)[i] += self.grad[i];
    if (auto* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gb)[j] += self.grad[i * c + j];
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& scale) {
  const std::size_t r = a.rows(), c = a.cols();
  if (scale.size() != r) throw ShapeError("scale_rows: scale length does not match " + dims(a));
  const auto av = a.data();
  const auto sv = scale.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = av[i * c + j] * sv[i];
  return make_result("scale_rows", a.shape(), std::move(out), {a, scale}, [r, c](Node& self) {
    const auto& x = self.inputs[0]->value;
    const auto& s = self.inputs[1]->value;
    auto* ga = grad_of(self, 0);
    auto* gs = grad_of(self, 1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double g = self.grad[i * c + j];
        if (ga) (*ga)[i * c + j] += g * s[i];
        if (gs) (*gs)[i] += g * x[i * c + j];
      }
  });
}

Tensor add_diag(const Tensor& a, const Tensor& v) {
  require_matrix(a, "add_diag");
  const std::size_t n = a.rows();
  if (a.cols() != n || v.size() != n) throw ShapeError("add_diag: expects square matrix and matching vector");
  std::vector<double> out = a.to_vector();
  const auto vv = v.data();
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] += vv[i];
  return make_result("add_diag", a.shape(), std::move(out), {a, v}, [n](Node& self) {
    if (auto* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < n * n; ++i) (*ga)[i] += self.grad[i];
    if (auto* gv = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) (*gv)[i] += self.grad[i * n + i];
  });
}

Tensor softmax_lastdim(const Tensor& a) {
  const std::size_t width = a.rank() == 0 ? 1 : a.shape().back();
  const std::size_t rows = width == 0 ? 0 : a.size() / width;
  const auto av = a.data();
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double* y = out.data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < width; ++j) y[j] /= z;
  }
  return make_result("softmax_lastdim", a.shape(), std::move(out), {a}, [rows, width](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * width;
      const double* gy = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < width; ++j) g[r * width + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (scale.size() != c || shift.size() != c) throw ShapeError("layer_norm: parameter length mismatch");
  const auto xv = x.data();
  const auto gv = scale.data();
  const auto bv = shift.data();
  auto xhat = std::make_shared<std::vector<double>>(r * c);
  auto inv_sd = std::make_shared<std::vector<double>>(r);
  std::vector<double> out(r * c);
  const double inv_c = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu *= inv_c;
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var *= inv_c;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sd)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      out[i * c + j] = h * gv[j] + bv[j];
    }
  }
  return make_result("layer_norm", {r, c}, std::move(out), {x, scale, shift},
                     [r, c, inv_c, xhat, inv_sd](Node& self) {
                       const auto& g = self.inputs[1]->value;
                       auto* gx = grad_of(self, 0);
                       auto* gg = grad_of(self, 1);
                       auto* gb = grad_of(self, 2);
                       std::vector<double> dh(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         const double* h = xhat->data() + i * c;
                         const double* gy = self.grad.data() + i * c;
                         double mean_dh = 0.0, mean_dh_h = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           if (gg) (*gg)[j] += gy[j] * h[j];
                           if (gb) (*gb)[j] += gy[j];
                           dh[j] = gy[j] * g[j];
                           mean_dh += dh[j];
                           mean_dh_h += dh[j] * h[j];
                         }
                         if (!gx) continue;
                         mean_dh *= inv_c;
                         mean_dh_h *= inv_c;
                         for (std::size_t j = 0; j < c; ++j)
                           (*gx)[i * c + j] += (*inv_sd)[i] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                       }
                     });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                        std::size_t segment_len) {
  require_matrix(q, "causal_attention");
  if (k.shape() != q.shape() || v.shape() != q.shape())
    throw ShapeError("causal_attention: q, k, v shapes differ");
  const std::size_t rows = q.rows(), width = q.cols();
  if (heads == 0 || width % heads != 0) throw ShapeError("causal_attention: width not divisible by heads");
  if (segment_len == 0 || rows % segment_len != 0)
    throw ShapeError("causal_attention: rows not a multiple of the segment length");
  const std::size_t L = segment_len, dk = width / heads, segments = rows / L;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const auto qv = q.data(), kv = k.data(), vv = v.data();

  // Attention weights per (segment, head), L x L, zero above the diagonal.
  auto weights = std::make_shared<std::vector<double>>(segments * heads * L * L, 0.0);
  std::vector<double> out(rows * width, 0.0);
  const long tasks = static_cast<long>(segments * heads);
#pragma omp parallel for schedule(static) if (tasks > 1 && !omp_in_parallel() && rows * L * width > (1u << 16))
  for (long task = 0; task < tasks; ++task) {
    const std::size_t s = static_cast<std::size_t>(task) / heads;
    const std::size_t h = static_cast<std::size_t>(task) % heads;
    double* w = weights->data() + static_cast<std::size_t>(task) * L * L;
    for (std::size_t j = 0; j < L; ++j) {
      const double* qj = qv.data() + (s * L + j) * width + h * dk;
      double mx = -INFINITY;
      for (std::size_t t = 0; t <= j; ++t) {
        const double* kt = kv.data() + (s * L + t) * width + h * dk;
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += qj[c] * kt[c];
        w[j * L + t] = dot * scale;
        mx = std::max(mx, w[j * L + t]);
      }
      double z = 0.0;
      for (std::size_t t = 0; t <= j; ++t) z += (w[j * L + t] = std::exp(w[j * L + t] - mx));
      for (std::size_t t = 0; t <= j; ++t) w[j * L + t] /= z;
      double* oj = out.data() + (s * L + j) * width + h * dk;
      for (std::size_t t = 0; t <= j; ++t) {
        const double* vt = vv.data() + (s * L + t) * width + h * dk;
        const double a = w[j * L + t];
        for (std::size_t c = 0; c < dk; ++c) oj[c] += a * vt[c];
      }
    }
  }

  return make_result(
      "causal_attention", {rows, width}, std::move(out), {q, k, v},
      [weights, rows, width, heads, L, dk, segments, scale](Node& self) {
        const auto& qv = self.inputs[0]->value;
        const auto& kv = self.inputs[1]->value;
        const auto& vv = self.inputs[2]->value;
        auto* gq = grad_of(self, 0);
        auto* gk = grad_of(self, 1);
        auto* gv = grad_of(self, 2);
        const long tasks = static_cast<long>(segments * heads);
#pragma omp parallel for schedule(static) if (tasks > 1 && !omp_in_parallel() && rows * L * width > (1u << 16))
        for (long task = 0; task < tasks; ++task) {
          const std::size_t s = static_cast<std::size_t>(task) / heads;
          const std::size_t h = static_cast<std::size_t>(task) % heads;
          const double* w = weights->data() + static_cast<std::size_t>(task) * L * L;
          std::vector<double> dw(L);
          for (std::size_t j = 0; j < L; ++j) {
            const std::size_t rj = (s * L + j) * width + h * dk;
            const double* go = self.grad.data() + rj;
            double row_dot = 0.0;
            for (std::size_t t = 0; t <= j; ++t) {
              const std::size_t rt = (s * L + t) * width + h * dk;
              double d = 0.0;
              for (std::size_t c = 0; c < dk; ++c) d += go[c] * vv[rt + c];
              dw[t] = d;
              row_dot += w[j * L + t] * d;
              if (gv)
                for (std::size_t c = 0; c < dk; ++c) (*gv)[rt + c] += w[j * L + t] * go[c];
            }
            for (std::size_t t = 0; t <= j; ++t) {
              const std::size_t rt = (s * L + t) * width + h * dk;
              const double ds = w[j * L + t] * (dw[t] - row_dot) * scale;
              if (gq)
                for (std::size_t c = 0; c < dk; ++c) (*gq)[rj + c] += ds * kv[rt + c];
              if (gk)
                for (std::size_t c = 0; c < dk; ++c) (*gk)[rt + c] += ds * qv[rj + c];
            }
          }
        }
      });
}

Tensor dropout(const Tensor& a, double rate, bool training, Rng& rng) {
  if (!training || rate == 0.0) return a;
  if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout rate must lie in [0, 1)");
  const double keep = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.size());
  const auto av = a.data();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep;
    out[i] = av[i] * (*mask)[i];
  }
  return make_result("dropout", a.shape(), std::move(out), {a}, [mask](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor block_readout(const Tensor& v, const Tensor& blocks) {
  require_matrix(v, "block_readout");
  require_matrix(blocks, "block_readout");
  const std::size_t rows = v.rows(), width = v.cols(), L = blocks.rows();
  if (blocks.cols() != width) throw ShapeError("block_readout: block width mismatch");
  if (L == 0 || rows % L != 0) throw ShapeError("block_readout: rows not a multiple of block count");
  const std::size_t segments = rows / L;
  const auto vv = v.data(), bv = blocks.data();
  std::vector<double> out(rows);
  for (std::size_t s = 0; s < segments; ++s) {
    double running = 0.0;
    for (std::size_t j = 0; j < L; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < width; ++c) d += vv[(s * L + j) * width + c] * bv[j * width + c];
      running += d;
      out[s * L + j] = running;
    }
  }
  return make_result("block_readout", {rows}, std::move(out), {v, blocks},
                     [segments, L, width](Node& self) {
                       const auto& vv = self.inputs[0]->value;
                       const auto& bv = self.inputs[1]->value;
                       auto* gvv = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       for (std::size_t s = 0; s < segments; ++s) {
                         double tail = 0.0;  // sum of output grads at positions >= j
                         for (std::size_t jj = L; jj-- > 0;) {
                           tail += self.grad[s * L + jj];
                           for (std::size_t c = 0; c < width; ++c) {
                             const std::size_t vi = (s * L + jj) * width + c;
                             if (gvv) (*gvv)[vi] += tail * bv[jj * width + c];
                             if (gb) (*gb)[jj * width + c] += tail * vv[vi];
                           }
                         }
                       }
                     });
}

Tensor bce_with_logits_mean(const Tensor& logits, double target, double pos_weight) {
  if (target != 0.0 && target != 1.0) throw DomainError("cross-entropy target must be 0 or 1");
  const auto sv = logits.data();
  const double n = static_cast<double>(sv.size());
  double total = 0.0;
  for (double s : sv) {
    total += target == 1.0 ? pos_weight * softplus(-s) : softplus(s);
  }
  return make_result("bce_with_logits_mean", {}, {total / n}, {logits},
                     [target, pos_weight, n](Node& self) {
                       const auto& s = self.inputs[0]->value;
                       auto& g = self.inputs[0]->grad_buffer();
                       const double go = self.grad[0] / n;
                       for (std::size_t i = 0; i < s.size(); ++i) {
                         const double d = target == 1.0 ? -pos_weight * stable_sigmoid(-s[i])
                                                        : stable_sigmoid(s[i]);
                         g[i] += go * d;
                       }
                     });
}

Tensor lower_exp_diag(const Tensor& raw) {
  require_matrix(raw, "lower_exp_diag");
  const std::size_t n = raw.rows();
  if (raw.cols() != n) throw ShapeError("lower_exp_diag: expects a square matrix");
  const auto rv = raw.data();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) out[i * n + j] = rv[i * n + j];
    out[i * n + i] = std::exp(rv[i * n + i]);
  }
  return make_result("lower_exp_diag", {n, n}, std::move(out), {raw}, [n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) g[i * n + j] += self.grad[i * n + j];
      g[i * n + i] += self.grad[i * n + i] * self.value[i * n + i];
    }
  });
}

Tensor kron_select(const Tensor& a, const Tensor& b, const KronIndex& rows, const KronIndex& cols) {
  require_matrix(a, "kron_select");
  require_matrix(b, "kron_select");
  if (rows.a.size() != rows.b.size() || cols.a.size() != cols.b.size())
    throw ShapeError("kron_select: index halves differ in length");
  const std::size_t P = rows.size(), Q = cols.size();
  const std::size_t ac = a.cols(), bc = b.cols();
  for (std::size_t p = 0; p < P; ++p)
    if (rows.a[p] >= a.rows() || rows.b[p] >= b.rows()) throw ShapeError("kron_select: row index out of range");
  for (std::size_t q = 0; q < Q; ++q)
    if (cols.a[q] >= ac || cols.b[q] >= bc) throw ShapeError("kron_select: column index out of range");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(P * Q);
  const long np = static_cast<long>(P);
#pragma omp parallel for schedule(static) if (P * Q > (1u << 16) && !omp_in_parallel())
  for (long pp = 0; pp < np; ++pp) {
    const std::size_t p = static_cast<std::size_t>(pp);
    const double* arow = av.data() + rows.a[p] * ac;
    const double* brow = bv.data() + rows.b[p] * bc;
    for (std::size_t q = 0; q < Q; ++q) out[p * Q + q] = arow[cols.a[q]] * brow[cols.b[q]];
  }
  return make_result("kron_select", {P, Q}, std::move(out), {a, b},
                     [rows, cols, ac, bc](Node& self) {
                       const auto& av = self.inputs[0]->value;
                       const auto& bv = self.inputs[1]->value;
                       auto* ga = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       const std::size_t P = rows.size(), Q = cols.size();
                       for (std::size_t p = 0; p < P; ++p) {
                         const std::size_t ar = rows.a[p] * ac, br = rows.b[p] * bc;
                         const double* g = self.grad.data() + p * Q;
                         for (std::size_t q = 0; q < Q; ++q) {
                           if (ga) (*ga)[ar + cols.a[q]] += g[q] * bv[br + cols.b[q]];
                           if (gb) (*gb)[br + cols.b[q]] += g[q] * av[ar + cols.a[q]];
                         }
                       }
                     });
}

Tensor se_kernel(std::span<const double> x, std::span<const double> y, const Tensor& log_length_scale) {
  if (log_length_scale.size() != 1) throw ShapeError("se_kernel: length scale must be a scalar");
  const double l = std::exp(log_length_scale.item());
  if (!(l > 0.0) || !std::isfinite(l)) throw DomainError("se_kernel: length scale must be positive and finite");
  const double inv = 1.0 / (2.0 * l * l);
  const std::size_t P = x.size(), Q = y.size();
  std::vector<double> out(P * Q);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < Q; ++q) {
      const double d = x[p] - y[q];
      out[p * Q + q] = std::exp(-d * d * inv);
    }
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  return make_result("se_kernel", {P, Q}, std::move(out), {log_length_scale},
                     [xs = std::move(xs), ys = std::move(ys), l](Node& self) {
                       const std::size_t Q = ys.size();
                       double g = 0.0;
                       const double inv_l2 = 1.0 / (l * l);
                       for (std::size_t p = 0; p < xs.size(); ++p)
                         for (std::size_t q = 0; q < Q; ++q) {
                           const double d = xs[p] - ys[q];
                           g += self.grad[p * Q + q] * self.value[p * Q + q] * d * d * inv_l2;
                         }
                       self.inputs[0]->grad_buffer()[0] += g;
                     });
}

double default_jitter(const Tensor& a) {
  const std::size_t n = a.rows();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a.at(i * n + i));
  return n == 0 ? 0.0 : 1e-6 * s / static_cast<double>(n);
}

CholeskyResult cholesky_jittered(const Tensor& a, double jitter, std::string_view label, int escalations) {
  require_matrix(a, "cholesky");
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("cholesky of " + std::string(label) + ": matrix is not square " + dims(a));
  if (jitter < 0.0) throw DomainError("cholesky: jitter must be non-negative");
  const auto av = a.data();
  std::vector<double> sym(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym[i * n + j] = 0.5 * (av[i * n + j] + av[j * n + i]);

  std::vector<double> attempts{jitter};
  double step = jitter > 0.0 ? jitter * 10.0 : default_jitter(a);
  if (jitter == 0.0 && step == 0.0) step = 1e-12;
  for (int e = 0; e < escalations; ++e, step *= 10.0) attempts.push_back(step);

  std::vector<double> l(n * n);
  std::vector<double> shifted(n * n);
  for (double j : attempts) {
    shifted = sym;
    for (std::size_t i = 0; i < n; ++i) shifted[i * n + i] += j;
    if (!kp::cholesky(shifted, l, n)) continue;
    Tensor factor = make_result("cholesky", {n, n}, std::move(l), {a}, [n](Node& self) {
      const auto& L = self.value;
      // Only the lower triangle of L is free; upper entries are structural zeros.
      std::vector<double> lbar(n * n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) lbar[i * n + j] = self.grad[i * n + j];
      std::vector<double> phi(n * n);
      kp::gemm(L, lbar, phi, n, n, n, Trans::Yes, Trans::No, false);
      for (std::size_t i = 0; i < n; ++i) {
        phi[i * n + i] *= 0.5;
        for (std::size_t j = i + 1; j < n; ++j) phi[i * n + j] = 0.0;
      }
      // S = L^{-T} phi L^{-1}; the second solve runs on the transpose.
      kp::tri_solve(L, phi, n, n, Trans::Yes);
      std::vector<double> yt(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) yt[j * n + i] = phi[i * n + j];
      kp::tri_solve(L, yt, n, n, Trans::Yes);  // yt now holds S^T
      auto& ga = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += 0.5 * (yt[i * n + j] + yt[j * n + i]);
    });
    return {std::move(factor), j};
  }
  throw FactorizationError("cholesky of " + std::string(label) + " (" + std::to_string(n) + "x" +
                           std::to_string(n) + ") failed with jitter up to " +
                           std::to_string(attempts.back()));
}

Tensor cholesky(const Tensor& a, double jitter, std::string_view label) {
  return cholesky_jittered(a, jitter, label).factor;
}

Tensor tri_solve(const Tensor& l, const Tensor& b, bool transpose) {
  require_matrix(l, "tri_solve");
  const std::size_t n = l.rows();
  if (l.cols() != n) throw ShapeError("tri_solve: factor is not square");
  if (b.rows() != n || b.rank() > 2) throw ShapeError("tri_solve: right-hand side has wrong rows " + dims(b));
  const std::size_t r = b.cols();
  const auto lv = l.data();
  for (std::size_t i = 0; i < n; ++i)
    if (lv[i * n + i] == 0.0) throw DomainError("tri_solve: singular triangular factor");
  std::vector<double> x = b.to_vector();
  const Trans t = transpose ? Trans::Yes : Trans::No;
  kp::tri_solve(lv, x, n, r, t);
  return make_result("tri_solve", b.shape(), std::move(x), {l, b}, [n, r, t](Node& self) {
    const auto& L = self.inputs[0]->value;
    const auto& X = self.value;
    // B-bar = L^{-T} X-bar (or L^{-1} X-bar for the transposed solve).
    std::vector<double> bbar = self.grad;
    kp::tri_solve(L, bbar, n, r, t == Trans::No ? Trans::Yes : Trans::No);
    if (auto* gl = grad_of(self, 0)) {
      // L-bar = -lower(B-bar X^T), or -lower(X B-bar^T) when transposed.
      std::vector<double> outer(n * n);
      if (t == Trans::No) {
        kp::gemm(bbar, X, outer, n, r, n, Trans::No, Trans::Yes, false);
      } else {
        kp::gemm(X, bbar, outer, n, r, n, Trans::No, Trans::Yes, false);
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) (*gl)[i * n + j] -= outer[i * n + j];
    }
    if (auto* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < bbar.size(); ++i) (*gb)[i] += bbar[i];
  });
}

}  // namespace mgpms::ops
