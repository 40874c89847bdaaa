#include <cmath>

#include "mgpms/kernels/dense.hpp"

namespace mgpms::kernels::serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta, Trans tb,
          bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::No ? a[i * k + p] : a[p * m + i];
        const double bv = tb == Trans::No ? b[p * n + j] : b[j * k + p];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

bool cholesky(std::span<const double> a, std::span<double> l, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= l[i * n + p] * l[j * n + p];
      if (i == j) {
        if (!(s > 0.0)) return false;
        l[i * n + i] = std::sqrt(s);
      } else {
        l[i * n + j] = s / l[j * n + j];
      }
    }
    for (std::size_t j = i + 1; j < n; ++j) l[i * n + j] = 0.0;
  }
  return true;
}

void tri_solve(std::span<const double> l, std::span<double> b, std::size_t n,
               std::size_t nrhs, Trans t) {
  for (std::size_t c = 0; c < nrhs; ++c) {
    if (t == Trans::No) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = b[i * nrhs + c];
        for (std::size_t p = 0; p < i; ++p) s -= l[i * n + p] * b[p * nrhs + c];
        b[i * nrhs + c] = s / l[i * n + i];
      }
    } else {
      for (std::size_t ii = n; ii-- > 0;) {
        double s = b[ii * nrhs + c];
        for (std::size_t p = ii + 1; p < n; ++p) s -= l[p * n + ii] * b[p * nrhs + c];
        b[ii * nrhs + c] = s / l[ii * n + ii];
      }
    }
  }
}

}  // namespace mgpms::kernels::serial
