#include <omp.h>

#include <cmath>
#include <vector>

#include "mgpms/kernels/dense.hpp"

namespace mgpms::kernels::parallel {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;

bool worth_threads(std::size_t work) {
  return work >= kParallelWork && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta, Trans tb,
          bool accumulate) {
  // op(b) packed row-major k x n so the inner loop streams contiguous rows.
  std::vector<double> packed;
  const double* bp = b.data();
  if (tb == Trans::Yes) {
    packed.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = b[j * k + p];
    bp = packed.data();
  }
  const double* ap = a.data();
  double* cp = c.data();
  const long rows = static_cast<long>(m);

#pragma omp parallel if (worth_threads(m * n * k))
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::No ? ap[i * k + p] : ap[p * m + i];
        const double* brow = bp + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
      }
      double* crow = cp + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = acc[j];
      }
    }
  }
}

bool cholesky(std::span<const double> a, std::span<double> l, std::size_t n) {
  // Column-by-column (left-looking). Each entry is reduced over p ascending,
  // matching the reference row-by-row order exactly.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) l[i * n + j] = 0.0;

  bool ok = true;
  const bool threads = worth_threads(n * n * n / 6);
  for (std::size_t j = 0; j < n && ok; ++j) {
    const double* lj = l.data() + j * n;
    double d = a[j * n + j];
    for (std::size_t p = 0; p < j; ++p) d -= lj[p] * lj[p];
    if (!(d > 0.0)) {
      ok = false;
      break;
    }
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    const long first = static_cast<long>(j + 1);
    const long last = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (threads && n - j > 64)
    for (long ii = first; ii < last; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      const double* li = l.data() + i * n;
      double s = a[i * n + j];
      for (std::size_t p = 0; p < j; ++p) s -= li[p] * lj[p];
      l[i * n + j] = s / ljj;
    }
  }
  return ok;
}

void tri_solve(std::span<const double> l, std::span<double> b, std::size_t n,
               std::size_t nrhs, Trans t) {
  // Row-oriented substitution over column blocks of the right-hand side.
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (nrhs + kBlock - 1) / kBlock;
  const long nb = static_cast<long>(blocks);
  double* bp = b.data();
  const double* lp = l.data();

#pragma omp parallel for schedule(static) if (worth_threads(n * n * nrhs / 2) && blocks > 1)
  for (long blk = 0; blk < nb; ++blk) {
    const std::size_t c0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t c1 = std::min(nrhs, c0 + kBlock);
    const std::size_t w = c1 - c0;
    std::vector<double> acc(w);
    if (t == Trans::No) {
      for (std::size_t i = 0; i < n; ++i) {
        double* bi = bp + i * nrhs + c0;
        for (std::size_t c = 0; c < w; ++c) acc[c] = bi[c];
        for (std::size_t p = 0; p < i; ++p) {
          const double lv = lp[i * n + p];
          const double* bpr = bp + p * nrhs + c0;
          for (std::size_t c = 0; c < w; ++c) acc[c] -= lv * bpr[c];
        }
        const double diag = lp[i * n + i];
        for (std::size_t c = 0; c < w; ++c) bi[c] = acc[c] / diag;
      }
    } else {
      for (std::size_t ii = n; ii-- > 0;) {
        double* bi = bp + ii * nrhs + c0;
        for (std::size_t c = 0; c < w; ++c) acc[c] = bi[c];
        for (std::size_t p = ii + 1; p < n; ++p) {
          const double lv = lp[p * n + ii];
          const double* bpr = bp + p * nrhs + c0;
          for (std::size_t c = 0; c < w; ++c) acc[c] -= lv * bpr[c];
        }
        const double diag = lp[ii * n + ii];
        for (std::size_t c = 0; c < w; ++c) bi[c] = acc[c] / diag;
      }
    }
  }
}

}  // namespace mgpms::kernels::parallel
