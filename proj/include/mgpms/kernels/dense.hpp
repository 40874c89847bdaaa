#pragma once

// Dense row-major kernels behind the tensor engine.
//
// Two implementations share each signature. `serial` is the textbook loop
// nest, kept as the reference the tests and the benchmark compare against.
// `parallel` reorders loads for contiguous access and splits independent rows
// or columns across OpenMP threads. Both accumulate every output element over
// the reduction index in the same ascending order, so with contraction
// disabled (-ffp-contract=off) they agree bit for bit at any thread count.

#include <cstddef>
#include <span>

namespace mgpms::kernels {

enum class Trans { No, Yes };

namespace serial {

/// c (m x n) = op(a) (m x k) * op(b) (k x n), or c += ... when accumulate.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta, Trans tb,
          bool accumulate);

/// Lower Cholesky factor of the n x n matrix held in `a` (lower triangle read).
/// The strict upper triangle of `l` is zeroed. Returns false when a pivot is
/// not strictly positive.
bool cholesky(std::span<const double> a, std::span<double> l, std::size_t n);

/// Overwrites b (n x nrhs) with L^{-1} b, or L^{-T} b when t == Yes.
void tri_solve(std::span<const double> l, std::span<double> b, std::size_t n,
               std::size_t nrhs, Trans t);

}  // namespace serial

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, Trans ta, Trans tb,
          bool accumulate);

bool cholesky(std::span<const double> a, std::span<double> l, std::size_t n);

void tri_solve(std::span<const double> l, std::span<double> b, std::size_t n,
               std::size_t nrhs, Trans t);

}  // namespace parallel

}  // namespace mgpms::kernels
