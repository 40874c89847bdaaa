#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mgpms/error.hpp"
#include "mgpms/tensor/grad_check.hpp"
#include "mgpms/tensor/ops.hpp"
#include "mgpms/tensor/tensor.hpp"

using namespace mgpms;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& gen, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(gen);
  return v;
}

std::vector<double> random_spd(std::size_t n, std::mt19937_64& gen) {
  const auto g = random_values(n * n, gen);
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) a[i * n + j] += g[i * n + k] * g[j * n + k];
      if (i == j) a[i * n + j] += 0.5 * static_cast<double>(n);
    }
  return a;
}

}  // namespace

TEST(Elementwise, SigmoidOfZeroIsHalf) {
  EXPECT_EQ(ops::sigmoid(Tensor::scalar(0.0)).item(), 0.5);
}

TEST(Elementwise, AddZeroIsIdentity) {
  const auto x = Tensor::vector({1.5, -2.0, 3.25});
  EXPECT_EQ(ops::add(x, Tensor::scalar(0.0)).to_vector(), x.to_vector());
}

TEST(Elementwise, ExpLogRoundTrip) {
  const auto v = Tensor::vector({1e-3, 0.5, 1.0, 7.0, 123.0});
  const auto r = ops::exp(ops::log(v));
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(r.at(i), v.at(i), 1e-12 * std::max(1.0, v.at(i)));
}

TEST(Elementwise, DomainErrors) {
  EXPECT_THROW(ops::log(Tensor::vector({1.0, 0.0})), DomainError);
  EXPECT_THROW(ops::log(Tensor::vector({-1.0})), DomainError);
  EXPECT_THROW(ops::div(Tensor::vector({1.0, 2.0}), Tensor::vector({1.0, 0.0})), DomainError);
  EXPECT_THROW(ops::add(Tensor::vector({1.0, 2.0}), Tensor::vector({1.0, 2.0, 3.0})), ShapeError);
}

TEST(Elementwise, OverflowIsReported) {
  EXPECT_THROW(ops::exp(Tensor::scalar(1000.0)), NumericError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::vector<double> eye(9, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  const auto m = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(ops::matmul(Tensor::matrix(3, 3, eye), m).to_vector(), m.to_vector());
}

TEST(Matmul, HandProduct) {
  const auto r = ops::matmul(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::matrix(2, 1, {0, 1}));
  EXPECT_EQ(r.shape(), (Shape{2, 1}));
  EXPECT_EQ(r.to_vector(), (std::vector<double>{2, 4}));
}

TEST(Matmul, DimensionMismatch) {
  EXPECT_THROW(ops::matmul(Tensor::matrix(2, 3, std::vector<double>(6)), Tensor::matrix(2, 2, std::vector<double>(4))),
               ShapeError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(1);
  const auto b = Tensor::matrix(4, 3, random_values(12, gen));
  const auto a = Tensor::matrix(2, 4, random_values(8, gen), true);
  const double err = grad_check([&](const Tensor& x) { return ops::sum(ops::matmul(x, b)); }, a, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Softmax, Cases) {
  const auto eq = ops::softmax_lastdim(Tensor::matrix(1, 4, {2, 2, 2, 2}));
  for (double v : eq.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  const auto r = ops::softmax_lastdim(Tensor::matrix(1, 2, {0.0, std::log(3.0)}));
  EXPECT_NEAR(r.at(0), 0.25, 1e-15);
  EXPECT_NEAR(r.at(1), 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 10; ++trial) {
    auto v = random_values(5 * 7, gen, -20.0, 20.0);
    const auto s = ops::softmax_lastdim(Tensor::matrix(5, 7, v));
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) total += s.at(r, c);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
    for (std::size_t c = 0; c < 7; ++c) v[2 * 7 + c] += 13.5;
    const auto shifted = ops::softmax_lastdim(Tensor::matrix(5, 7, v));
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(shifted.at(2, c), s.at(2, c), 1e-12);
  }
}

TEST(Cholesky, Identity) {
  const auto l = ops::cholesky(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), 0.0);
  EXPECT_EQ(l.to_vector(), (std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1}));
}

TEST(Cholesky, HandFactor) {
  const auto l = ops::cholesky(Tensor::matrix(2, 2, {4, 2, 2, 2}), 0.0);
  const std::vector<double> expect{2, 0, 1, 1};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(l.at(i), expect[i], 1e-15);
}

TEST(Cholesky, RandomReconstruction) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_spd(5, gen);
    const auto l = ops::cholesky(Tensor::matrix(5, 5, a), 0.0);
    const auto rec = ops::matmul_nt(l, l);
    for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(rec.at(i), a[i], 1e-10);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_GT(l.at(i, i), 0.0);
      for (std::size_t j = i + 1; j < 5; ++j) EXPECT_EQ(l.at(i, j), 0.0);
    }
  }
}

TEST(Cholesky, IllConditionedReconstruction) {
  // Q diag(1, ..., 1e-8) Q^T with a Householder Q.
  const std::size_t n = 6;
  std::mt19937_64 gen(4);
  auto u = random_values(n, gen);
  double norm = 0.0;
  for (double x : u) norm += x * x;
  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q[i * n + j] = (i == j ? 1.0 : 0.0) - 2.0 * u[i] * u[j] / norm;
  std::vector<double> a(n * n, 0.0);
  double frob = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) a[i * n + j] += q[i * n + k] * std::pow(1e-8, double(k) / (n - 1)) * q[j * n + k];
    }
  for (double x : a) frob += x * x;
  const auto l = ops::cholesky(Tensor::matrix(n, n, a), 0.0);
  const auto rec = ops::matmul_nt(l, l);
  for (std::size_t i = 0; i < n * n; ++i) EXPECT_NEAR(rec.at(i), a[i], 1e-8 * std::sqrt(frob));
}

TEST(Cholesky, JitterEscalationAndFailure) {
  // Rank-one PSD matrix: plain factorization fails, escalated jitter succeeds.
  const auto a = Tensor::matrix(2, 2, {1, 1, 1, 1});
  const auto r = ops::cholesky_jittered(a, 0.0);
  EXPECT_GT(r.jitter, 0.0);
  const auto rec = ops::matmul_nt(r.factor, r.factor);
  EXPECT_NEAR(rec.at(0, 0), 1.0 + r.jitter, 1e-12);
  try {
    ops::cholesky(Tensor::matrix(2, 2, {1, 0, 0, -5}), 1e-6, "test matrix 7");
    FAIL() << "indefinite matrix factored";
  } catch (const FactorizationError& e) {
    EXPECT_NE(std::string(e.what()).find("test matrix 7"), std::string::npos);
  }
}

TEST(Backward, SquareGradient) {
  const auto w = Tensor::scalar(3.0, true);
  ops::square(w).backward();
  ASSERT_EQ(w.grad().size(), 1u);
  EXPECT_EQ(w.grad()[0], 6.0);
}

TEST(Backward, IndependentLeafGetsZero) {
  const auto w = Tensor::scalar(3.0, true);
  const auto u = Tensor::scalar(2.0, true);
  const auto loss = ops::add(ops::square(w), ops::mul_scalar(u, 0.0));
  loss.backward();
  EXPECT_EQ(u.grad()[0], 0.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
  const auto w = Tensor::scalar(3.0, true);
  const auto loss = ops::square(w);
  loss.backward();
  loss.backward();
  EXPECT_EQ(w.grad()[0], 12.0);
  Tensor(w).zero_grad();
  loss.backward();
  EXPECT_EQ(w.grad()[0], 6.0);
}

TEST(Backward, NonScalarRejected) {
  const auto w = Tensor::vector({1.0, 2.0}, true);
  EXPECT_THROW(ops::square(w).backward(), ShapeError);
}

TEST(Backward, DiamondEqualsSumOfPaths) {
  // y = a*x, loss = exp(y) + y^2: d/dx = a*(exp(y) + 2y).
  const auto x = Tensor::scalar(0.7, true);
  const double a = -1.3;
  const auto y = ops::mul_scalar(x, a);
  ops::add(ops::exp(y), ops::square(y)).backward();
  const double yv = a * 0.7;
  EXPECT_NEAR(x.grad()[0], a * (std::exp(yv) + 2 * yv), 1e-14);
}

TEST(Backward, TapeIsTopological) {
  const auto x = Tensor::vector({1.0, 2.0}, true);
  const auto y = ops::exp(x);
  const auto loss = ops::sum(ops::mul(y, ops::sigmoid(y)));
  ComputationTape tape = ComputationTape::record(loss);
  const auto& nodes = tape.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& in : nodes[i]->inputs) {
      if (!in->requires_grad) continue;
      bool earlier = false;
      for (std::size_t k = 0; k < i; ++k) earlier |= nodes[k] == in;
      EXPECT_TRUE(earlier);
    }
}

TEST(Backward, CompositeSigmoidMatmul) {
  std::mt19937_64 gen(5);
  const auto x = Tensor::matrix(3, 4, random_values(12, gen));
  const auto w = Tensor::matrix(4, 2, random_values(8, gen), true);
  const double err = grad_check([&](const Tensor& p) { return ops::sum(ops::sigmoid(ops::matmul(x, p))); }, w, 1e-5);
  EXPECT_LT(err, 1e-5);
}

TEST(GradCheck, QuadraticAndLinear) {
  std::mt19937_64 gen(6);
  const auto w = Tensor::vector(random_values(6, gen), true);
  EXPECT_LT(grad_check([](const Tensor& p) { return ops::sum(ops::square(p)); }, w, 1e-5), 1e-7);
  const auto c = Tensor::vector(random_values(6, gen));
  EXPECT_LT(grad_check([&](const Tensor& p) { return ops::sum(ops::mul(p, c)); }, w, 1e-5), 1e-9);
}

// Every differentiable op against central differences over 10 random inputs.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, AllOps) {
  std::mt19937_64 gen(100 + GetParam());
  auto leaf = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return Tensor::parameter(s, random_values(numel(s), gen, lo, hi));
  };
  const double eps = 1e-6;
  struct Case {
    const char* name;
    std::function<Tensor(std::span<const Tensor>)> f;
    std::vector<Tensor> at;
    double tol;
  };
  const auto weights = Tensor::matrix(3, 4, random_values(12, gen));
  auto wsum = [weights](const Tensor& t) {
    return ops::sum(ops::mul(t, Tensor::matrix(t.rows(), t.cols(), std::vector<double>(weights.data().begin(),
                                                                                        weights.data().begin() + t.size()))));
  };
  std::vector<Case> cases;
  cases.push_back({"add", [&](auto in) { return wsum(ops::add(in[0], in[1])); }, {leaf({3, 4}), leaf({3, 4})}, 1e-5});
  cases.push_back({"sub", [&](auto in) { return wsum(ops::sub(in[0], in[1])); }, {leaf({3, 4}), leaf({3, 4})}, 1e-5});
  cases.push_back({"mul", [&](auto in) { return wsum(ops::mul(in[0], in[1])); }, {leaf({3, 4}), leaf({3, 4})}, 1e-5});
  cases.push_back({"mul_bcast", [&](auto in) { return wsum(ops::mul(in[0], in[1])); }, {leaf({3, 4}), leaf({})}, 1e-5});
  cases.push_back({"div", [&](auto in) { return wsum(ops::div(in[0], in[1])); }, {leaf({3, 4}), leaf({3, 4}, 0.5, 2.0)}, 1e-5});
  cases.push_back({"exp", [&](auto in) { return wsum(ops::exp(in[0])); }, {leaf({3, 4})}, 1e-5});
  cases.push_back({"log", [&](auto in) { return wsum(ops::log(in[0])); }, {leaf({3, 4}, 0.3, 3.0)}, 1e-5});
  cases.push_back({"sigmoid", [&](auto in) { return wsum(ops::sigmoid(in[0])); }, {leaf({3, 4})}, 1e-5});
  cases.push_back({"relu", [&](auto in) { return wsum(ops::relu(in[0])); }, {leaf({3, 4}, 0.1, 1.0)}, 1e-5});
  cases.push_back({"square", [&](auto in) { return wsum(ops::square(in[0])); }, {leaf({3, 4})}, 1e-5});
  cases.push_back({"scalar_ops", [&](auto in) { return wsum(ops::neg(ops::add_scalar(ops::mul_scalar(in[0], 2.5), 1.0))); },
                   {leaf({3, 4})}, 1e-5});
  cases.push_back({"mean", [&](auto in) { return ops::mean(ops::square(in[0])); }, {leaf({3, 4})}, 1e-5});
  cases.push_back({"transpose_reshape", [&](auto in) { return wsum(ops::reshape(ops::transpose(in[0]), {3, 4})); },
                   {leaf({4, 3})}, 1e-5});
  cases.push_back({"gather", [&](auto in) { return wsum(ops::gather(in[0], {0, 5, 5, 2, 1, 0, 3, 4, 5, 1, 2, 2}, {3, 4})); },
                   {leaf({2, 3})}, 1e-5});
  cases.push_back({"concat", [&](auto in) { return wsum(ops::concat_cols(in[0], in[1])); }, {leaf({3, 1}), leaf({3, 3})}, 1e-5});
  cases.push_back({"matmul_nt", [&](auto in) { return wsum(ops::matmul_nt(in[0], in[1])); }, {leaf({3, 2}), leaf({4, 2})}, 1e-5});
  cases.push_back({"matmul_tn", [&](auto in) { return wsum(ops::matmul_tn(in[0], in[1])); }, {leaf({2, 3}), leaf({2, 4})}, 1e-5});
  cases.push_back({"add_row_vector", [&](auto in) { return wsum(ops::add_row_vector(in[0], in[1])); },
                   {leaf({3, 4}), leaf({4})}, 1e-5});
  cases.push_back({"scale_rows", [&](auto in) { return wsum(ops::scale_rows(in[0], in[1])); }, {leaf({3, 4}), leaf({3})}, 1e-5});
  cases.push_back({"add_diag", [&](auto in) { return wsum(ops::add_diag(in[0], in[1])); }, {leaf({3, 3}), leaf({3})}, 1e-5});
  cases.push_back({"softmax", [&](auto in) { return wsum(ops::softmax_lastdim(in[0])); }, {leaf({3, 4}, -3.0, 3.0)}, 1e-5});
  cases.push_back({"layer_norm", [&](auto in) { return wsum(ops::layer_norm(in[0], in[1], in[2])); },
                   {leaf({3, 4}), leaf({4}), leaf({4})}, 1e-5});
  cases.push_back({"causal_attention", [&](auto in) { return wsum(ops::reshape(ops::causal_attention(in[0], in[1], in[2], 2, 3), {3, 4})); },
                   {leaf({6, 2}), leaf({6, 2}), leaf({6, 2})}, 1e-5});
  cases.push_back({"block_readout", [&](auto in) { return wsum(ops::reshape(ops::block_readout(in[0], in[1]), {2, 3})); },
                   {leaf({6, 2}), leaf({3, 2})}, 1e-5});
  cases.push_back({"bce", [&](auto in) { return ops::bce_with_logits_mean(in[0], 1.0, 2.0); }, {leaf({5}, -4.0, 4.0)}, 1e-5});
  cases.push_back({"lower_exp_diag", [&](auto in) { return wsum(ops::lower_exp_diag(in[0])); }, {leaf({3, 3})}, 1e-5});
  cases.push_back({"kron_select", [&](auto in) {
                     ops::KronIndex rows{{0, 1, 1}, {1, 0, 2}}, cols{{1, 0, 1, 0}, {0, 2, 1, 1}};
                     return wsum(ops::kron_select(in[0], in[1], rows, cols));
                   },
                   {leaf({2, 2}), leaf({3, 3})}, 1e-5});
  cases.push_back({"se_kernel", [&](auto in) {
                     const std::vector<double> x{0.0, 1.5, 4.0}, y{0.5, 1.0, 2.0, 6.0};
                     return wsum(ops::se_kernel(x, y, in[0]));
                   },
                   {leaf({}, 0.2, 1.0)}, 1e-5});
  cases.push_back({"cholesky", [&](auto in) {
                     const auto spd = ops::add_diag(ops::matmul_nt(in[0], in[0]), Tensor::vector({1, 1, 1, 1}));
                     const auto l = ops::cholesky(spd, 0.0);
                     return wsum(ops::gather(l, {0, 4, 5, 8, 9, 10, 12, 13, 14, 15, 5, 10}, {3, 4}));
                   },
                   {leaf({4, 4})}, 1e-3});
  cases.push_back({"tri_solve", [&](auto in) {
                     const auto l = ops::add_diag(ops::lower_exp_diag(in[0]), Tensor::vector({0.5, 0.5, 0.5}));
                     return wsum(ops::tri_solve(l, in[1]));
                   },
                   {leaf({3, 3}), leaf({3, 4})}, 1e-5});
  cases.push_back({"tri_solve_t", [&](auto in) {
                     const auto l = ops::add_diag(ops::lower_exp_diag(in[0]), Tensor::vector({0.5, 0.5, 0.5}));
                     return wsum(ops::tri_solve(l, in[1], true));
                   },
                   {leaf({3, 3}), leaf({3, 4})}, 1e-5});
  for (const auto& c : cases) {
    const auto report = grad_check(c.f, c.at, eps);
    EXPECT_LT(report.max_rel_error, c.tol) << c.name << " input " << report.worst_input << " index "
                                           << report.worst_index << " analytic " << report.analytic
                                           << " numeric " << report.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, OpGradient, ::testing::Range(0, 10));

TEST(Dropout, EvalIsIdentityAndTrainRescales) {
  Rng rng(9);
  const auto x = Tensor::vector(std::vector<double>(10000, 1.0));
  EXPECT_EQ(ops::dropout(x, 0.3, false, rng).to_vector(), x.to_vector());
  const auto d = ops::dropout(x, 0.3, true, rng);
  std::size_t zeros = 0;
  for (double v : d.data()) {
    if (v == 0.0) ++zeros;
    else EXPECT_NEAR(v, 1.0 / 0.7, 1e-15);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 10000.0, 0.3, 0.03);
}
