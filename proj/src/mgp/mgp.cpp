#include "mgpms/mgp/mgp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgpms/error.hpp"

namespace mgpms::mgp {

namespace {

std::uint32_t index_of(const std::vector<double>& sorted, double t) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<std::uint32_t>(it - sorted.begin());
}

ops::KronIndex grid_pairs(std::size_t features, std::size_t points) {
  ops::KronIndex idx;
  idx.a.reserve(features * points);
  idx.b.reserve(features * points);
  for (std::size_t d = 0; d < features; ++d)
    for (std::size_t j = 0; j < points; ++j) {
      idx.a.push_back(static_cast<std::uint32_t>(d));
      idx.b.push_back(static_cast<std::uint32_t>(j));
    }
  return idx;
}

void check_dims(const ObservationSeries& obs, const MgpTensors& params) {
  if (obs.feature_count() != params.dim()) {
    throw ShapeError("patient " + obs.patient_id + " has " + std::to_string(obs.feature_count()) +
                     " features but the GP has " + std::to_string(params.dim()));
  }
  if (obs.observation_count() == 0) {
    throw DataError("patient " + obs.patient_id + " has no observations");
  }
}

// Observed covariance factor and the grid cross-covariance, shared by the
// posterior and the pathwise sampler.
struct Conditioning {
  ObservedIndex index;
  Tensor task_cov;
  Tensor observed_factor;  // chol(Sigma_O)
  Tensor cross;            // K_XO, (X*D) x n
};

Conditioning condition(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params,
                       double observed_jitter) {
  check_dims(obs, params);
  Conditioning c;
  c.index = ObservedIndex::from(obs);
  c.task_cov = task_covariance(params);
  const Tensor k_tt = ops::se_kernel(c.index.times, c.index.times, params.log_length_scale);
  const Tensor k_obs = ops::kron_select(c.task_cov, k_tt, c.index.pairs, c.index.pairs);
  const Tensor noise = ops::gather(ops::exp(params.log_noise), c.index.feature_of, {c.index.values.size()});
  const Tensor sigma_o = ops::add_diag(k_obs, noise);
  c.observed_factor =
      ops::cholesky_jittered(sigma_o, observed_jitter, "observed covariance of patient " + obs.patient_id)
          .factor;
  const Tensor k_xt = ops::se_kernel(grid.points, c.index.times, params.log_length_scale);
  c.cross = ops::kron_select(c.task_cov, k_xt, grid_pairs(params.dim(), grid.size()), c.index.pairs);
  return c;
}

}  // namespace

std::size_t ObservationSeries::observation_count() const {
  std::size_t n = 0;
  for (const auto& f : features) n += f.size();
  return n;
}

void ObservationSeries::validate(double period_end_h) const {
  if (observation_count() == 0) throw DataError("patient " + patient_id + " has no observations");
  for (std::size_t d = 0; d < features.size(); ++d) {
    const auto& f = features[d];
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!std::isfinite(f[i].value) || !std::isfinite(f[i].time_h))
        throw DataError("patient " + patient_id + ": non-finite observation in feature " + std::to_string(d));
      if (f[i].time_h < 0.0 || f[i].time_h >= period_end_h)
        throw DataError("patient " + patient_id + ": observation time outside the study period");
      if (i > 0 && !(f[i].time_h > f[i - 1].time_h))
        throw DataError("patient " + patient_id + ": times not strictly increasing in feature " +
                        std::to_string(d));
    }
  }
}

TimeGrid TimeGrid::window_centres(std::size_t count, double width) {
  TimeGrid g;
  g.width = width;
  g.points.reserve(count);
  for (std::size_t j = 1; j <= count; ++j) g.points.push_back((static_cast<double>(j) - 0.5) * width);
  g.validate();
  return g;
}

void TimeGrid::validate() const {
  if (points.size() < 2) throw DataError("time grid needs at least two points");
  if (!(width > 0.0)) throw DataError("time grid width must be positive");
  for (std::size_t j = 1; j < points.size(); ++j) {
    if (std::abs(points[j] - points[j - 1] - width) > 1e-12 * width)
      throw DataError("time grid is not evenly spaced");
  }
}

MgpParameters MgpParameters::initial(std::size_t dim) {
  MgpParameters p;
  p.dim = dim;
  p.task_factor_raw.assign(dim * dim, 0.0);
  p.log_noise.assign(dim, std::log(0.1));
  p.log_length_scale = std::log(12.0);
  return p;
}

MgpParameters MgpParameters::from_factor(const std::vector<double>& lower, std::vector<double> noise_variance,
                                         double length_scale) {
  const std::size_t dim = noise_variance.size();
  if (lower.size() != dim * dim) throw ShapeError("task factor does not match noise dimension");
  MgpParameters p;
  p.dim = dim;
  p.task_factor_raw.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) p.task_factor_raw[i * dim + j] = lower[i * dim + j];
    if (!(lower[i * dim + i] > 0.0)) throw DomainError("task factor diagonal must be positive");
    p.task_factor_raw[i * dim + i] = std::log(lower[i * dim + i]);
  }
  for (double& v : noise_variance) {
    if (!(v > 0.0)) throw DomainError("noise variance must be positive");
    v = std::log(v);
  }
  p.log_noise = std::move(noise_variance);
  if (!(length_scale > 0.0)) throw DomainError("length scale must be positive");
  p.log_length_scale = std::log(length_scale);
  return p;
}

std::vector<double> MgpParameters::task_factor() const {
  std::vector<double> l(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) l[i * dim + j] = task_factor_raw[i * dim + j];
    l[i * dim + i] = std::exp(task_factor_raw[i * dim + i]);
  }
  return l;
}

std::vector<double> MgpParameters::task_covariance() const {
  const auto l = task_factor();
  std::vector<double> k(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t p = 0; p <= std::min(i, j); ++p) k[i * dim + j] += l[i * dim + p] * l[j * dim + p];
  return k;
}

MgpParameters MgpParameters::without_feature(std::size_t d) const {
  if (d >= dim) throw DataError("feature index out of range");
  MgpParameters p;
  p.dim = dim - 1;
  p.log_length_scale = log_length_scale;
  for (std::size_t i = 0; i < dim; ++i) {
    if (i == d) continue;
    p.log_noise.push_back(log_noise[i]);
    for (std::size_t j = 0; j < dim; ++j)
      if (j != d) p.task_factor_raw.push_back(task_factor_raw[i * dim + j]);
  }
  return p;
}

MgpTensors MgpTensors::constant(const MgpParameters& p) {
  return {Tensor::matrix(p.dim, p.dim, p.task_factor_raw), Tensor::vector(p.log_noise),
          Tensor::scalar(p.log_length_scale)};
}

MgpTensors MgpTensors::leaves(const MgpParameters& p) {
  return {Tensor::matrix(p.dim, p.dim, p.task_factor_raw, true), Tensor::vector(p.log_noise, true),
          Tensor::scalar(p.log_length_scale, true)};
}

std::vector<double> se_kernel_matrix(std::span<const double> times_a, std::span<const double> times_b,
                                     double length_scale) {
  if (!(length_scale > 0.0)) throw DomainError("squared-exponential kernel needs a positive length scale");
  std::vector<double> k(times_a.size() * times_b.size());
  const double inv = 1.0 / (2.0 * length_scale * length_scale);
  for (std::size_t p = 0; p < times_a.size(); ++p)
    for (std::size_t q = 0; q < times_b.size(); ++q) {
      const double d = times_a[p] - times_b[q];
      k[p * times_b.size() + q] = std::exp(-d * d * inv);
    }
  return k;
}

Tensor task_covariance(const MgpTensors& params) {
  const Tensor l = ops::lower_exp_diag(params.task_factor_raw);
  return ops::matmul_nt(l, l);
}

ObservedIndex ObservedIndex::from(const ObservationSeries& obs) {
  ObservedIndex idx;
  for (const auto& f : obs.features)
    for (const auto& o : f) idx.times.push_back(o.time_h);
  std::sort(idx.times.begin(), idx.times.end());
  idx.times.erase(std::unique(idx.times.begin(), idx.times.end()), idx.times.end());
  for (std::size_t d = 0; d < obs.features.size(); ++d) {
    for (const auto& o : obs.features[d]) {
      idx.pairs.a.push_back(static_cast<std::uint32_t>(d));
      idx.pairs.b.push_back(index_of(idx.times, o.time_h));
      idx.values.push_back(o.value);
      idx.feature_of.push_back(static_cast<std::uint32_t>(d));
    }
  }
  return idx;
}

Tensor observed_covariance(const ObservationSeries& obs, const MgpTensors& params) {
  check_dims(obs, params);
  const ObservedIndex idx = ObservedIndex::from(obs);
  const Tensor kd = task_covariance(params);
  const Tensor kt = ops::se_kernel(idx.times, idx.times, params.log_length_scale);
  const Tensor k = ops::kron_select(kd, kt, idx.pairs, idx.pairs);
  const Tensor noise = ops::gather(ops::exp(params.log_noise), idx.feature_of, {idx.values.size()});
  return ops::add_diag(k, noise);
}

PosteriorGrid posterior(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params,
                        const PosteriorOptions& options) {
  grid.validate();
  const Conditioning c = condition(obs, grid, params, options.observed_jitter);
  const std::size_t n = c.index.values.size();
  const std::size_t big = params.dim() * grid.size();

  const Tensor y = Tensor::vector(c.index.values);
  const Tensor alpha = ops::tri_solve(c.observed_factor, ops::tri_solve(c.observed_factor, y), true);
  const Tensor mean = ops::reshape(ops::matmul(c.cross, ops::reshape(alpha, {n, 1})), {big});

  const Tensor a = ops::tri_solve(c.observed_factor, ops::transpose(c.cross));  // n x (X*D)
  const Tensor k_xx = ops::se_kernel(grid.points, grid.points, params.log_length_scale);
  const auto gp = grid_pairs(params.dim(), grid.size());
  const Tensor prior = ops::kron_select(c.task_cov, k_xx, gp, gp);
  const Tensor cov = ops::sub(prior, ops::matmul_tn(a, a));

  const double jitter = options.covariance_jitter < 0.0 ? ops::default_jitter(cov) : options.covariance_jitter;
  auto chol = ops::cholesky_jittered(cov, jitter, "posterior covariance of patient " + obs.patient_id);

  PosteriorGrid post;
  post.mean = mean;
  post.covariance = cov;
  post.factor = chol.factor;
  post.jitter = chol.jitter;
  post.grid = grid;
  post.features = params.dim();
  return post;
}

Tensor posterior_mean(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params) {
  grid.validate();
  const Conditioning c = condition(obs, grid, params, 0.0);
  const std::size_t n = c.index.values.size();
  const Tensor y = Tensor::vector(c.index.values);
  const Tensor alpha = ops::tri_solve(c.observed_factor, ops::tri_solve(c.observed_factor, y), true);
  return ops::reshape(ops::matmul(c.cross, ops::reshape(alpha, {n, 1})), {params.dim() * grid.size()});
}

Tensor sample_posterior(const PosteriorGrid& post, const Tensor& eps) {
  const std::size_t big = post.mean.size();
  if (eps.rows() != big || eps.rank() > 2) {
    throw ShapeError("sample_posterior: noise draw must have " + std::to_string(big) + " rows");
  }
  if (eps.rank() <= 1) {
    const Tensor shift = ops::matmul(post.factor, ops::reshape(eps, {big, 1}));
    return ops::add(post.mean, ops::reshape(shift, {big}));
  }
  const std::size_t s = eps.cols();
  const Tensor tiled = ops::matmul(ops::reshape(post.mean, {big, 1}),
                                   Tensor::matrix(1, s, std::vector<double>(s, 1.0)));
  return ops::add(tiled, ops::matmul(post.factor, eps));
}

std::vector<double> pathwise_support(const ObservationSeries& obs, const TimeGrid& grid) {
  std::vector<double> u = grid.points;
  for (const auto& f : obs.features)
    for (const auto& o : f) u.push_back(o.time_h);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

Tensor sample_pathwise(const ObservationSeries& obs, const TimeGrid& grid, const MgpTensors& params,
                       const PathwiseDraws& draws) {
  grid.validate();
  const Conditioning c = condition(obs, grid, params, 0.0);
  const std::size_t dim = params.dim();
  const std::size_t x = grid.size();
  const std::size_t n = c.index.values.size();
  const std::size_t s = draws.samples;
  const std::vector<double> support = pathwise_support(obs, grid);
  const std::size_t u = support.size();
  if (s == 0 || draws.prior.size() != u * s * dim || draws.noise.size() != n * s) {
    throw ShapeError("sample_pathwise: draw sizes do not match the patient layout");
  }

  const Tensor k_uu = ops::se_kernel(support, support, params.log_length_scale);
  const Tensor l_u =
      ops::cholesky_jittered(k_uu, ops::default_jitter(k_uu), "prior kernel of patient " + obs.patient_id).factor;
  const Tensor l_d = ops::lower_exp_diag(params.task_factor_raw);

  // Prior draw F_s = L_U E_s L_D^T for every sample at once.
  const Tensor left = ops::matmul(l_u, Tensor::matrix(u, s * dim, draws.prior));
  const Tensor prior = ops::matmul_nt(ops::reshape(left, {u * s, dim}), l_d);  // row u*S + s, col d

  std::vector<std::uint32_t> grid_at(x * dim * s), obs_at(n * s);
  for (std::size_t d = 0; d < dim; ++d)
    for (std::size_t j = 0; j < x; ++j) {
      const std::uint32_t uj = index_of(support, grid.points[j]);
      for (std::size_t k = 0; k < s; ++k)
        grid_at[(d * x + j) * s + k] = static_cast<std::uint32_t>((uj * s + k) * dim + d);
    }
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint32_t up = index_of(support, c.index.times[c.index.pairs.b[p]]);
    const std::size_t d = c.index.feature_of[p];
    for (std::size_t k = 0; k < s; ++k)
      obs_at[p * s + k] = static_cast<std::uint32_t>((up * s + k) * dim + d);
  }
  const Tensor f_grid = ops::gather(prior, std::move(grid_at), {x * dim, s});
  const Tensor f_obs = ops::gather(prior, std::move(obs_at), {n, s});

  const Tensor noise_sd = ops::gather(ops::exp(ops::mul_scalar(params.log_noise, 0.5)), c.index.feature_of, {n});
  const Tensor noise = ops::scale_rows(Tensor::matrix(n, s, draws.noise), noise_sd);

  std::vector<double> ys(n * s);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t k = 0; k < s; ++k) ys[p * s + k] = c.index.values[p];
  const Tensor resid = ops::sub(ops::sub(Tensor::matrix(n, s, std::move(ys)), f_obs), noise);
  const Tensor beta = ops::tri_solve(c.observed_factor, ops::tri_solve(c.observed_factor, resid), true);
  return ops::add(f_grid, ops::matmul(c.cross, beta));
}

}  // namespace mgpms::mgp
