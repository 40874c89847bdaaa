#include "mgpms/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>

#include "mgpms/eval/metrics.hpp"
#include "mgpms/rng.hpp"
#include "mgpms/tensor/ops.hpp"

namespace mgpms::train {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (mc_samples == 0) throw ConfigError("mc_samples must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(l2_weight >= 0.0)) throw ConfigError("l2_weight must be non-negative");
  if (!(pos_weight > 0.0)) throw ConfigError("pos_weight must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
}

double lr_at_epoch(const TrainConfig& config, std::size_t epoch) {
  return config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch));
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr, double l2,
               std::span<const double> mask) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("Adam parameter, gradient and state sizes differ");
  if (!mask.empty() && mask.size() != params.size()) throw ShapeError("decay mask size differs from parameters");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i])) throw NumericError("non-finite gradient at parameter index " + std::to_string(i));
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double c2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + (mask.empty() ? 0.0 : l2 * mask[i] * params[i]);
    state.m[i] = AdamState::kBeta1 * state.m[i] + (1.0 - AdamState::kBeta1) * g;
    state.v[i] = AdamState::kBeta2 * state.v[i] + (1.0 - AdamState::kBeta2) * g * g;
    params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + AdamState::kEps);
  }
}

Tensor mc_loss_tensor(const BoundParameters& bound, const net::NetworkConfig& c, const mgp::TimeGrid& grid,
                      const std::vector<std::uint64_t>& keys, const data::WindowedPatient& p, const LossOptions& o) {
  if (p.label != 0 && p.label != 1) throw DomainError("patient " + p.id + " has a non-binary label");
  const auto gp = model::mgp_tensors(bound);
  const Tensor z =
      model::sample_network_input(p.series, grid, gp, o.sampler, keys, o.mc_samples, o.noise.seed, o.noise.stream);
  const Tensor meds = Tensor::matrix(o.mc_samples * c.grid, c.medications, net::tile_rows(p.meds, o.mc_samples));
  Rng rng = Rng::keyed(o.noise.seed, {o.noise.stream, hash_key(p.id), hash_key("dropout")});
  net::ForwardContext ctx{o.dropout > 0.0, o.dropout, &rng};
  const Tensor logits = net::forward_scores(z, meds, Tensor::vector(p.demographics), bound, c, ctx);
  return ops::bce_with_logits_mean(logits, static_cast<double>(p.label), o.pos_weight);
}

namespace {

constexpr std::size_t kGpArrays = 3;

std::size_t gp_scalar_count(const ParameterStore& joint) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < kGpArrays; ++i) n += joint.arrays()[i].values.size();
  return n;
}

std::optional<double> final_window_auc(const model::ModelBundle& b, const std::vector<data::WindowedPatient>& val,
                                       double& loss) {
  std::vector<int> labels;
  std::vector<double> scores;
  double total = 0.0;
  for (const auto& p : val) {
    const auto logits = model::mean_path_logits(b, p);
    for (double s : logits) total += std::max(s, 0.0) - s * p.label + std::log1p(std::exp(-std::abs(s)));
    labels.push_back(p.label);
    scores.push_back(logits.back());
  }
  loss = val.empty() ? 0.0 : total / static_cast<double>(val.size() * b.net.config.grid);
  if (std::count(labels.begin(), labels.end(), 1) == 0 || std::count(labels.begin(), labels.end(), 0) == 0)
    return std::nullopt;
  return eval::auc(labels, scores);
}

}  // namespace

LossAndGrad mc_loss(const ParameterStore& joint, const net::NetworkConfig& c, const mgp::TimeGrid& grid,
                    const std::vector<std::uint64_t>& keys, const data::WindowedPatient& p, const LossOptions& o) {
  const BoundParameters bound(joint, true);
  const Tensor loss = mc_loss_tensor(bound, c, grid, keys, p, o);
  loss.backward();
  return {loss.item(), bound.flat_grad()};
}

double mc_loss_value(const ParameterStore& joint, const net::NetworkConfig& c, const mgp::TimeGrid& grid,
                     const std::vector<std::uint64_t>& keys, const data::WindowedPatient& p, const LossOptions& o) {
  const BoundParameters bound(joint, false);
  return mc_loss_tensor(bound, c, grid, keys, p, o).item();
}

std::string EpochLog::to_line() const {
  Json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["train_loss"] = train_loss;
  j["val_auc"] = val_auc ? Json(*val_auc) : Json(nullptr);
  j["val_loss"] = val_loss;
  j["theta_grad_norm"] = theta_grad_norm;
  return j.dump();
}

double mean_path_loss(const model::ModelBundle& b, const std::vector<data::WindowedPatient>& patients) {
  double loss = 0.0;
  final_window_auc(b, patients, loss);
  return loss;
}

FitResult fit(const model::ModelBundle& initial, const std::vector<data::WindowedPatient>& patients,
              const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto labels = data::labels_of(patients);
  std::vector<std::size_t> train_idx, val_idx;
  if (config.validation_fraction > 0.0) {
    const std::uint64_t split_seed = Rng::keyed(config.seed, {hash_key("validation")}).next_u64();
    const auto sp = data::split(labels, 1.0 - config.validation_fraction, split_seed);
    train_idx = sp.train;
    val_idx = sp.test;
  } else {
    for (std::size_t i = 0; i < patients.size(); ++i) train_idx.push_back(i);
  }
  std::size_t train_pos = 0;
  for (std::size_t i : train_idx) train_pos += labels[i] == 1;
  if (train_pos == 0 || train_pos == train_idx.size())
    throw DataError("training split needs patients of both classes");

  FitResult result;
  result.bundle = initial;
  std::vector<data::WindowedPatient> val;
  for (std::size_t i : val_idx) {
    val.push_back(patients[i]);
    result.validation_ids.push_back(patients[i].id);
  }

  ParameterStore store = model::joint_store(initial.mgp, initial.net);
  std::vector<double> flat = store.flatten();
  const std::vector<double> mask = store.decay_mask();
  const std::size_t theta_count = gp_scalar_count(store);
  AdamState adam(flat.size());
  const auto grid = initial.cohort.grid();
  const auto keys = initial.feature_keys();
  const auto& net_config = initial.net.config;
  model::ModelBundle last_good = initial;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr_at_epoch(config, epoch);

    std::vector<std::size_t> order = train_idx;
    Rng shuffle = Rng::keyed(config.seed, {hash_key("batches"), epoch});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    LossOptions options;
    options.mc_samples = config.mc_samples;
    options.sampler = config.sampler;
    options.dropout = config.dropout;
    options.pos_weight = config.pos_weight;
    options.noise = {config.seed, Rng::keyed(config.seed, {hash_key("train"), epoch}).next_u64()};

    double loss_sum = 0.0;
    double theta_norm_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<LossAndGrad> parts(count);
      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(count); ++k) {
        try {
          parts[static_cast<std::size_t>(k)] =
              mc_loss(store, net_config, grid, keys, patients[order[start + static_cast<std::size_t>(k)]], options);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) {
        try {
          std::rethrow_exception(failure);
        } catch (const NumericError& e) {
          throw TrainingDiverged(std::string(e.what()) + " in epoch " + std::to_string(epoch), last_good);
        } catch (const FactorizationError& e) {
          throw TrainingDiverged(std::string(e.what()) + " in epoch " + std::to_string(epoch), last_good);
        }
      }

      double batch_loss = 0.0;
      std::vector<double> grad(flat.size(), 0.0);
      for (const auto& part : parts) {
        batch_loss += part.loss;
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += part.grad[i];
      }
      const double inv = 1.0 / static_cast<double>(count);
      batch_loss *= inv;
      for (double& g : grad) g *= inv;
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch), last_good);
      try {
        adam_step(flat, grad, adam, entry.lr, config.l2_weight, mask);
      } catch (const NumericError& e) {
        throw TrainingDiverged(std::string(e.what()) + " in epoch " + std::to_string(epoch), last_good);
      }
      store.unflatten(flat);
      double theta_sq = 0.0;
      for (std::size_t i = 0; i < theta_count; ++i) theta_sq += grad[i] * grad[i];
      theta_norm_sum += std::sqrt(theta_sq);
      loss_sum += batch_loss * static_cast<double>(count);
      ++batches;
    }

    model::unpack_joint(store, result.bundle.mgp, result.bundle.net);
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.theta_grad_norm = theta_norm_sum / static_cast<double>(batches);
    entry.val_auc = final_window_auc(result.bundle, val, entry.val_loss);
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    last_good = result.bundle;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

}  // namespace mgpms::train
