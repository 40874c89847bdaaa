#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgpms/data/cohort.hpp"
#include "mgpms/error.hpp"
#include "mgpms/model/model.hpp"

namespace mgpms::train {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 50;
  std::size_t mc_samples = 50;
  double learning_rate = 0.03;
  double lr_decay = 0.95;
  double dropout = 0.3;
  double l2_weight = 1e-5;
  double pos_weight = 1.0;
  double validation_fraction = 0.1;
  std::uint64_t seed = 1;
  model::Sampler sampler = model::Sampler::Pathwise;

  void validate() const;  // ConfigError
};

double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update in place. The L2 term l2 * mask[i] * w[i]
/// is added to the gradient first; an empty mask means no decay. Throws
/// NumericError, leaving params and state untouched, on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               double l2 = 0.0, std::span<const double> mask = {});

/// Which noise a loss evaluation uses. The same key set reproduces the same
/// draws and dropout masks.
struct NoiseKey {
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
};

struct LossOptions {
  std::size_t mc_samples = 1;
  model::Sampler sampler = model::Sampler::Pathwise;
  double dropout = 0.0;  // zero disables dropout
  double pos_weight = 1.0;
  NoiseKey noise;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // matches the joint store's flatten()
};

/// Mean cross-entropy over the S*X logits of one patient, the label repeated
/// at every window, with its gradient in the joint (GP then network) layout.
LossAndGrad mc_loss(const ParameterStore& joint, const net::NetworkConfig& net_config,
                    const mgp::TimeGrid& grid, const std::vector<std::uint64_t>& feature_keys,
                    const data::WindowedPatient& patient, const LossOptions& options);

/// The same loss as a graph over caller-bound joint parameters.
Tensor mc_loss_tensor(const BoundParameters& joint, const net::NetworkConfig& net_config, const mgp::TimeGrid& grid,
                      const std::vector<std::uint64_t>& feature_keys, const data::WindowedPatient& patient,
                      const LossOptions& options);

/// Loss value only, for finite differences and evaluation.
double mc_loss_value(const ParameterStore& joint, const net::NetworkConfig& net_config,
                     const mgp::TimeGrid& grid, const std::vector<std::uint64_t>& feature_keys,
                     const data::WindowedPatient& patient, const LossOptions& options);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_auc;  // final window, mean path
  double val_loss = 0.0;
  double theta_grad_norm = 0.0;   // epoch mean of the GP gradient norm
  double seconds = 0.0;

  std::string to_line() const;  // one JSON object
};

struct FitResult {
  model::ModelBundle bundle;
  std::vector<EpochLog> log;
  std::vector<std::string> validation_ids;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& message, model::ModelBundle last_good)
      : Error("diverged", message), last_good_(std::move(last_good)) {}
  const model::ModelBundle& last_good() const { return last_good_; }

 private:
  model::ModelBundle last_good_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Jointly trains the GP and network parameters of `initial` on standardized
/// patients. A slice of them is held out for the per-epoch validation AUC.
FitResult fit(const model::ModelBundle& initial, const std::vector<data::WindowedPatient>& patients,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean mean-path cross-entropy over patients (no MC, no dropout).
double mean_path_loss(const model::ModelBundle& bundle, const std::vector<data::WindowedPatient>& patients);

}  // namespace mgpms::train
