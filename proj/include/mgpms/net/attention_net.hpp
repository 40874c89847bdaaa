#pragma once

// Causal self-attention risk model: embedding + sinusoidal positions, a
// pre-norm encoder stack with causal masking, and a cumulative block readout
// s_j = sum_{k<=j} v_k . B_k + w . P.
//
// All entry points accept S stacked sequences (S*X rows) so Monte Carlo
// samples of one patient run through the network as a single batch.

#include <cstdint>
#include <string>
#include <vector>

#include "mgpms/net/parameters.hpp"
#include "mgpms/rng.hpp"
#include "mgpms/tensor/tensor.hpp"

namespace mgpms::net {

struct NetworkConfig {
  std::size_t features = 25;      // D
  std::size_t medications = 21;   // M
  std::size_t demographics = 25;  // F
  std::size_t grid = 17;          // X
  std::size_t embed = 32;         // E
  std::size_t ffn = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.3;

  void validate() const;
  std::size_t inputs() const { return features + medications; }
};

struct NetworkParameters {
  NetworkConfig config;
  ParameterStore store;

  /// Seeded initialization. Embedding row r is drawn from a stream keyed by
  /// input_keys[r] (feature/medication names), every other array from a
  /// stream keyed by its own name, so dropping an input leaves all other
  /// initial values unchanged.
  static NetworkParameters initialize(const NetworkConfig& config, const std::vector<std::string>& input_keys,
                                      std::uint64_t seed);

  /// Number of learned readout scalars (X*E + F).
  std::size_t readout_parameter_count() const;
};

struct PatientTensorInput {
  std::vector<double> z;             // X x D
  std::vector<double> medications;   // X x M, entries 0/1
  std::vector<double> demographics;  // F
};

struct RiskTrajectory {
  std::vector<double> logits;
  std::vector<double> probabilities() const;
};

struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when training with dropout > 0
};

/// PE(pos, 2k) = sin(pos / 10000^{2k/E}), PE(pos, 2k+1) = cos(same); X x E.
std::vector<double> positional_encoding(std::size_t positions, std::size_t width);

/// Row-wise linear map of [z | m] to E dimensions (no bias).
Tensor embed(const Tensor& z, const Tensor& medications, const BoundParameters& params);

/// Encoder stack over stacked sequences of length config.grid; final layer norm included.
Tensor encoder_forward(const Tensor& input, const BoundParameters& params, const NetworkConfig& config,
                       ForwardContext& ctx);

/// Block upper-triangular readout with the demographic offset.
Tensor output_scores(const Tensor& v, const Tensor& demographics, const BoundParameters& params);

/// embed -> + positions -> encoder -> readout. z is (S*X) x D, medications
/// (S*X) x M, demographics F; returns S*X logits.
Tensor forward_scores(const Tensor& z, const Tensor& medications, const Tensor& demographics,
                      const BoundParameters& params, const NetworkConfig& config, ForwardContext& ctx);

/// Inference on one imputed patient with dropout off.
RiskTrajectory forward(const PatientTensorInput& input, const NetworkParameters& params);

/// Repeats an X x M block S times.
std::vector<double> tile_rows(std::span<const double> block, std::size_t copies);

}  // namespace mgpms::net
