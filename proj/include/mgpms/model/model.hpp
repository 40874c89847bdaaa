#pragma once

// A trained model: vocabulary, grid, standardization, GP and network
// parameters, plus prediction over windowed patients.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgpms/data/cohort.hpp"
#include "mgpms/data/io.hpp"
#include "mgpms/mgp/mgp.hpp"
#include "mgpms/net/attention_net.hpp"
#include "mgpms/net/parameters.hpp"

namespace mgpms::model {

inline constexpr int kCheckpointVersion = 1;

struct ModelBundle {
  data::Manifest manifest;
  data::CohortConfig cohort;
  data::Standardization standardization;
  mgp::MgpParameters mgp;
  net::NetworkParameters net;
  Json run_config = Json::object();  // resolved configuration, for provenance
  std::vector<std::string> test_ids;

  /// Feature names followed by medication names, the network's input keys.
  std::vector<std::string> input_keys() const;
  std::vector<std::uint64_t> feature_keys() const;
};

/// GP arrays ("mgp.*") followed by the network arrays. L2 applies to the
/// network weights and the strictly-lower part of the task factor only.
ParameterStore joint_store(const mgp::MgpParameters& gp, const net::NetworkParameters& net);
void unpack_joint(const ParameterStore& store, mgp::MgpParameters& gp, net::NetworkParameters& net);

mgp::MgpTensors mgp_tensors(const BoundParameters& bound);

/// Fresh model for a manifest and grid.
ModelBundle initial_model(const data::Manifest& manifest, const data::CohortConfig& cohort,
                          const net::NetworkConfig& net_config, std::uint64_t seed);

// Checkpoint file (JSON); parameter values round-trip bit for bit.
Json checkpoint_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const Json& j);
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

/// Key-derived standard-normal draws, one stream per (feature, purpose), so
/// removing a feature leaves the draws of the others unchanged.
mgp::PathwiseDraws pathwise_draws(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid,
                                  const std::vector<std::uint64_t>& feature_keys, std::size_t samples,
                                  std::uint64_t seed, std::uint64_t stream);
/// (X*D) x S draws for the Cholesky sampler, row d*X + j.
std::vector<double> grid_draws(std::size_t grid_points, const std::vector<std::uint64_t>& feature_keys,
                               std::size_t samples, std::uint64_t seed, std::uint64_t stream);

enum class Sampler { Pathwise, Cholesky };
Sampler parse_sampler(const std::string& name);
std::string sampler_name(Sampler s);

/// Draws S posterior samples and lays them out as (S*X) x D network rows.
Tensor sample_network_input(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid,
                            const mgp::MgpTensors& params, Sampler sampler,
                            const std::vector<std::uint64_t>& feature_keys, std::size_t samples,
                            std::uint64_t seed, std::uint64_t stream);

/// Posterior mean laid out as X x D rows.
Tensor mean_network_input(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid,
                          const mgp::MgpTensors& params);

struct PredictOptions {
  std::size_t mc_samples = 50;
  std::uint64_t seed = 1;
  Sampler sampler = Sampler::Pathwise;
  /// Score window j from a posterior conditioned on windows <= j only.
  bool online = false;
};

struct PatientPrediction {
  std::string id;
  int label = 0;
  std::vector<double> logits;          // posterior-mean path
  std::vector<double> probabilities;   // sigmoid(logits)
  std::vector<double> mc_probability;  // mean of sigmoid over S posterior samples
};

/// `patient` must already be standardized. mc_samples == 0 skips the MC column.
PatientPrediction predict(const ModelBundle& bundle, const data::WindowedPatient& patient,
                          const PredictOptions& options);
std::vector<PatientPrediction> predict_all(const ModelBundle& bundle,
                                           const std::vector<data::WindowedPatient>& patients,
                                           const PredictOptions& options);

/// Mean-path logits only (no MC), used for validation and importance losses.
std::vector<double> mean_path_logits(const ModelBundle& bundle, const data::WindowedPatient& patient);

/// Observations restricted to windows 1..j.
mgp::ObservationSeries observed_until(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid, std::size_t j);

}  // namespace mgpms::model
