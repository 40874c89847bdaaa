#include "mgpms/model/model.hpp"

#include <cmath>

#include "mgpms/error.hpp"
#include "mgpms/rng.hpp"
#include "mgpms/tensor/ops.hpp"

namespace mgpms::model {

namespace {

constexpr const char* kFormat = "mgpms-checkpoint";

Json network_config_json(const net::NetworkConfig& c) {
  return {{"features", c.features}, {"medications", c.medications}, {"demographics", c.demographics},
          {"grid", c.grid},         {"embed", c.embed},             {"ffn", c.ffn},
          {"layers", c.layers},     {"heads", c.heads},             {"dropout", c.dropout}};
}

net::NetworkConfig network_config_from(const Json& j) {
  net::NetworkConfig c;
  c.features = j.at("features").get<std::size_t>();
  c.medications = j.at("medications").get<std::size_t>();
  c.demographics = j.at("demographics").get<std::size_t>();
  c.grid = j.at("grid").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

// Rows s*X + j, column d of the network input from sample columns of z
// (row d*X + j, column s).
std::vector<std::uint32_t> sample_layout(std::size_t x, std::size_t d, std::size_t s) {
  std::vector<std::uint32_t> idx(s * x * d);
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t j = 0; j < x; ++j)
      for (std::size_t f = 0; f < d; ++f)
        idx[(k * x + j) * d + f] = static_cast<std::uint32_t>((f * x + j) * s + k);
  return idx;
}

double sigmoid(double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

}  // namespace

std::vector<std::string> ModelBundle::input_keys() const {
  std::vector<std::string> k = manifest.features;
  for (const auto& m : manifest.medications) k.push_back("med:" + m);
  return k;
}

std::vector<std::uint64_t> ModelBundle::feature_keys() const {
  std::vector<std::uint64_t> k;
  for (const auto& f : manifest.features) k.push_back(hash_key(f));
  return k;
}

ParameterStore joint_store(const mgp::MgpParameters& gp, const net::NetworkParameters& net) {
  ParameterStore store;
  const std::size_t d = gp.dim;
  store.add("mgp.task_factor_raw", {d, d}, gp.task_factor_raw);
  auto& factor = store.get("mgp.task_factor_raw");
  factor.element_decay.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) factor.element_decay[i * d + j] = 1.0;
  store.add("mgp.log_noise", {d}, gp.log_noise, false);
  store.add("mgp.log_length_scale", {}, {gp.log_length_scale}, false);
  for (const auto& a : net.store.arrays()) store.add(a.name, a.shape, a.values, a.decay);
  return store;
}

void unpack_joint(const ParameterStore& store, mgp::MgpParameters& gp, net::NetworkParameters& net) {
  gp.task_factor_raw = store.get("mgp.task_factor_raw").values;
  gp.log_noise = store.get("mgp.log_noise").values;
  gp.log_length_scale = store.get("mgp.log_length_scale").values.at(0);
  for (auto& a : net.store.arrays()) a.values = store.get(a.name).values;
}

mgp::MgpTensors mgp_tensors(const BoundParameters& bound) {
  return {bound["mgp.task_factor_raw"], bound["mgp.log_noise"], bound["mgp.log_length_scale"]};
}

ModelBundle initial_model(const data::Manifest& manifest, const data::CohortConfig& cohort,
                          const net::NetworkConfig& net_config, std::uint64_t seed) {
  manifest.validate();
  cohort.validate();
  ModelBundle b;
  b.manifest = manifest;
  b.cohort = cohort;
  b.standardization.mean.assign(manifest.features.size(), 0.0);
  b.standardization.sd.assign(manifest.features.size(), 1.0);
  b.mgp = mgp::MgpParameters::initial(manifest.features.size());
  net::NetworkConfig c = net_config;
  c.features = manifest.features.size();
  c.medications = manifest.medications.size();
  c.demographics = manifest.demographics.size();
  c.grid = cohort.windows;
  b.net = net::NetworkParameters::initialize(c, b.input_keys(), seed);
  return b;
}

Json checkpoint_json(const ModelBundle& b) {
  Json j;
  j["format"] = kFormat;
  j["version"] = kCheckpointVersion;
  j["cohort"] = {{"study_period_h", b.cohort.study_period_h},
                 {"window_h", b.cohort.window_h},
                 {"windows", b.cohort.windows}};
  j["manifest"] = data::to_json(b.manifest);
  j["standardization"] = {{"mean", b.standardization.mean}, {"sd", b.standardization.sd}};
  j["network"] = network_config_json(b.net.config);
  Json params = Json::array();
  const ParameterStore store = joint_store(b.mgp, b.net);
  for (const auto& a : store.arrays()) params.push_back({{"name", a.name}, {"shape", a.shape}, {"values", a.values}});
  j["parameters"] = std::move(params);
  j["run_config"] = b.run_config;
  j["test_ids"] = b.test_ids;
  return j;
}

ModelBundle bundle_from_json(const Json& j) {
  try {
    if (j.value("format", std::string()) != kFormat) throw DataError("not a model checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw DataError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    ModelBundle b;
    b.manifest = data::manifest_from_json(j.at("manifest"));
    const auto& c = j.at("cohort");
    b.cohort.study_period_h = c.at("study_period_h").get<double>();
    b.cohort.window_h = c.at("window_h").get<double>();
    b.cohort.windows = c.at("windows").get<std::size_t>();
    b.cohort.validate();
    b.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    b.standardization.sd = j.at("standardization").at("sd").get<std::vector<double>>();
    const auto config = network_config_from(j.at("network"));
    if (config.features != b.manifest.features.size() || config.grid != b.cohort.windows)
      throw DataError("checkpoint network does not match its manifest or grid");
    b.net = net::NetworkParameters::initialize(config, b.input_keys(), 0);
    b.mgp = mgp::MgpParameters::initial(config.features);
    ParameterStore store = joint_store(b.mgp, b.net);
    const auto& params = j.at("parameters");
    if (params.size() != store.arrays().size()) throw DataError("checkpoint parameter list has the wrong length");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& a = store.arrays()[i];
      if (params[i].at("name").get<std::string>() != a.name) throw DataError("unexpected parameter " + a.name);
      auto values = params[i].at("values").get<std::vector<double>>();
      if (values.size() != a.values.size()) throw DataError("parameter " + a.name + " has the wrong size");
      a.values = std::move(values);
    }
    unpack_joint(store, b.mgp, b.net);
    b.run_config = j.value("run_config", Json::object());
    b.test_ids = j.value("test_ids", std::vector<std::string>{});
    return b;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
  data::write_text(path, checkpoint_json(bundle).dump() + "\n");
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(data::read_text(path));
  } catch (const Json::exception&) {
    throw DataError("checkpoint " + path.string() + " is not valid JSON");
  }
  return bundle_from_json(j);
}

mgp::PathwiseDraws pathwise_draws(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid,
                                  const std::vector<std::uint64_t>& feature_keys, std::size_t samples,
                                  std::uint64_t seed, std::uint64_t stream) {
  const std::size_t d = obs.feature_count();
  if (feature_keys.size() != d) throw ShapeError("one key per feature required");
  const std::size_t u = mgp::pathwise_support(obs, grid).size();
  const std::uint64_t pid = hash_key(obs.patient_id);
  mgp::PathwiseDraws draws;
  draws.samples = samples;
  draws.prior.resize(u * samples * d);
  for (std::size_t f = 0; f < d; ++f) {
    Rng rng = Rng::keyed(seed, {stream, pid, feature_keys[f], hash_key("prior")});
    for (std::size_t r = 0; r < u; ++r)
      for (std::size_t s = 0; s < samples; ++s) draws.prior[r * samples * d + s * d + f] = rng.normal();
  }
  // Observation entries are ordered by feature, then time.
  for (std::size_t f = 0; f < d; ++f) {
    Rng rng = Rng::keyed(seed, {stream, pid, feature_keys[f], hash_key("noise")});
    for (std::size_t k = 0; k < obs.features[f].size(); ++k)
      for (std::size_t s = 0; s < samples; ++s) draws.noise.push_back(rng.normal());
  }
  return draws;
}

std::vector<double> grid_draws(std::size_t grid_points, const std::vector<std::uint64_t>& feature_keys,
                               std::size_t samples, std::uint64_t seed, std::uint64_t stream) {
  const std::size_t d = feature_keys.size();
  std::vector<double> eps(d * grid_points * samples);
  for (std::size_t f = 0; f < d; ++f) {
    Rng rng = Rng::keyed(seed, {stream, feature_keys[f], hash_key("grid")});
    for (std::size_t j = 0; j < grid_points; ++j)
      for (std::size_t s = 0; s < samples; ++s) eps[(f * grid_points + j) * samples + s] = rng.normal();
  }
  return eps;
}

Sampler parse_sampler(const std::string& name) {
  if (name == "pathwise") return Sampler::Pathwise;
  if (name == "cholesky") return Sampler::Cholesky;
  throw ConfigError("unknown sampler '" + name + "' (expected pathwise or cholesky)");
}

std::string sampler_name(Sampler s) { return s == Sampler::Pathwise ? "pathwise" : "cholesky"; }

Tensor sample_network_input(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid,
                            const mgp::MgpTensors& params, Sampler sampler,
                            const std::vector<std::uint64_t>& feature_keys, std::size_t samples,
                            std::uint64_t seed, std::uint64_t stream) {
  const std::size_t x = grid.size();
  const std::size_t d = params.dim();
  if (obs.observation_count() == 0) return Tensor::zeros({samples * x, d});
  Tensor z;
  if (sampler == Sampler::Pathwise) {
    z = mgp::sample_pathwise(obs, grid, params, pathwise_draws(obs, grid, feature_keys, samples, seed, stream));
  } else {
    const auto post = mgp::posterior(obs, grid, params);
    const auto eps = grid_draws(x, feature_keys, samples, seed, stream ^ hash_key(obs.patient_id));
    z = mgp::sample_posterior(post, Tensor::matrix(x * d, samples, eps));
  }
  return ops::gather(z, sample_layout(x, d, samples), {samples * x, d});
}

Tensor mean_network_input(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid,
                          const mgp::MgpTensors& params) {
  const std::size_t x = grid.size();
  const std::size_t d = params.dim();
  if (obs.observation_count() == 0) return Tensor::zeros({x, d});
  const Tensor mean = mgp::posterior_mean(obs, grid, params);
  return ops::gather(mean, sample_layout(x, d, 1), {x, d});
}

mgp::ObservationSeries observed_until(const mgp::ObservationSeries& obs, const mgp::TimeGrid& grid, std::size_t j) {
  const double end = static_cast<double>(j) * grid.width;
  mgp::ObservationSeries out;
  out.patient_id = obs.patient_id;
  out.features.resize(obs.features.size());
  for (std::size_t f = 0; f < obs.features.size(); ++f)
    for (const auto& o : obs.features[f])
      if (o.time_h < end) out.features[f].push_back(o);
  return out;
}

namespace {

std::vector<double> scores_for(const ModelBundle& b, const BoundParameters& bound, const data::WindowedPatient& p,
                               const Tensor& z, std::size_t copies) {
  const auto& c = b.net.config;
  net::ForwardContext ctx;
  const Tensor meds = Tensor::matrix(copies * c.grid, c.medications, net::tile_rows(p.meds, copies));
  return net::forward_scores(z, meds, Tensor::vector(p.demographics), bound, c, ctx).to_vector();
}

}  // namespace

std::vector<double> mean_path_logits(const ModelBundle& b, const data::WindowedPatient& p) {
  const BoundParameters bound(b.net.store, false);
  const auto gp = mgp::MgpTensors::constant(b.mgp);
  return scores_for(b, bound, p, mean_network_input(p.series, b.cohort.grid(), gp), 1);
}

PatientPrediction predict(const ModelBundle& b, const data::WindowedPatient& p, const PredictOptions& o) {
  const auto grid = b.cohort.grid();
  const auto& c = b.net.config;
  if (p.series.feature_count() != c.features || p.meds.size() != c.grid * c.medications ||
      p.demographics.size() != c.demographics)
    throw ShapeError("patient " + p.id + " does not match the model's vocabulary or grid");
  const BoundParameters bound(b.net.store, false);
  const auto gp = mgp::MgpTensors::constant(b.mgp);
  PatientPrediction out;
  out.id = p.id;
  out.label = p.label;
  out.logits.resize(c.grid);
  out.probabilities.resize(c.grid);
  if (!o.online) {
    out.logits = scores_for(b, bound, p, mean_network_input(p.series, grid, gp), 1);
  } else {
    for (std::size_t j = 1; j <= c.grid; ++j) {
      const auto seen = observed_until(p.series, grid, j);
      out.logits[j - 1] = scores_for(b, bound, p, mean_network_input(seen, grid, gp), 1)[j - 1];
    }
  }
  for (std::size_t j = 0; j < c.grid; ++j) out.probabilities[j] = sigmoid(out.logits[j]);

  if (o.mc_samples > 0) {
    out.mc_probability.assign(c.grid, 0.0);
    const auto keys = b.feature_keys();
    const std::uint64_t stream = hash_key("predict");
    auto accumulate = [&](const mgp::ObservationSeries& series, std::size_t only) {
      if (series.observation_count() == 0) {
        const auto s = scores_for(b, bound, p, Tensor::zeros({c.grid, c.features}), 1);
        for (std::size_t j = 0; j < c.grid; ++j)
          if (only == 0 || j + 1 == only) out.mc_probability[j] = sigmoid(s[j]);
        return;
      }
      const Tensor z = sample_network_input(series, grid, gp, o.sampler, keys, o.mc_samples, o.seed, stream);
      const auto s = scores_for(b, bound, p, z, o.mc_samples);
      for (std::size_t j = 0; j < c.grid; ++j) {
        if (only != 0 && j + 1 != only) continue;
        double total = 0.0;
        for (std::size_t k = 0; k < o.mc_samples; ++k) total += sigmoid(s[k * c.grid + j]);
        out.mc_probability[j] = total / static_cast<double>(o.mc_samples);
      }
    };
    if (!o.online) {
      accumulate(p.series, 0);
    } else {
      for (std::size_t j = 1; j <= c.grid; ++j) accumulate(observed_until(p.series, grid, j), j);
    }
  }
  return out;
}

std::vector<PatientPrediction> predict_all(const ModelBundle& bundle, const std::vector<data::WindowedPatient>& patients,
                                           const PredictOptions& options) {
  std::vector<PatientPrediction> out(patients.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(patients.size()); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = predict(bundle, patients[static_cast<std::size_t>(i)], options);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace mgpms::model
