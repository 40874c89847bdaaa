#include "mgpms/net/attention_net.hpp"

#include <cmath>

#include "mgpms/error.hpp"
#include "mgpms/tensor/ops.hpp"

namespace mgpms::net {

namespace {

std::vector<double> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

std::string layer_name(std::size_t layer, const char* leaf) {
  return "layer" + std::to_string(layer) + "." + leaf;
}

Tensor dense(const Tensor& x, const BoundParameters& p, const std::string& weight, const std::string& bias) {
  return ops::add_row_vector(ops::matmul(x, p[weight]), p[bias]);
}

}  // namespace

void NetworkConfig::validate() const {
  if (features == 0 || grid < 2 || embed == 0 || ffn == 0 || layers == 0 || heads == 0)
    throw ConfigError("network dimensions must be positive (grid >= 2)");
  if (embed % 2 != 0) throw ConfigError("embedding size must be even for sinusoidal positions");
  if (embed % heads != 0) throw ConfigError("embedding size must be divisible by the head count");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

NetworkParameters NetworkParameters::initialize(const NetworkConfig& config,
                                                const std::vector<std::string>& input_keys, std::uint64_t seed) {
  config.validate();
  if (input_keys.size() != config.inputs()) throw ConfigError("one initialization key per network input required");
  const std::size_t e = config.embed;
  NetworkParameters net;
  net.config = config;
  auto stream = [seed](std::string_view name) { return Rng::keyed(seed, {hash_key("init"), hash_key(name)}); };

  std::vector<double> embedding;
  embedding.reserve(config.inputs() * e);
  const double embed_bound = std::sqrt(3.0 / static_cast<double>(e));
  for (const auto& key : input_keys) {
    Rng rng = Rng::keyed(seed, {hash_key("init.embed"), hash_key(key)});
    auto row = uniform_values(e, embed_bound, rng);
    embedding.insert(embedding.end(), row.begin(), row.end());
  }
  net.store.add("embed.weight", {config.inputs(), e}, std::move(embedding));

  const double attn_bound = std::sqrt(6.0 / static_cast<double>(2 * e));
  const double ffn_bound = std::sqrt(6.0 / static_cast<double>(e + config.ffn));
  for (std::size_t l = 0; l < config.layers; ++l) {
    net.store.add(layer_name(l, "ln1.scale"), {e}, std::vector<double>(e, 1.0));
    net.store.add(layer_name(l, "ln1.shift"), {e}, std::vector<double>(e, 0.0));
    for (const char* proj : {"attn.query", "attn.key", "attn.value", "attn.output"}) {
      const std::string w = layer_name(l, proj) + ".weight";
      Rng rng = stream(w);
      net.store.add(w, {e, e}, uniform_values(e * e, attn_bound, rng));
      net.store.add(layer_name(l, proj) + ".bias", {e}, std::vector<double>(e, 0.0));
    }
    net.store.add(layer_name(l, "ln2.scale"), {e}, std::vector<double>(e, 1.0));
    net.store.add(layer_name(l, "ln2.shift"), {e}, std::vector<double>(e, 0.0));
    {
      Rng rng = stream(layer_name(l, "ffn.in.weight"));
      net.store.add(layer_name(l, "ffn.in.weight"), {e, config.ffn}, uniform_values(e * config.ffn, ffn_bound, rng));
      net.store.add(layer_name(l, "ffn.in.bias"), {config.ffn}, std::vector<double>(config.ffn, 0.0));
    }
    {
      Rng rng = stream(layer_name(l, "ffn.out.weight"));
      net.store.add(layer_name(l, "ffn.out.weight"), {config.ffn, e}, uniform_values(config.ffn * e, ffn_bound, rng));
      net.store.add(layer_name(l, "ffn.out.bias"), {e}, std::vector<double>(e, 0.0));
    }
  }
  net.store.add("final_ln.scale", {e}, std::vector<double>(e, 1.0));
  net.store.add("final_ln.shift", {e}, std::vector<double>(e, 0.0));

  {
    Rng rng = stream("readout.blocks");
    const double sd = 1.0 / std::sqrt(static_cast<double>(e * config.grid));
    std::vector<double> blocks(config.grid * e);
    for (double& b : blocks) b = rng.normal(0.0, sd);
    net.store.add("readout.blocks", {config.grid, e}, std::move(blocks));
  }
  net.store.add("readout.demographics", {config.demographics}, std::vector<double>(config.demographics, 0.0));
  return net;
}

std::size_t NetworkParameters::readout_parameter_count() const {
  return store.get("readout.blocks").values.size() + store.get("readout.demographics").values.size();
}

std::vector<double> RiskTrajectory::probabilities() const {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return p;
}

std::vector<double> positional_encoding(std::size_t positions, std::size_t width) {
  if (width % 2 != 0) throw ConfigError("positional encoding needs an even width");
  std::vector<double> pe(positions * width);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t k = 0; k < width / 2; ++k) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(width));
      pe[pos * width + 2 * k] = std::sin(angle);
      pe[pos * width + 2 * k + 1] = std::cos(angle);
    }
  }
  return pe;
}

Tensor embed(const Tensor& z, const Tensor& medications, const BoundParameters& params) {
  const Tensor& w = params["embed.weight"];
  if (z.cols() + medications.cols() != w.rows())
    throw ShapeError("embed: input width does not match the embedding matrix");
  return ops::matmul(ops::concat_cols(z, medications), w);
}

Tensor encoder_forward(const Tensor& input, const BoundParameters& p, const NetworkConfig& config,
                       ForwardContext& ctx) {
  if (input.rank() != 2 || input.cols() != config.embed || input.rows() % config.grid != 0)
    throw ShapeError("encoder_forward: input must be (S*X) x E");
  const bool drop = ctx.training && ctx.dropout > 0.0;
  if (drop && ctx.rng == nullptr) throw ConfigError("training-mode dropout requires an Rng");
  Rng idle(0);
  Rng& rng = ctx.rng ? *ctx.rng : idle;

  Tensor h = input;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const Tensor a = ops::layer_norm(h, p[layer_name(l, "ln1.scale")], p[layer_name(l, "ln1.shift")]);
    const Tensor q = dense(a, p, layer_name(l, "attn.query.weight"), layer_name(l, "attn.query.bias"));
    const Tensor k = dense(a, p, layer_name(l, "attn.key.weight"), layer_name(l, "attn.key.bias"));
    const Tensor v = dense(a, p, layer_name(l, "attn.value.weight"), layer_name(l, "attn.value.bias"));
    const Tensor att = ops::causal_attention(q, k, v, config.heads, config.grid);
    Tensor o = dense(att, p, layer_name(l, "attn.output.weight"), layer_name(l, "attn.output.bias"));
    h = ops::add(h, ops::dropout(o, ctx.dropout, drop, rng));

    const Tensor b = ops::layer_norm(h, p[layer_name(l, "ln2.scale")], p[layer_name(l, "ln2.shift")]);
    const Tensor f = ops::relu(dense(b, p, layer_name(l, "ffn.in.weight"), layer_name(l, "ffn.in.bias")));
    const Tensor g = dense(f, p, layer_name(l, "ffn.out.weight"), layer_name(l, "ffn.out.bias"));
    h = ops::add(h, ops::dropout(g, ctx.dropout, drop, rng));
  }
  return ops::layer_norm(h, p["final_ln.scale"], p["final_ln.shift"]);
}

Tensor output_scores(const Tensor& v, const Tensor& demographics, const BoundParameters& params) {
  const Tensor& blocks = params["readout.blocks"];
  const Tensor& weights = params["readout.demographics"];
  const Tensor s = ops::block_readout(v, blocks);
  if (weights.size() == 0) return s;
  if (demographics.size() != weights.size()) throw ShapeError("output_scores: demographic length mismatch");
  const Tensor offset = ops::matmul(ops::reshape(demographics, {1, weights.size()}),
                                    ops::reshape(weights, {weights.size(), 1}));
  return ops::add(s, offset);
}

Tensor forward_scores(const Tensor& z, const Tensor& medications, const Tensor& demographics,
                      const BoundParameters& params, const NetworkConfig& config, ForwardContext& ctx) {
  if (z.rank() != 2 || z.rows() % config.grid != 0 || z.cols() != config.features)
    throw ShapeError("forward_scores: z must be (S*X) x D");
  const std::size_t copies = z.rows() / config.grid;
  const auto pe = positional_encoding(config.grid, config.embed);
  const Tensor positions = Tensor::matrix(z.rows(), config.embed, tile_rows(pe, copies));
  const bool drop = ctx.training && ctx.dropout > 0.0;
  Rng idle(0);
  Tensor h = ops::add(embed(z, medications, params), positions);
  h = ops::dropout(h, ctx.dropout, drop, ctx.rng ? *ctx.rng : idle);
  const Tensor v = encoder_forward(h, params, config, ctx);
  return output_scores(v, demographics, params);
}

RiskTrajectory forward(const PatientTensorInput& input, const NetworkParameters& params) {
  const auto& c = params.config;
  if (input.z.size() != c.grid * c.features || input.medications.size() != c.grid * c.medications ||
      input.demographics.size() != c.demographics)
    throw ShapeError("forward: patient input does not match the network configuration");
  const BoundParameters bound(params.store, false);
  ForwardContext ctx;
  const Tensor s = forward_scores(Tensor::matrix(c.grid, c.features, input.z),
                                  Tensor::matrix(c.grid, c.medications, input.medications),
                                  Tensor::vector(input.demographics), bound, c, ctx);
  return {s.to_vector()};
}

std::vector<double> tile_rows(std::span<const double> block, std::size_t copies) {
  std::vector<double> out;
  out.reserve(block.size() * copies);
  for (std::size_t s = 0; s < copies; ++s) out.insert(out.end(), block.begin(), block.end());
  return out;
}

}  // namespace mgpms::net
