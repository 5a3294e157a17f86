#include "gdcaf/model.hpp"

#include "json.hpp"

#include "gdcaf/errors.hpp"
#include "gdcaf/rng.hpp"

namespace gdcaf {

void ModelConfig::validate() const {
  if (nodes < 1 || t_in < 1 || heads < 1 || blocks < 1 || height < 1 || width < 1) {
    throw ContractError("model config: nodes/t_in/heads/blocks/height/width must all be >= 1");
  }
  if ((pool_input || pool_qkv) && (height % 2 != 0 || width % 2 != 0)) {
    throw ContractError("model config: pooling requires even map extents");
  }
  if (pool_input && pool_qkv && ((height / 2) % 2 != 0 || (width / 2) % 2 != 0)) {
    throw ContractError("model config: pooled projections need the half-resolution maps even");
  }
  if (leaky_slope < 0.0f) throw ContractError("model config: leaky slope must be >= 0");
}

std::string to_json_string(const ModelConfig& cfg) {
  nlohmann::json j{{"nodes", cfg.nodes},       {"t_in", cfg.t_in},
                   {"heads", cfg.heads},       {"blocks", cfg.blocks},
                   {"height", cfg.height},     {"width", cfg.width},
                   {"pool_input", cfg.pool_input}, {"pool_qkv", cfg.pool_qkv},
                   {"leaky_slope", cfg.leaky_slope}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("model config is not valid JSON");
  ModelConfig cfg;
  cfg.nodes = j.at("nodes").get<int>();
  cfg.t_in = j.at("t_in").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.blocks = j.at("blocks").get<int>();
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.pool_input = j.at("pool_input").get<bool>();
  cfg.pool_qkv = j.at("pool_qkv").get<bool>();
  cfg.leaky_slope = j.value("leaky_slope", 0.2f);
  cfg.validate();
  return cfg;
}

GdCaf::GdCaf(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int t = cfg_.t_in;
  const int d = cfg_.depth();
  expand_ = DsConvBlock::create(store_, "input_expand", t, d, rng);
  blocks_.reserve(static_cast<std::size_t>(cfg_.blocks));
  for (int b = 1; b <= cfg_.blocks; ++b) {
    const std::string base = "block" + std::to_string(b);
    BlockParams bp;
    for (int k = 0; k < cfg_.heads; ++k) {
      const std::string hs = base + ".spatial.h" + std::to_string(k);
      bp.spatial.query.push_back(DsConvBlock::create(store_, hs + ".query", t, t, rng));
      bp.spatial.key.push_back(DsConvBlock::create(store_, hs + ".key", t, t, rng));
      bp.spatial.value.push_back(DsConvBlock::create(store_, hs + ".value", t, t, rng));
    }
    bp.spatial.post = DsConvBlock::create(store_, base + ".spatial.post", d, d, rng);
    for (int k = 0; k < cfg_.heads; ++k) {
      const std::string ht = base + ".temporal.h" + std::to_string(k);
      bp.temporal.query.push_back(DsConvBlock::create(store_, ht + ".query", t, t, rng));
      bp.temporal.key.push_back(DsConvBlock::create(store_, ht + ".key", t, t, rng));
      bp.temporal.value.push_back(DsConvBlock::create(store_, ht + ".value", t, t, rng));
    }
    bp.temporal.post = DsConvBlock::create(store_, base + ".temporal.post", d, d, rng);
    bp.fusion = DsConvBlock::create(store_, base + ".fusion", 2 * d, d, rng);
    blocks_.push_back(std::move(bp));
  }
  reduce_ = DsConvBlock::create(store_, "output_reduce", d, 1, rng);
}

Var GdCaf::node_slice(Tape& tape, Var rep, int node) const {
  const Tensor& v = tape.value(rep);
  std::vector<int> shape(v.shape().begin() + 1, v.shape().end());
  return tape.reshape(tape.slice0(rep, node, 1), std::move(shape));
}

Var GdCaf::input_expand(Tape& tape, Var x) const {
  const Tensor& v = tape.value(x);
  if (v.rank() != 4 || v.extent(0) != cfg_.nodes || v.extent(1) != cfg_.t_in ||
      v.extent(2) != cfg_.height || v.extent(3) != cfg_.width) {
    throw ShapeError("input_expand: got " + v.shape_str() + ", config expects [" +
                     std::to_string(cfg_.nodes) + "," + std::to_string(cfg_.t_in) + "," +
                     std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "]");
  }
  std::vector<Var> expanded;
  expanded.reserve(static_cast<std::size_t>(cfg_.nodes));
  for (int n = 0; n < cfg_.nodes; ++n) {
    Var xs = node_slice(tape, x, n);
    if (cfg_.pool_input) xs = tape.avg_pool2(xs);
    expanded.push_back(expand_.forward(tape, xs));
  }
  return tape.reshape(tape.concat0(expanded),
                      {cfg_.nodes, cfg_.depth(), trunk_height(), trunk_width()});
}

Var GdCaf::spatial_attention(Tape& tape, Var rep, int block, AttentionScores* scores) const {
  const BlockParams& bp = blocks_[static_cast<std::size_t>(block)];
  const int n_nodes = cfg_.nodes, t = cfg_.t_in, heads = cfg_.heads;

  if (scores) {
    if (scores->spatial.size() != static_cast<std::size_t>(cfg_.blocks)) {
      scores->spatial.resize(static_cast<std::size_t>(cfg_.blocks));
    }
    scores->spatial[static_cast<std::size_t>(block)].assign(
        static_cast<std::size_t>(heads),
        std::vector<Tensor>(static_cast<std::size_t>(t), Tensor({n_nodes, n_nodes})));
  }

  // head_out[k][i]: aggregated value maps for node i in head k, trunk resolution.
  std::vector<std::vector<Var>> head_out(static_cast<std::size_t>(heads));
  for (int k = 0; k < heads; ++k) {
    std::vector<Var> q(static_cast<std::size_t>(n_nodes));
    std::vector<Var> key(static_cast<std::size_t>(n_nodes));
    std::vector<Var> val(static_cast<std::size_t>(n_nodes));
    for (int n = 0; n < n_nodes; ++n) {
      Var slice = tape.slice0(node_slice(tape, rep, n), k * t, t);
      if (cfg_.pool_qkv) slice = tape.avg_pool2(slice);
      q[static_cast<std::size_t>(n)] = bp.spatial.query[static_cast<std::size_t>(k)].forward(tape, slice);
      key[static_cast<std::size_t>(n)] = bp.spatial.key[static_cast<std::size_t>(k)].forward(tape, slice);
      val[static_cast<std::size_t>(n)] = bp.spatial.value[static_cast<std::size_t>(k)].forward(tape, slice);
    }
    head_out[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) {
      // Relevance of every node v to node i, one value per time slice.
      std::vector<Var> rows(static_cast<std::size_t>(n_nodes));
      for (int v = 0; v < n_nodes; ++v) {
        rows[static_cast<std::size_t>(v)] =
            tape.channel_inner(q[static_cast<std::size_t>(i)], key[static_cast<std::size_t>(v)]);
      }
      Var s = tape.reshape(tape.concat0(rows), {n_nodes, t});
      Var alpha = tape.softmax2d(tape.leaky_relu(s, cfg_.leaky_slope), /*axis=*/0);
      if (scores) {
        const Tensor& a = tape.value(alpha);
        for (int tt = 0; tt < t; ++tt) {
          Tensor& m = scores->spatial[static_cast<std::size_t>(block)][static_cast<std::size_t>(k)]
                                     [static_cast<std::size_t>(tt)];
          for (int v = 0; v < n_nodes; ++v) {
            m.at(i, v) = a.at(v, tt);
          }
        }
      }
      std::vector<Var> weighted(static_cast<std::size_t>(n_nodes));
      for (int v = 0; v < n_nodes; ++v) {
        Var w_v = tape.reshape(tape.slice0(alpha, v, 1), {t});
        weighted[static_cast<std::size_t>(v)] =
            tape.broadcast_scale(val[static_cast<std::size_t>(v)], w_v);
      }
      Var agg = tape.add_n(weighted);
      if (cfg_.pool_qkv) agg = tape.upsample2(agg);
      head_out[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = agg;
    }
  }

  std::vector<Var> per_node(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    std::vector<Var> parts(static_cast<std::size_t>(heads));
    for (int k = 0; k < heads; ++k) {
      parts[static_cast<std::size_t>(k)] = head_out[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
    }
    per_node[static_cast<std::size_t>(i)] = bp.spatial.post.forward(tape, tape.concat0(parts));
  }
  return tape.reshape(tape.concat0(per_node),
                      {n_nodes, cfg_.depth(), trunk_height(), trunk_width()});
}

Var GdCaf::temporal_attention(Tape& tape, Var rep, int block, AttentionScores* scores) const {
  const BlockParams& bp = blocks_[static_cast<std::size_t>(block)];
  const int n_nodes = cfg_.nodes, t = cfg_.t_in, heads = cfg_.heads;

  if (scores) {
    if (scores->temporal.size() != static_cast<std::size_t>(cfg_.blocks)) {
      scores->temporal.resize(static_cast<std::size_t>(cfg_.blocks));
    }
    scores->temporal[static_cast<std::size_t>(block)].assign(
        static_cast<std::size_t>(heads),
        std::vector<Tensor>(static_cast<std::size_t>(n_nodes), Tensor({t, t})));
  }

  // head_node_out[k][n]: re-weighted time stack for node n in head k.
  std::vector<std::vector<Var>> head_node_out(static_cast<std::size_t>(heads));
  for (int k = 0; k < heads; ++k) {
    head_node_out[static_cast<std::size_t>(k)].resize(static_cast<std::size_t>(n_nodes));
    for (int n = 0; n < n_nodes; ++n) {
      Var slice = tape.slice0(node_slice(tape, rep, n), k * t, t);
      if (cfg_.pool_qkv) slice = tape.avg_pool2(slice);
      Var q = bp.temporal.query[static_cast<std::size_t>(k)].forward(tape, slice);
      Var key = bp.temporal.key[static_cast<std::size_t>(k)].forward(tape, slice);
      Var val = bp.temporal.value[static_cast<std::size_t>(k)].forward(tape, slice);
      // Pairwise relevance between time positions of this node's stack.
      Var u = tape.channel_gram(q, key);
      Var beta = tape.softmax2d(tape.leaky_relu(u, cfg_.leaky_slope), /*axis=*/1);
      if (scores) {
        scores->temporal[static_cast<std::size_t>(block)][static_cast<std::size_t>(k)]
                        [static_cast<std::size_t>(n)] = tape.value(beta);
      }
      Var mixed = tape.mix_maps(val, beta);
      if (cfg_.pool_qkv) mixed = tape.upsample2(mixed);
      head_node_out[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)] = mixed;
    }
  }

  std::vector<Var> per_node(static_cast<std::size_t>(n_nodes));
  for (int n = 0; n < n_nodes; ++n) {
    std::vector<Var> parts(static_cast<std::size_t>(heads));
    for (int k = 0; k < heads; ++k) {
      parts[static_cast<std::size_t>(k)] = head_node_out[static_cast<std::size_t>(k)][static_cast<std::size_t>(n)];
    }
    per_node[static_cast<std::size_t>(n)] = bp.temporal.post.forward(tape, tape.concat0(parts));
  }
  return tape.reshape(tape.concat0(per_node),
                      {n_nodes, cfg_.depth(), trunk_height(), trunk_width()});
}

Var GdCaf::gated_fusion(Tape& tape, Var spatial_out, Var temporal_out, int block) const {
  if (!tape.value(spatial_out).same_shape(tape.value(temporal_out))) {
    throw ShapeError("gated_fusion: stream shapes differ, " +
                     tape.value(spatial_out).shape_str() + " vs " +
                     tape.value(temporal_out).shape_str());
  }
  const BlockParams& bp = blocks_[static_cast<std::size_t>(block)];
  std::vector<Var> per_node(static_cast<std::size_t>(cfg_.nodes));
  for (int n = 0; n < cfg_.nodes; ++n) {
    Var both = tape.concat0({node_slice(tape, spatial_out, n), node_slice(tape, temporal_out, n)});
    per_node[static_cast<std::size_t>(n)] = bp.fusion.forward(tape, both);
  }
  return tape.reshape(tape.concat0(per_node),
                      {cfg_.nodes, cfg_.depth(), trunk_height(), trunk_width()});
}

Var GdCaf::st_block(Tape& tape, Var rep, int block, AttentionScores* scores) const {
  Var p = spatial_attention(tape, rep, block, scores);
  Var o = temporal_attention(tape, rep, block, scores);
  Var fused = gated_fusion(tape, p, o, block);
  // Residual; the fusion output is already back at trunk resolution, so no
  // further upsampling is needed here for any pooling configuration.
  return tape.add(rep, fused);
}

Var GdCaf::output_reduce(Tape& tape, Var rep) const {
  std::vector<Var> per_node(static_cast<std::size_t>(cfg_.nodes));
  for (int n = 0; n < cfg_.nodes; ++n) {
    Var r = node_slice(tape, rep, n);
    if (cfg_.pool_input) r = tape.upsample2(r);
    per_node[static_cast<std::size_t>(n)] = reduce_.forward(tape, r);
  }
  return tape.reshape(tape.concat0(per_node), {cfg_.nodes, cfg_.height, cfg_.width});
}

Var GdCaf::forward(Tape& tape, const Tensor& x, AttentionScores* scores) const {
  Var rep = input_expand(tape, tape.leaf(x));
  for (int b = 0; b < cfg_.blocks; ++b) rep = st_block(tape, rep, b, scores);
  return output_reduce(tape, rep);
}

Tensor GdCaf::predict(const Tensor& x, AttentionScores* scores) const {
  Tape tape;
  return tape.value(forward(tape, x, scores));
}

}  // namespace gdcaf
