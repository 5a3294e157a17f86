#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdcaf/autodiff.hpp"
#include "gdcaf/nn.hpp"
#include "gdcaf/tensor.hpp"

namespace gdcaf {

struct ModelConfig {
  int nodes = 16;
  int t_in = 6;
  int heads = 4;
  int blocks = 2;
  int height = 32;
  int width = 32;
  bool pool_input = false;
  bool pool_qkv = false;
  float leaky_slope = 0.2f;

  // Internal representation depth: heads contiguous windows of t_in slices.
  int depth() const { return heads * t_in; }
  void validate() const;
};

std::string to_json_string(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Attention weights captured during a forward pass.
//   spatial[block][head][time]  : [N,N], row i = attending node, rows sum to 1
//   temporal[block][head][node] : [T,T], row i = attending time position
struct AttentionScores {
  std::vector<std::vector<std::vector<Tensor>>> spatial;
  std::vector<std::vector<std::vector<Tensor>>> temporal;
};

// Graph nowcaster over dense precipitation maps. The input [N,T,H,W] is
// expanded to a per-node depth of heads*T, refined by a stack of attention
// blocks (node-wise and time-wise attention fused by a convolution, with a
// residual connection), and reduced back to one map per node. Every
// convolution is a shared double depthwise-separable block applied per node,
// so the model is equivariant to node permutations and independent of the
// graph size except through its input shape.
class GdCaf {
 public:
  GdCaf(ModelConfig cfg, std::uint64_t seed);

  // Records the full forward pass on the tape. x must be [N,T,H,W].
  Var forward(Tape& tape, const Tensor& x, AttentionScores* scores = nullptr) const;
  // Value-only convenience: fresh tape, returns [N,H,W].
  Tensor predict(const Tensor& x, AttentionScores* scores = nullptr) const;

  // Block internals, exposed so each stage can be verified in isolation.
  Var input_expand(Tape& tape, Var x) const;
  Var spatial_attention(Tape& tape, Var rep, int block, AttentionScores* scores) const;
  Var temporal_attention(Tape& tape, Var rep, int block, AttentionScores* scores) const;
  Var gated_fusion(Tape& tape, Var spatial_out, Var temporal_out, int block) const;
  Var st_block(Tape& tape, Var rep, int block, AttentionScores* scores) const;
  Var output_reduce(Tape& tape, Var rep) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  // Trunk resolution (half the input when pooling is applied at the input).
  int trunk_height() const { return cfg_.pool_input ? cfg_.height / 2 : cfg_.height; }
  int trunk_width() const { return cfg_.pool_input ? cfg_.width / 2 : cfg_.width; }

 private:
  struct AttentionParams {
    std::vector<DsConvBlock> query;  // one triple per head, t_in -> t_in
    std::vector<DsConvBlock> key;
    std::vector<DsConvBlock> value;
    DsConvBlock post;  // depth -> depth over the concatenated heads
  };
  struct BlockParams {
    AttentionParams spatial;
    AttentionParams temporal;
    DsConvBlock fusion;  // 2*depth -> depth
  };

  Var node_slice(Tape& tape, Var rep, int node) const;

  ModelConfig cfg_;
  ParameterStore store_;
  DsConvBlock expand_;
  DsConvBlock reduce_;
  std::vector<BlockParams> blocks_;
};

}  // namespace gdcaf
