#pragma once

#include <filesystem>
#include <string>

#include "gdcaf/autodiff.hpp"
#include "gdcaf/rng.hpp"
#include "gdcaf/tensor.hpp"

namespace gdcaf {

// Two spatial kernels per channel, 3x3 receptive field, project-wide.
inline constexpr int kDepthMultiplier = 2;
inline constexpr int kKernelSize = 3;

// Channel groups for normalization: the largest divisor of `channels` that is
// at most 4, so the grouping stays valid for any channel count.
int norm_group_count(int channels);

// One separable unit: depthwise conv -> pointwise conv -> group norm -> ReLU.
struct SeparableStage {
  Parameter* depthwise = nullptr;  // [in, M, 3, 3]
  Parameter* pointwise = nullptr;  // [out, in*M]
  Parameter* bias = nullptr;       // [out]
  Parameter* gamma = nullptr;      // [out]
  Parameter* beta = nullptr;       // [out]
  int in_channels = 0;
  int out_channels = 0;
  int groups = 1;
  float eps = 1e-5f;

  Var forward(Tape& tape, Var x) const;
  std::size_t parameter_count() const;
};

// The double depthwise-separable convolution: two separable stages back to
// back. Mid width is max(in, out); both stages use the shared depth
// multiplier. One block instance is applied to every graph node.
struct DsConvBlock {
  SeparableStage stage1;
  SeparableStage stage2;
  int in_channels = 0;
  int mid_channels = 0;
  int out_channels = 0;

  static DsConvBlock create(ParameterStore& store, const std::string& prefix, int in_c, int out_c,
                            Rng& rng);

  Var forward(Tape& tape, Var x) const;
  std::size_t parameter_count() const;
  // Re-draws weights in place (kernels/pointwise uniform by fan-in, biases and
  // beta zero, gamma one), deterministic per seed.
  void reinit(std::uint64_t seed);
};

// Closed-form count for one stage including the normalization affine pair.
std::size_t separable_stage_param_count(int in_c, int out_c, int mult = kDepthMultiplier,
                                        int k = kKernelSize);
// Parameters of a standard convolution with the same shape contract, for the
// economy comparison: out*in*k*k weights plus out biases.
std::size_t standard_conv_param_count(int in_c, int out_c, int k = kKernelSize);

// --- Checkpoint format ----------------------------------------------------------
// Single file: one line of JSON ({"version", "tensors":[{name, shape, offset}]},
// offsets relative to the byte after the newline), then raw little-endian
// float32 payloads concatenated in header order.
void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path);
void load_checkpoint(ParameterStore& store, const std::filesystem::path& path);

}  // namespace gdcaf
