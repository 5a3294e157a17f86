#include "gdcaf/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "gdcaf/errors.hpp"

namespace gdcaf {

int norm_group_count(int channels) {
  for (int g = std::min(4, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

namespace {

void fill_uniform_fan_in(Tensor& t, int fan_in, Rng& rng) {
  const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

SeparableStage make_stage(ParameterStore& store, const std::string& prefix, int in_c, int out_c,
                          Rng& rng) {
  SeparableStage s;
  s.in_channels = in_c;
  s.out_channels = out_c;
  s.groups = norm_group_count(out_c);
  Tensor dw({in_c, kDepthMultiplier, kKernelSize, kKernelSize});
  fill_uniform_fan_in(dw, kKernelSize * kKernelSize, rng);
  Tensor pw({out_c, in_c * kDepthMultiplier});
  fill_uniform_fan_in(pw, in_c * kDepthMultiplier, rng);
  s.depthwise = &store.create(prefix + ".depthwise", std::move(dw));
  s.pointwise = &store.create(prefix + ".pointwise", std::move(pw));
  s.bias = &store.create(prefix + ".bias", Tensor({out_c}));
  s.gamma = &store.create(prefix + ".gamma", Tensor::full({out_c}, 1.0f));
  s.beta = &store.create(prefix + ".beta", Tensor({out_c}));
  return s;
}

void reinit_stage(SeparableStage& s, Rng& rng) {
  fill_uniform_fan_in(s.depthwise->value, kKernelSize * kKernelSize, rng);
  fill_uniform_fan_in(s.pointwise->value, s.in_channels * kDepthMultiplier, rng);
  s.bias->value = Tensor({s.out_channels});
  s.gamma->value = Tensor::full({s.out_channels}, 1.0f);
  s.beta->value = Tensor({s.out_channels});
}

}  // namespace

Var SeparableStage::forward(Tape& tape, Var x) const {
  Var h = tape.conv_depthwise(x, tape.param(*depthwise));
  h = tape.conv_pointwise(h, tape.param(*pointwise), tape.param(*bias));
  h = tape.group_norm(h, groups, tape.param(*gamma), tape.param(*beta), eps);
  return tape.relu(h);
}

std::size_t SeparableStage::parameter_count() const {
  return depthwise->value.size() + pointwise->value.size() + bias->value.size() +
         gamma->value.size() + beta->value.size();
}

DsConvBlock DsConvBlock::create(ParameterStore& store, const std::string& prefix, int in_c,
                                int out_c, Rng& rng) {
  DsConvBlock block;
  block.in_channels = in_c;
  block.out_channels = out_c;
  block.mid_channels = std::max(in_c, out_c);
  block.stage1 = make_stage(store, prefix + ".s1", in_c, block.mid_channels, rng);
  block.stage2 = make_stage(store, prefix + ".s2", block.mid_channels, out_c, rng);
  return block;
}

Var DsConvBlock::forward(Tape& tape, Var x) const {
  if (tape.value(x).extent(0) != in_channels) {
    throw ShapeError("ds_forward: input " + tape.value(x).shape_str() + " expects " +
                     std::to_string(in_channels) + " channels");
  }
  return stage2.forward(tape, stage1.forward(tape, x));
}

std::size_t DsConvBlock::parameter_count() const {
  return stage1.parameter_count() + stage2.parameter_count();
}

void DsConvBlock::reinit(std::uint64_t seed) {
  Rng rng(seed);
  reinit_stage(stage1, rng);
  reinit_stage(stage2, rng);
}

std::size_t separable_stage_param_count(int in_c, int out_c, int mult, int k) {
  const std::size_t dw = static_cast<std::size_t>(in_c) * mult * k * k;
  const std::size_t pw = static_cast<std::size_t>(out_c) * in_c * mult;
  const std::size_t bias = static_cast<std::size_t>(out_c);
  const std::size_t affine = 2 * static_cast<std::size_t>(out_c);
  return dw + pw + bias + affine;
}

std::size_t standard_conv_param_count(int in_c, int out_c, int k) {
  return static_cast<std::size_t>(out_c) * in_c * k * k + static_cast<std::size_t>(out_c);
}

// --- Checkpoint io ----------------------------------------------------------------

namespace {

void write_le_floats(std::ofstream& out, const Tensor& t) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint writer assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  nlohmann::json header;
  header["version"] = 1;
  auto& tensors = header["tensors"];
  tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : store) {
    tensors.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"offset", offset}});
    offset += p->value.size() * sizeof(float);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << header.dump() << "\n";
  for (const auto& p : store) write_le_floats(out, p->value);
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint missing header: " + path.string());
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded()) throw IoError("checkpoint header is not JSON: " + path.string());
  const std::streampos payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    Parameter* p = store.find(name);
    if (!p) throw ContractError("checkpoint names unknown parameter: " + name);
    if (p->value.shape() != shape) {
      throw ShapeError("checkpoint shape " + shape_str(shape) + " for " + name +
                       " does not match registered " + p->value.shape_str());
    }
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!in) throw IoError("checkpoint payload truncated at " + name + ": " + path.string());
  }
}

}  // namespace gdcaf
