#include "gdcaf/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "gdcaf/autodiff.hpp"
#include "gdcaf/model.hpp"
#include "gdcaf/rng.hpp"

namespace gdcaf {
namespace gradcheck {

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor random_off_kink(std::vector<int> shape, Rng& rng) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t[i]) < 5e-3f) t[i] = t[i] < 0.0f ? t[i] - 0.01f : t[i] + 0.01f;
  }
  return t;
}

// Contracts the op output against fixed random weights so the objective is a
// generic scalar function of the inputs.
double weighted_fd(const std::function<Var(Tape&)>& build, ParameterStore& store, Rng& wrng) {
  Tensor weights;
  {
    Tape tape;
    weights = random_tensor(tape.value(build(tape)).shape(), wrng);
  }
  auto objective = [&]() {
    Tape tape;
    const Tensor& v = tape.value(build(tape));
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) acc += static_cast<double>(v[i]) * weights[i];
    return acc;
  };
  {
    Tape tape;
    Var scalar = tape.sum(tape.mul(build(tape), tape.leaf(weights)));
    store.zero_grads();
    tape.backward(scalar);
  }
  FdOptions opts;
  opts.denom_floor = 1e-3;
  return finite_diff_check(objective, store, opts).max_rel_error;
}

}  // namespace

std::vector<CheckResult> check_primitives(std::uint64_t seed) {
  Rng rng(seed);
  Rng wrng(seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<CheckResult> results;

  {
    ParameterStore store;
    Parameter& x = store.create("x", random_tensor({2, 4, 4}, rng));
    Parameter& k = store.create("k", random_tensor({2, 2, 3, 3}, rng));
    results.push_back({"conv_depthwise",
                       weighted_fd([&](Tape& t) { return t.conv_depthwise(t.param(x), t.param(k)); },
                                   store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& x = store.create("x", random_tensor({3, 4, 4}, rng));
    Parameter& w = store.create("w", random_tensor({2, 3}, rng));
    Parameter& b = store.create("b", random_tensor({2}, rng));
    results.push_back(
        {"conv_pointwise",
         weighted_fd([&](Tape& t) { return t.conv_pointwise(t.param(x), t.param(w), t.param(b)); },
                     store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& x = store.create("x", random_tensor({4, 3, 3}, rng));
    Parameter& g = store.create("g", random_tensor({4}, rng, 0.5f, 1.5f));
    Parameter& b = store.create("b", random_tensor({4}, rng));
    results.push_back(
        {"group_norm",
         weighted_fd(
             [&](Tape& t) { return t.group_norm(t.param(x), 2, t.param(g), t.param(b), 1e-5f); },
             store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& x = store.create("x", random_off_kink({3, 4}, rng));
    results.push_back(
        {"relu", weighted_fd([&](Tape& t) { return t.relu(t.param(x)); }, store, wrng)});
    results.push_back(
        {"leaky_relu",
         weighted_fd([&](Tape& t) { return t.leaky_relu(t.param(x), 0.2f); }, store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& v = store.create("v", random_tensor({6}, rng, -2.0f, 2.0f));
    results.push_back(
        {"softmax", weighted_fd([&](Tape& t) { return t.softmax(t.param(v)); }, store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& m = store.create("m", random_tensor({3, 4}, rng, -2.0f, 2.0f));
    results.push_back(
        {"softmax2d_cols",
         weighted_fd([&](Tape& t) { return t.softmax2d(t.param(m), 0); }, store, wrng)});
    results.push_back(
        {"softmax2d_rows",
         weighted_fd([&](Tape& t) { return t.softmax2d(t.param(m), 1); }, store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& a = store.create("a", random_tensor({3, 4, 4}, rng));
    Parameter& b = store.create("b", random_tensor({3, 4, 4}, rng));
    results.push_back(
        {"scaled_inner",
         weighted_fd([&](Tape& t) { return t.channel_inner(t.param(a), t.param(b)); }, store, wrng)});
    results.push_back(
        {"scaled_gram",
         weighted_fd([&](Tape& t) { return t.channel_gram(t.param(a), t.param(b)); }, store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& x = store.create("x", random_tensor({2, 4, 4}, rng));
    results.push_back(
        {"avg_pool2", weighted_fd([&](Tape& t) { return t.avg_pool2(t.param(x)); }, store, wrng)});
    results.push_back(
        {"upsample2", weighted_fd([&](Tape& t) { return t.upsample2(t.param(x)); }, store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& a = store.create("a", random_tensor({2, 3, 3}, rng));
    Parameter& b = store.create("b", random_tensor({2, 3, 3}, rng));
    results.push_back(
        {"concat_slice",
         weighted_fd(
             [&](Tape& t) { return t.slice0(t.concat0({t.param(a), t.param(b)}), 1, 2); }, store,
             wrng)});
    results.push_back(
        {"add_mul",
         weighted_fd([&](Tape& t) { return t.add(t.mul(t.param(a), t.param(b)), t.param(a)); },
                     store, wrng)});
  }
  {
    ParameterStore store;
    Parameter& a = store.create("a", random_tensor({3, 3, 3}, rng));
    Parameter& s = store.create("s", random_tensor({3}, rng));
    Parameter& w = store.create("w", random_tensor({2, 3}, rng));
    results.push_back(
        {"broadcast_scale",
         weighted_fd([&](Tape& t) { return t.broadcast_scale(t.param(a), t.param(s)); }, store,
                     wrng)});
    results.push_back(
        {"mix_maps",
         weighted_fd([&](Tape& t) { return t.mix_maps(t.param(a), t.param(w)); }, store, wrng)});
  }
  return results;
}

CheckResult check_full_model(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.nodes = 2;
  cfg.t_in = 2;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.height = 4;
  cfg.width = 4;
  GdCaf model(cfg, seed);
  Rng rng(seed ^ 0xabcdef12345ull);
  const Tensor x = random_tensor({2, 2, 4, 4}, rng);
  const Tensor y = random_tensor({2, 4, 4}, rng);

  auto objective = [&]() {
    Tape tape;
    return static_cast<double>(tape.value(tape.mse_against(model.forward(tape, x), y))[0]);
  };
  {
    Tape tape;
    model.params().zero_grads();
    tape.backward(tape.mse_against(model.forward(tape, x), y));
  }
  FdOptions opts;
  // Forward noise in float32 swamps the tiniest gradient elements; the floor
  // scales with the dominant gradient so real formula errors still surface.
  opts.denom_floor = 1e-6;
  opts.denom_floor_frac_of_max = 0.05;
  const FdResult r = finite_diff_check(objective, model.params(), opts);
  return {"full_model", r.max_rel_error};
}

}  // namespace gradcheck
}  // namespace gdcaf
