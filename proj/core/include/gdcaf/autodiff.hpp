#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "gdcaf/tensor.hpp"

namespace gdcaf {

// A trainable array. `grad` accumulates additively across backward passes
// until zero_grads() is called; shapes always match.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor(value.shape())) {}
};

// Owns every trainable array of a model, each registered exactly once under a
// unique dotted name. Iteration follows registration order, which fixes the
// optimizer-state pairing and the checkpoint layout.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, Tensor init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  void zero_grads();
  std::size_t element_count() const;
  std::size_t tensor_count() const { return params_.size(); }

  // Snapshot of all gradients keyed by name.
  std::map<std::string, Tensor> gradient_map() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Primitives are recorded during the forward pass and
// replayed in reverse topological (= recording) order by backward(). One tape
// per training step; tapes are not shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  // Parameter leaf; repeated use of the same parameter maps to one node.
  Var param(Parameter& p);

  Var add(Var a, Var b);
  Var add_n(const std::vector<Var>& vs);
  Var mul(Var a, Var b);
  Var scale(Var a, float c);
  Var relu(Var a);
  Var leaky_relu(Var a, float slope);
  Var softmax(Var v);
  Var softmax2d(Var m, int axis);
  Var conv_depthwise(Var x, Var kernels);
  Var conv_pointwise(Var x, Var weights, Var bias);
  Var group_norm(Var x, int groups, Var gamma, Var beta, float eps);
  Var avg_pool2(Var x);
  Var upsample2(Var x);
  Var concat0(const std::vector<Var>& parts);
  Var slice0(Var x, int start, int count);
  Var reshape(Var x, std::vector<int> shape);
  Var channel_inner(Var a, Var b);
  Var channel_gram(Var a, Var b);
  Var broadcast_scale(Var x, Var s);
  Var mix_maps(Var maps, Var w);
  Var sum(Var x);                                   // -> [1]
  Var mse_against(Var pred, const Tensor& target);  // -> [1]

  const Tensor& value(Var v) const;
  // Gradient of the last backward() seed with respect to node v. Nodes the
  // seed does not reach keep an all-zero gradient.
  const Tensor& grad(Var v) const;

  // Reverse sweep from a scalar loss. Populates node gradients and adds each
  // parameter leaf's gradient into its accumulator. Throws ContractError when
  // the loss is not shape [1]. Repeated calls recompute node gradients from
  // scratch, so two sweeps accumulate parameters twice.
  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* parameter = nullptr;
    std::function<void(Tape&, int)> pull;  // scatter this node's grad to parents
  };

  int push(Tensor value, std::function<void(Tape&, int)> pull = {});
  Tensor& grad_buffer(int id);
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Convenience wrapper matching the "gradients of a scalar loss" contract:
// zeroes accumulators, runs backward, returns {name -> gradient} for every
// registered parameter (zeros for parameters the loss does not reach).
std::map<std::string, Tensor> backward_gradients(Tape& tape, Var loss, ParameterStore& store);

struct FdOptions {
  double eps = 1e-3;
  // Relative error denominator is max(|numeric|, |analytic|, floor) where
  // floor = max(denom_floor, denom_floor_frac_of_max * max_j |analytic_j|).
  // The floor absorbs float32 forward noise on elements whose true gradient
  // is far below the dominant scale; a wrong gradient formula still shows up
  // on the large elements.
  double denom_floor = 1e-3;
  double denom_floor_frac_of_max = 0.0;
};

struct FdResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central-difference check of the analytic gradients currently stored in the
// parameter accumulators. `objective` must evaluate the scalar at the store's
// current values without touching the accumulators. Parameter values are
// restored bitwise after each probe.
FdResult finite_diff_check(const std::function<double()>& objective, ParameterStore& store,
                           const FdOptions& options = {});

}  // namespace gdcaf
