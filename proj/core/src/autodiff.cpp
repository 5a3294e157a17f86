#include "gdcaf/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "gdcaf/errors.hpp"

namespace gdcaf {

// --- ParameterStore -----------------------------------------------------------

Parameter& ParameterStore::create(const std::string& name, Tensor init) {
  if (by_name_.count(name)) throw ContractError("parameter registered twice: " + name);
  params_.push_back(std::make_unique<Parameter>(name, std::move(init)));
  Parameter* p = params_.back().get();
  by_name_.emplace(name, p);
  return *p;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->grad = Tensor(p->value.shape());
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::map<std::string, Tensor> ParameterStore::gradient_map() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p->name, p->grad);
  return out;
}

// --- Tape basics ----------------------------------------------------------------

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("tape: invalid node handle");
  }
}

int Tape::push(Tensor value, std::function<void(Tape&, int)> pull) {
  nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, std::move(pull)});
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[static_cast<std::size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.empty()) {
    static const Tensor empty;
    const_cast<Node&>(n).grad = Tensor(n.value.shape());
    (void)empty;
  }
  return n.grad;
}

Var Tape::leaf(Tensor value) { return Var{push(std::move(value))}; }

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{it->second};
  const int id = push(p.value);
  nodes_[static_cast<std::size_t>(id)].parameter = &p;
  param_nodes_.emplace(&p, id);
  return Var{id};
}

void Tape::backward(Var loss) {
  check(loss);
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + value(loss).shape_str());
  }
  for (auto& n : nodes_) n.grad = Tensor{};
  grad_buffer(loss.id)[0] = 1.0f;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.pull) continue;
    n.pull(*this, id);
  }
  for (auto& [p, id] : param_nodes_) {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    if (g.empty()) continue;
    Parameter* param = nodes_[static_cast<std::size_t>(id)].parameter;
    float* acc = param->grad.data();
    const float* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += src[i];
  }
}

std::map<std::string, Tensor> backward_gradients(Tape& tape, Var loss, ParameterStore& store) {
  store.zero_grads();
  tape.backward(loss);
  return store.gradient_map();
}

// --- Primitives -----------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  Tensor out = gdcaf::add(val(a.id), val(b.id));
  const int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Tensor& ga = t.grad_buffer(pa);
    Tensor& gb = t.grad_buffer(pb);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  })};
}

Var Tape::add_n(const std::vector<Var>& vs) {
  if (vs.empty()) throw ContractError("add_n: no inputs");
  if (vs.size() == 1) return vs[0];
  Tensor out = val(vs[0].id);
  std::vector<int> parents;
  parents.push_back(vs[0].id);
  for (std::size_t i = 1; i < vs.size(); ++i) {
    check(vs[i]);
    out = gdcaf::add(out, val(vs[i].id));
    parents.push_back(vs[i].id);
  }
  return Var{push(std::move(out), [parents](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    for (int p : parents) {
      Tensor& gp = t.grad_buffer(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  })};
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  Tensor out = gdcaf::mul(val(a.id), val(b.id));
  const int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& va = t.val(pa);
    const Tensor& vb = t.val(pb);
    Tensor& ga = t.grad_buffer(pa);
    Tensor& gb = t.grad_buffer(pb);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  })};
}

Var Tape::scale(Var a, float c) {
  check(a);
  Tensor out = gdcaf::scale(val(a.id), c);
  const int pa = a.id;
  return Var{push(std::move(out), [pa, c](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  })};
}

Var Tape::relu(Var a) {
  check(a);
  Tensor out = gdcaf::relu(val(a.id));
  const int pa = a.id;
  return Var{push(std::move(out), [pa](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& x = t.val(pa);
    Tensor& ga = t.grad_buffer(pa);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0f ? g[i] : 0.0f;
  })};
}

Var Tape::leaky_relu(Var a, float slope) {
  check(a);
  Tensor out = gdcaf::leaky_relu(val(a.id), slope);
  const int pa = a.id;
  return Var{push(std::move(out), [pa, slope](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& x = t.val(pa);
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] >= 0.0f ? g[i] : slope * g[i];
  })};
}

Var Tape::softmax(Var v) {
  check(v);
  Tensor out = gdcaf::softmax(val(v.id));
  const int pv = v.id;
  return Var{push(std::move(out), [pv](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& y = t.val(self);
    Tensor& gv = t.grad_buffer(pv);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += static_cast<double>(g[i]) * y[i];
    for (std::size_t i = 0; i < g.size(); ++i) {
      gv[i] += y[i] * (g[i] - static_cast<float>(dot));
    }
  })};
}

Var Tape::softmax2d(Var m, int axis) {
  check(m);
  Tensor out = gdcaf::softmax2d(val(m.id), axis);
  const int pm = m.id;
  return Var{push(std::move(out), [pm, axis](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& y = t.val(self);
    Tensor& gm = t.grad_buffer(pm);
    const int rows = y.extent(0), cols = y.extent(1);
    if (axis == 1) {
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += static_cast<double>(g[base + c]) * y[base + c];
        for (int c = 0; c < cols; ++c) {
          gm[base + c] += y[base + c] * (g[base + c] - static_cast<float>(dot));
        }
      }
    } else {
      for (int c = 0; c < cols; ++c) {
        double dot = 0.0;
        for (int r = 0; r < rows; ++r) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + c;
          dot += static_cast<double>(g[i]) * y[i];
        }
        for (int r = 0; r < rows; ++r) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + c;
          gm[i] += y[i] * (g[i] - static_cast<float>(dot));
        }
      }
    }
  })};
}

Var Tape::conv_depthwise(Var x, Var kernels) {
  check(x);
  check(kernels);
  Tensor out = gdcaf::conv2d_depthwise(val(x.id), val(kernels.id));
  const int px = x.id, pk = kernels.id;
  return Var{push(std::move(out), [px, pk](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& in = t.val(px);
    const Tensor& ker = t.val(pk);
    Tensor& gin = t.grad_buffer(px);
    Tensor& gker = t.grad_buffer(pk);
    const int c_in = in.extent(0), h = in.extent(1), w = in.extent(2);
    const int mult = ker.extent(1), kh = ker.extent(2), kw = ker.extent(3);
    const int ph = kh / 2, pw = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int c = 0; c < c_in; ++c) {
      const float* ip = in.data() + static_cast<std::size_t>(c) * plane;
      float* gip = gin.data() + static_cast<std::size_t>(c) * plane;
      for (int m = 0; m < mult; ++m) {
        const std::size_t kbase = (static_cast<std::size_t>(c) * mult + m) * kh * kw;
        const float* kp = ker.data() + kbase;
        float* gkp = gker.data() + kbase;
        const float* gp = g.data() + (static_cast<std::size_t>(c) * mult + m) * plane;
        for (int y = 0; y < h; ++y) {
          for (int x2 = 0; x2 < w; ++x2) {
            const float gv = gp[static_cast<std::size_t>(y) * w + x2];
            if (gv == 0.0f) continue;
            for (int dy = 0; dy < kh; ++dy) {
              const int iy = y + dy - ph;
              if (iy < 0 || iy >= h) continue;
              for (int dx = 0; dx < kw; ++dx) {
                const int ix = x2 + dx - pw;
                if (ix < 0 || ix >= w) continue;
                gip[static_cast<std::size_t>(iy) * w + ix] += gv * kp[dy * kw + dx];
                gkp[dy * kw + dx] += gv * ip[static_cast<std::size_t>(iy) * w + ix];
              }
            }
          }
        }
      }
    }
  })};
}

Var Tape::conv_pointwise(Var x, Var weights, Var bias) {
  check(x);
  check(weights);
  check(bias);
  Tensor out = gdcaf::conv2d_pointwise(val(x.id), val(weights.id), val(bias.id));
  const int px = x.id, pw_ = weights.id, pb = bias.id;
  return Var{push(std::move(out), [px, pw_, pb](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& in = t.val(px);
    const Tensor& wt = t.val(pw_);
    Tensor& gin = t.grad_buffer(px);
    Tensor& gwt = t.grad_buffer(pw_);
    Tensor& gb = t.grad_buffer(pb);
    const int c_in = in.extent(0), c_out = wt.extent(0);
    const std::size_t plane = static_cast<std::size_t>(in.extent(1)) * in.extent(2);
    for (int o = 0; o < c_out; ++o) {
      const float* gp = g.data() + static_cast<std::size_t>(o) * plane;
      double bsum = 0.0;
      for (std::size_t p = 0; p < plane; ++p) bsum += gp[p];
      gb[static_cast<std::size_t>(o)] += static_cast<float>(bsum);
      for (int c = 0; c < c_in; ++c) {
        const float wv = wt[static_cast<std::size_t>(o) * c_in + c];
        const float* ip = in.data() + static_cast<std::size_t>(c) * plane;
        float* gip = gin.data() + static_cast<std::size_t>(c) * plane;
        double wsum = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          gip[p] += wv * gp[p];
          wsum += static_cast<double>(gp[p]) * ip[p];
        }
        gwt[static_cast<std::size_t>(o) * c_in + c] += static_cast<float>(wsum);
      }
    }
  })};
}

Var Tape::group_norm(Var x, int groups, Var gamma, Var beta, float eps) {
  check(x);
  check(gamma);
  check(beta);
  Tensor out = gdcaf::group_norm(val(x.id), groups, val(gamma.id), val(beta.id), eps);
  const int px = x.id, pg = gamma.id, pb = beta.id;
  return Var{push(std::move(out), [px, pg, pb, groups, eps](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& in = t.val(px);
    const Tensor& gam = t.val(pg);
    Tensor& gin = t.grad_buffer(px);
    Tensor& ggam = t.grad_buffer(pg);
    Tensor& gbet = t.grad_buffer(pb);
    const int c = in.extent(0), h = in.extent(1), w = in.extent(2);
    const int per_group = c / groups;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t m = static_cast<std::size_t>(per_group) * plane;
    for (int grp = 0; grp < groups; ++grp) {
      const float* ip = in.data() + static_cast<std::size_t>(grp) * m;
      const float* gp = g.data() + static_cast<std::size_t>(grp) * m;
      float* gip = gin.data() + static_cast<std::size_t>(grp) * m;
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) mean += ip[i];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = ip[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      // dxhat plus its two group-level reductions, then the closed form.
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int cc = 0; cc < per_group; ++cc) {
        const int ch = grp * per_group + cc;
        const double gm = gam[static_cast<std::size_t>(ch)];
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = static_cast<std::size_t>(cc) * plane + p;
          const double xhat = (ip[i] - mean) * inv;
          const double dxhat = gp[i] * gm;
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
          dgamma += gp[i] * xhat;
          dbeta += gp[i];
        }
        ggam[static_cast<std::size_t>(ch)] += static_cast<float>(dgamma);
        gbet[static_cast<std::size_t>(ch)] += static_cast<float>(dbeta);
      }
      const double inv_m = 1.0 / static_cast<double>(m);
      for (int cc = 0; cc < per_group; ++cc) {
        const int ch = grp * per_group + cc;
        const double gm = gam[static_cast<std::size_t>(ch)];
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t i = static_cast<std::size_t>(cc) * plane + p;
          const double xhat = (ip[i] - mean) * inv;
          const double dxhat = gp[i] * gm;
          gip[i] += static_cast<float>(inv * (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat));
        }
      }
    }
  })};
}

Var Tape::avg_pool2(Var x) {
  check(x);
  Tensor out = gdcaf::avg_pool2(val(x.id));
  const int px = x.id;
  return Var{push(std::move(out), [px](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& in = t.val(px);
    Tensor& gin = t.grad_buffer(px);
    const int h = in.extent(in.rank() - 2), w = in.extent(in.rank() - 1);
    const std::size_t planes = in.size() / (static_cast<std::size_t>(h) * w);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const float* gp = g.data() + pl * (h / 2) * (w / 2);
      float* gip = gin.data() + pl * h * w;
      for (int y = 0; y < h / 2; ++y) {
        for (int x2 = 0; x2 < w / 2; ++x2) {
          const float gv = 0.25f * gp[y * (w / 2) + x2];
          gip[(2 * y) * w + 2 * x2] += gv;
          gip[(2 * y) * w + 2 * x2 + 1] += gv;
          gip[(2 * y + 1) * w + 2 * x2] += gv;
          gip[(2 * y + 1) * w + 2 * x2 + 1] += gv;
        }
      }
    }
  })};
}

Var Tape::upsample2(Var x) {
  check(x);
  Tensor out = gdcaf::upsample2(val(x.id));
  const int px = x.id;
  return Var{push(std::move(out), [px](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& in = t.val(px);
    Tensor& gin = t.grad_buffer(px);
    const int h = in.extent(in.rank() - 2), w = in.extent(in.rank() - 1);
    const std::size_t planes = in.size() / (static_cast<std::size_t>(h) * w);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const float* gp = g.data() + pl * (2 * h) * (2 * w);
      float* gip = gin.data() + pl * h * w;
      for (int y = 0; y < 2 * h; ++y) {
        for (int x2 = 0; x2 < 2 * w; ++x2) {
          gip[(y / 2) * w + (x2 / 2)] += gp[y * (2 * w) + x2];
        }
      }
    }
  })};
}

Var Tape::concat0(const std::vector<Var>& parts) {
  std::vector<const Tensor*> vals;
  std::vector<int> parents;
  for (Var p : parts) {
    check(p);
    vals.push_back(&val(p.id));
    parents.push_back(p.id);
  }
  Tensor out = gdcaf::concat0(vals);
  return Var{push(std::move(out), [parents](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    std::size_t off = 0;
    for (int p : parents) {
      Tensor& gp = t.grad_buffer(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  })};
}

Var Tape::slice0(Var x, int start, int count) {
  check(x);
  Tensor out = gdcaf::slice0(val(x.id), start, count);
  const int px = x.id;
  const std::size_t unit = out.size() / static_cast<std::size_t>(count);
  const std::size_t off = static_cast<std::size_t>(start) * unit;
  return Var{push(std::move(out), [px, off](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Tensor& gx = t.grad_buffer(px);
    for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
  })};
}

Var Tape::reshape(Var x, std::vector<int> shape) {
  check(x);
  Tensor out = val(x.id).reshaped(std::move(shape));
  const int px = x.id;
  return Var{push(std::move(out), [px](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Tensor& gx = t.grad_buffer(px);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  })};
}

Var Tape::channel_inner(Var a, Var b) {
  check(a);
  check(b);
  Tensor out = gdcaf::channel_inner(val(a.id), val(b.id));
  const int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& va = t.val(pa);
    const Tensor& vb = t.val(pb);
    Tensor& ga = t.grad_buffer(pa);
    Tensor& gb = t.grad_buffer(pb);
    const int c = va.extent(0);
    const std::size_t plane = static_cast<std::size_t>(va.extent(1)) * va.extent(2);
    const float inv_sqrt_d = static_cast<float>(1.0 / std::sqrt(static_cast<double>(plane)));
    for (int i = 0; i < c; ++i) {
      const float gv = g[static_cast<std::size_t>(i)] * inv_sqrt_d;
      const std::size_t base = static_cast<std::size_t>(i) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        ga[base + p] += gv * vb[base + p];
        gb[base + p] += gv * va[base + p];
      }
    }
  })};
}

Var Tape::channel_gram(Var a, Var b) {
  check(a);
  check(b);
  Tensor out = gdcaf::channel_gram(val(a.id), val(b.id));
  const int pa = a.id, pb = b.id;
  return Var{push(std::move(out), [pa, pb](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& va = t.val(pa);
    const Tensor& vb = t.val(pb);
    Tensor& ga = t.grad_buffer(pa);
    Tensor& gb = t.grad_buffer(pb);
    const int c = va.extent(0);
    const std::size_t plane = static_cast<std::size_t>(va.extent(1)) * va.extent(2);
    const float inv_sqrt_d = static_cast<float>(1.0 / std::sqrt(static_cast<double>(plane)));
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) {
        const float gv = g[static_cast<std::size_t>(i) * c + j] * inv_sqrt_d;
        if (gv == 0.0f) continue;
        const float* ap = va.data() + static_cast<std::size_t>(i) * plane;
        const float* bp = vb.data() + static_cast<std::size_t>(j) * plane;
        float* gap = ga.data() + static_cast<std::size_t>(i) * plane;
        float* gbp = gb.data() + static_cast<std::size_t>(j) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          gap[p] += gv * bp[p];
          gbp[p] += gv * ap[p];
        }
      }
    }
  })};
}

Var Tape::broadcast_scale(Var x, Var s) {
  check(x);
  check(s);
  Tensor out = gdcaf::broadcast_scale(val(x.id), val(s.id));
  const int px = x.id, ps = s.id;
  return Var{push(std::move(out), [px, ps](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& vx = t.val(px);
    const Tensor& vs = t.val(ps);
    Tensor& gx = t.grad_buffer(px);
    Tensor& gs = t.grad_buffer(ps);
    const int c = vx.extent(0);
    const std::size_t unit = vx.size() / static_cast<std::size_t>(c);
    for (int i = 0; i < c; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * unit;
      const float sv = vs[static_cast<std::size_t>(i)];
      double acc = 0.0;
      for (std::size_t p = 0; p < unit; ++p) {
        gx[base + p] += sv * g[base + p];
        acc += static_cast<double>(g[base + p]) * vx[base + p];
      }
      gs[static_cast<std::size_t>(i)] += static_cast<float>(acc);
    }
  })};
}

Var Tape::mix_maps(Var maps, Var w) {
  check(maps);
  check(w);
  Tensor out = gdcaf::mix_maps(val(maps.id), val(w.id));
  const int pm = maps.id, pw_ = w.id;
  return Var{push(std::move(out), [pm, pw_](Tape& t, int self) {
    const Tensor& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    const Tensor& vm = t.val(pm);
    const Tensor& vw = t.val(pw_);
    Tensor& gm = t.grad_buffer(pm);
    Tensor& gw = t.grad_buffer(pw_);
    const int c_in = vm.extent(0), rows = vw.extent(0);
    const std::size_t unit = vm.size() / static_cast<std::size_t>(c_in);
    for (int r = 0; r < rows; ++r) {
      const float* gp = g.data() + static_cast<std::size_t>(r) * unit;
      for (int c = 0; c < c_in; ++c) {
        const float wv = vw[static_cast<std::size_t>(r) * c_in + c];
        const float* mp = vm.data() + static_cast<std::size_t>(c) * unit;
        float* gmp = gm.data() + static_cast<std::size_t>(c) * unit;
        double acc = 0.0;
        for (std::size_t p = 0; p < unit; ++p) {
          gmp[p] += wv * gp[p];
          acc += static_cast<double>(gp[p]) * mp[p];
        }
        gw[static_cast<std::size_t>(r) * c_in + c] += static_cast<float>(acc);
      }
    }
  })};
}

Var Tape::sum(Var x) {
  check(x);
  Tensor out({1});
  out[0] = static_cast<float>(gdcaf::sum(val(x.id)));
  const int px = x.id;
  return Var{push(std::move(out), [px](Tape& t, int self) {
    const float gv = t.nodes_[static_cast<std::size_t>(self)].grad[0];
    Tensor& gx = t.grad_buffer(px);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv;
  })};
}

Var Tape::mse_against(Var pred, const Tensor& target) {
  check(pred);
  const Tensor& p = val(pred.id);
  if (!p.same_shape(target)) {
    throw ShapeError("mse_against: prediction " + p.shape_str() + " vs target " +
                     target.shape_str());
  }
  Tensor out({1});
  out[0] = static_cast<float>(gdcaf::mse(p, target));
  const int pp = pred.id;
  Tensor tgt = target;
  return Var{push(std::move(out), [pp, tgt = std::move(tgt)](Tape& t, int self) {
    const float gv = t.nodes_[static_cast<std::size_t>(self)].grad[0];
    const Tensor& vp = t.val(pp);
    Tensor& gp = t.grad_buffer(pp);
    const float k = 2.0f * gv / static_cast<float>(vp.size());
    for (std::size_t i = 0; i < vp.size(); ++i) gp[i] += k * (vp[i] - tgt[i]);
  })};
}

// --- Finite differences ----------------------------------------------------------

FdResult finite_diff_check(const std::function<double()>& objective, ParameterStore& store,
                           const FdOptions& options) {
  if (!(options.eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");

  double max_abs_grad = 0.0;
  for (const auto& p : store) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      max_abs_grad = std::max(max_abs_grad, std::abs(static_cast<double>(p->grad[i])));
    }
  }
  const double floor =
      std::max(options.denom_floor, options.denom_floor_frac_of_max * max_abs_grad);

  FdResult result;
  for (const auto& p : store) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const float old = p->value[i];
      const float hi = static_cast<float>(static_cast<double>(old) + options.eps);
      const float lo = static_cast<float>(static_cast<double>(old) - options.eps);
      p->value[i] = hi;
      const double f_plus = objective();
      p->value[i] = lo;
      const double f_minus = objective();
      p->value[i] = old;
      const double span = static_cast<double>(hi) - static_cast<double>(lo);
      const double numeric = (f_plus - f_minus) / span;
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
      const double rel = denom > 0.0 ? std::abs(numeric - analytic) / denom : 0.0;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace gdcaf
