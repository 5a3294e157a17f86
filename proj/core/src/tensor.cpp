#include "gdcaf/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "gdcaf/errors.hpp"

namespace gdcaf {

namespace {

std::size_t checked_element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::size_t trailing_size(const Tensor& t) {
  std::size_t n = 1;
  for (int axis = 1; axis < t.rank(); ++axis) n *= static_cast<std::size_t>(t.extent(axis));
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(checked_element_count(shape_), 0.0f);
}

Tensor::Tensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_element_count(shape_) != data_.size()) {
    throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                     " does not match shape " + gdcaf::shape_str(shape_));
  }
}

Tensor Tensor::full(std::vector<int> shape, float value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = value;
  return t;
}

std::size_t Tensor::offset(const int* index, std::size_t n) const {
  if (n != shape_.size()) {
    throw ShapeError("index rank " + std::to_string(n) + " does not match tensor rank " +
                     std::to_string(shape_.size()));
  }
  std::size_t off = 0;
  for (std::size_t axis = 0; axis < n; ++axis) {
    const int i = index[axis];
    if (i < 0 || i >= shape_[axis]) {
      throw BoundsError("index " + std::to_string(i) + " out of bounds for axis " +
                        std::to_string(axis) + " of " + gdcaf::shape_str(shape_));
    }
    off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
  }
  return off;
}

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  if (checked_element_count(new_shape) != data_.size()) {
    throw ShapeError("reshape " + gdcaf::shape_str(shape_) + " -> " + gdcaf::shape_str(new_shape) +
                     " changes element count");
  }
  Tensor out;
  out.shape_ = std::move(new_shape);
  out.data_ = data_;
  return out;
}

std::string Tensor::shape_str() const { return gdcaf::shape_str(shape_); }

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// --- MAC instrument -----------------------------------------------------------

namespace macs {
namespace {
thread_local std::uint64_t counter = 0;
}
void reset() { counter = 0; }
std::uint64_t count() { return counter; }
void add(std::uint64_t n) { counter += n; }
}  // namespace macs

// --- Elementwise --------------------------------------------------------------

Tensor relu(const Tensor& t) {
  Tensor out(t.shape());
  const float* in = t.data();
  float* o = out.data();
  for (std::size_t i = 0; i < t.size(); ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;
  return out;
}

Tensor leaky_relu(const Tensor& t, float slope) {
  Tensor out(t.shape());
  const float* in = t.data();
  float* o = out.data();
  for (std::size_t i = 0; i < t.size(); ++i) o[i] = in[i] >= 0.0f ? in[i] : slope * in[i];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* o = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = pa[i] + pb[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* o = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = pa[i] * pb[i];
  return out;
}

Tensor scale(const Tensor& t, float c) {
  Tensor out(t.shape());
  const float* in = t.data();
  float* o = out.data();
  for (std::size_t i = 0; i < t.size(); ++i) o[i] = c * in[i];
  return out;
}

Tensor concat0(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  const Tensor& first = *parts.front();
  std::vector<int> shape = first.shape();
  int total = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != first.rank()) throw ShapeError("concat0: rank mismatch");
    for (int axis = 1; axis < first.rank(); ++axis) {
      if (p->extent(axis) != first.extent(axis)) {
        throw ShapeError("concat0: trailing extent mismatch " + p->shape_str() + " vs " +
                         first.shape_str());
      }
    }
    total += p->extent(0);
  }
  shape[0] = total;
  Tensor out(shape);
  float* o = out.data();
  for (const Tensor* p : parts) {
    std::memcpy(o, p->data(), p->size() * sizeof(float));
    o += p->size();
  }
  return out;
}

Tensor slice0(const Tensor& t, int start, int count) {
  if (start < 0 || count < 1 || start + count > t.extent(0)) {
    throw BoundsError("slice0 [" + std::to_string(start) + "," + std::to_string(start + count) +
                      ") out of range for " + t.shape_str());
  }
  std::vector<int> shape = t.shape();
  shape[0] = count;
  const std::size_t unit = trailing_size(t);
  Tensor out(shape);
  std::memcpy(out.data(), t.data() + static_cast<std::size_t>(start) * unit,
              static_cast<std::size_t>(count) * unit * sizeof(float));
  return out;
}

// --- Convolution --------------------------------------------------------------

Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernels) {
  if (input.rank() != 3) throw ShapeError("conv2d_depthwise: input must be [C,H,W], got " + input.shape_str());
  if (kernels.rank() != 4) throw ShapeError("conv2d_depthwise: kernels must be [C,M,kh,kw], got " + kernels.shape_str());
  const int c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
  const int mult = kernels.extent(1), kh = kernels.extent(2), kw = kernels.extent(3);
  if (kernels.extent(0) != c_in) {
    throw ShapeError("conv2d_depthwise: kernel bank " + kernels.shape_str() +
                     " does not match input channels " + input.shape_str());
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d_depthwise: kernel extents must be odd");
  const int ph = kh / 2, pw = kw / 2;

  Tensor out({c_in * mult, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < c_in; ++c) {
    const float* in = input.data() + static_cast<std::size_t>(c) * plane;
    for (int m = 0; m < mult; ++m) {
      const float* k = kernels.data() + (static_cast<std::size_t>(c) * mult + m) * kh * kw;
      float* o = out.data() + (static_cast<std::size_t>(c) * mult + m) * plane;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (int dy = 0; dy < kh; ++dy) {
            const int iy = y + dy - ph;
            if (iy < 0 || iy >= h) continue;
            for (int dx = 0; dx < kw; ++dx) {
              const int ix = x + dx - pw;
              if (ix < 0 || ix >= w) continue;
              acc += in[static_cast<std::size_t>(iy) * w + ix] * k[dy * kw + dx];
            }
          }
          o[static_cast<std::size_t>(y) * w + x] = acc;
        }
      }
    }
  }
  macs::add(static_cast<std::uint64_t>(c_in) * mult * plane * kh * kw);
  return out;
}

Tensor conv2d_pointwise(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 3) throw ShapeError("conv2d_pointwise: input must be [C,H,W], got " + input.shape_str());
  if (weights.rank() != 2) throw ShapeError("conv2d_pointwise: weights must be [C_out,C], got " + weights.shape_str());
  const int c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
  const int c_out = weights.extent(0);
  if (weights.extent(1) != c_in) {
    throw ShapeError("conv2d_pointwise: weights " + weights.shape_str() +
                     " do not match input channels " + input.shape_str());
  }
  if (bias.rank() != 1 || bias.extent(0) != c_out) {
    throw ShapeError("conv2d_pointwise: bias " + bias.shape_str() + " must be [" +
                     std::to_string(c_out) + "]");
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({c_out, h, w});
  for (int o = 0; o < c_out; ++o) {
    float* op = out.data() + static_cast<std::size_t>(o) * plane;
    const float b = bias[static_cast<std::size_t>(o)];
    for (std::size_t p = 0; p < plane; ++p) op[p] = b;
    for (int c = 0; c < c_in; ++c) {
      const float wv = weights[static_cast<std::size_t>(o) * c_in + c];
      const float* ip = input.data() + static_cast<std::size_t>(c) * plane;
      for (std::size_t p = 0; p < plane; ++p) op[p] += wv * ip[p];
    }
  }
  macs::add(static_cast<std::uint64_t>(c_out) * c_in * plane);
  return out;
}

// --- Normalization ------------------------------------------------------------

Tensor group_norm(const Tensor& t, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  if (t.rank() != 3) throw ShapeError("group_norm: input must be [C,H,W], got " + t.shape_str());
  const int c = t.extent(0), h = t.extent(1), w = t.extent(2);
  if (groups < 1 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible by " +
                     std::to_string(groups) + " groups");
  }
  if (gamma.rank() != 1 || gamma.extent(0) != c || beta.rank() != 1 || beta.extent(0) != c) {
    throw ShapeError("group_norm: affine parameters must be [" + std::to_string(c) + "]");
  }
  if (!(eps > 0.0f)) throw ContractError("group_norm: eps must be positive");

  const int per_group = c / groups;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t group_size = static_cast<std::size_t>(per_group) * plane;
  Tensor out(t.shape());
  for (int g = 0; g < groups; ++g) {
    const float* in = t.data() + static_cast<std::size_t>(g) * group_size;
    double mean = 0.0;
    for (std::size_t i = 0; i < group_size; ++i) mean += in[i];
    mean /= static_cast<double>(group_size);
    double var = 0.0;
    for (std::size_t i = 0; i < group_size; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(group_size);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    const float mu = static_cast<float>(mean);
    float* o = out.data() + static_cast<std::size_t>(g) * group_size;
    for (int cc = 0; cc < per_group; ++cc) {
      const int ch = g * per_group + cc;
      const float gm = gamma[static_cast<std::size_t>(ch)];
      const float bt = beta[static_cast<std::size_t>(ch)];
      const float* ip = in + static_cast<std::size_t>(cc) * plane;
      float* op = o + static_cast<std::size_t>(cc) * plane;
      for (std::size_t p = 0; p < plane; ++p) op[p] = gm * (ip[p] - mu) * inv + bt;
    }
  }
  return out;
}

// --- Softmax ------------------------------------------------------------------

Tensor softmax(const Tensor& v) {
  if (v.rank() != 1) throw ShapeError("softmax: expected rank-1 tensor, got " + v.shape_str());
  const int n = v.extent(0);
  Tensor out(v.shape());
  float mx = v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, v[static_cast<std::size_t>(i)]);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const float e = std::exp(v[static_cast<std::size_t>(i)] - mx);
    out[static_cast<std::size_t>(i)] = e;
    total += e;
  }
  const float inv = static_cast<float>(1.0 / total);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] *= inv;
  return out;
}

Tensor softmax2d(const Tensor& m, int axis) {
  if (m.rank() != 2) throw ShapeError("softmax2d: expected [R,C], got " + m.shape_str());
  if (axis != 0 && axis != 1) throw ContractError("softmax2d: axis must be 0 or 1");
  const int rows = m.extent(0), cols = m.extent(1);
  Tensor out(m.shape());
  const float* in = m.data();
  float* o = out.data();
  if (axis == 1) {
    for (int r = 0; r < rows; ++r) {
      const float* row = in + static_cast<std::size_t>(r) * cols;
      float* orow = o + static_cast<std::size_t>(r) * cols;
      float mx = row[0];
      for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
      double total = 0.0;
      for (int c = 0; c < cols; ++c) {
        const float e = std::exp(row[c] - mx);
        orow[c] = e;
        total += e;
      }
      const float inv = static_cast<float>(1.0 / total);
      for (int c = 0; c < cols; ++c) orow[c] *= inv;
    }
  } else {
    for (int c = 0; c < cols; ++c) {
      float mx = in[c];
      for (int r = 1; r < rows; ++r) mx = std::max(mx, in[static_cast<std::size_t>(r) * cols + c]);
      double total = 0.0;
      for (int r = 0; r < rows; ++r) {
        const float e = std::exp(in[static_cast<std::size_t>(r) * cols + c] - mx);
        o[static_cast<std::size_t>(r) * cols + c] = e;
        total += e;
      }
      const float inv = static_cast<float>(1.0 / total);
      for (int r = 0; r < rows; ++r) o[static_cast<std::size_t>(r) * cols + c] *= inv;
    }
  }
  return out;
}

// --- Attention arithmetic -----------------------------------------------------

float scaled_inner_product(const Tensor& a, const Tensor& b, int d) {
  require_same_shape(a, b, "scaled_inner_product");
  if (a.rank() != 2) throw ShapeError("scaled_inner_product: maps must be [H,W], got " + a.shape_str());
  if (d != a.extent(0) * a.extent(1)) {
    throw ContractError("scaled_inner_product: d=" + std::to_string(d) + " must equal H*W=" +
                        std::to_string(a.extent(0) * a.extent(1)));
  }
  double acc = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(pa[i]) * pb[i];
  macs::add(a.size());
  return static_cast<float>(acc / std::sqrt(static_cast<double>(d)));
}

Tensor channel_inner(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "channel_inner");
  if (a.rank() != 3) throw ShapeError("channel_inner: expected [C,h,w], got " + a.shape_str());
  const int c = a.extent(0);
  const std::size_t plane = static_cast<std::size_t>(a.extent(1)) * a.extent(2);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(plane));
  Tensor out({c});
  for (int i = 0; i < c; ++i) {
    const float* pa = a.data() + static_cast<std::size_t>(i) * plane;
    const float* pb = b.data() + static_cast<std::size_t>(i) * plane;
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += static_cast<double>(pa[p]) * pb[p];
    out[static_cast<std::size_t>(i)] = static_cast<float>(acc * inv_sqrt_d);
  }
  macs::add(static_cast<std::uint64_t>(c) * plane);
  return out;
}

Tensor channel_gram(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "channel_gram");
  if (a.rank() != 3) throw ShapeError("channel_gram: expected [C,h,w], got " + a.shape_str());
  const int c = a.extent(0);
  const std::size_t plane = static_cast<std::size_t>(a.extent(1)) * a.extent(2);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(plane));
  Tensor out({c, c});
  for (int i = 0; i < c; ++i) {
    const float* pa = a.data() + static_cast<std::size_t>(i) * plane;
    for (int j = 0; j < c; ++j) {
      const float* pb = b.data() + static_cast<std::size_t>(j) * plane;
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += static_cast<double>(pa[p]) * pb[p];
      out[static_cast<std::size_t>(i) * c + j] = static_cast<float>(acc * inv_sqrt_d);
    }
  }
  macs::add(static_cast<std::uint64_t>(c) * c * plane);
  return out;
}

Tensor broadcast_scale(const Tensor& x, const Tensor& s) {
  if (s.rank() != 1 || s.extent(0) != x.extent(0)) {
    throw ShapeError("broadcast_scale: weights " + s.shape_str() + " must be [" +
                     std::to_string(x.extent(0)) + "]");
  }
  const std::size_t unit = trailing_size(x);
  Tensor out(x.shape());
  for (int c = 0; c < x.extent(0); ++c) {
    const float wv = s[static_cast<std::size_t>(c)];
    const float* ip = x.data() + static_cast<std::size_t>(c) * unit;
    float* op = out.data() + static_cast<std::size_t>(c) * unit;
    for (std::size_t p = 0; p < unit; ++p) op[p] = wv * ip[p];
  }
  macs::add(x.size());
  return out;
}

Tensor mix_maps(const Tensor& maps, const Tensor& w) {
  if (w.rank() != 2 || w.extent(1) != maps.extent(0)) {
    throw ShapeError("mix_maps: weights " + w.shape_str() + " do not match maps " +
                     maps.shape_str());
  }
  const int c_in = maps.extent(0), rows = w.extent(0);
  const std::size_t unit = trailing_size(maps);
  std::vector<int> shape = maps.shape();
  shape[0] = rows;
  Tensor out(shape);
  for (int r = 0; r < rows; ++r) {
    float* op = out.data() + static_cast<std::size_t>(r) * unit;
    for (int c = 0; c < c_in; ++c) {
      const float wv = w[static_cast<std::size_t>(r) * c_in + c];
      const float* ip = maps.data() + static_cast<std::size_t>(c) * unit;
      for (std::size_t p = 0; p < unit; ++p) op[p] += wv * ip[p];
    }
  }
  macs::add(static_cast<std::uint64_t>(rows) * c_in * unit);
  return out;
}

// --- Resolution ---------------------------------------------------------------

Tensor avg_pool2(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("avg_pool2: need at least [H,W], got " + t.shape_str());
  const int h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("avg_pool2: spatial extents must be even, got " + t.shape_str());
  }
  std::vector<int> shape = t.shape();
  shape[shape.size() - 2] = h / 2;
  shape[shape.size() - 1] = w / 2;
  Tensor out(shape);
  const std::size_t planes = t.size() / (static_cast<std::size_t>(h) * w);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const float* in = t.data() + pl * h * w;
    float* o = out.data() + pl * (h / 2) * (w / 2);
    for (int y = 0; y < h / 2; ++y) {
      for (int x = 0; x < w / 2; ++x) {
        const float a = in[(2 * y) * w + 2 * x];
        const float b = in[(2 * y) * w + 2 * x + 1];
        const float c = in[(2 * y + 1) * w + 2 * x];
        const float d = in[(2 * y + 1) * w + 2 * x + 1];
        o[y * (w / 2) + x] = 0.25f * (a + b + c + d);
      }
    }
  }
  return out;
}

Tensor upsample2(const Tensor& t) {
  if (t.rank() < 2) throw ShapeError("upsample2: need at least [H,W], got " + t.shape_str());
  const int h = t.extent(t.rank() - 2), w = t.extent(t.rank() - 1);
  std::vector<int> shape = t.shape();
  shape[shape.size() - 2] = h * 2;
  shape[shape.size() - 1] = w * 2;
  Tensor out(shape);
  const std::size_t planes = t.size() / (static_cast<std::size_t>(h) * w);
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const float* in = t.data() + pl * h * w;
    float* o = out.data() + pl * (2 * h) * (2 * w);
    for (int y = 0; y < 2 * h; ++y) {
      for (int x = 0; x < 2 * w; ++x) {
        o[y * (2 * w) + x] = in[(y / 2) * w + (x / 2)];
      }
    }
  }
  return out;
}

// --- Reductions ---------------------------------------------------------------

double sum(const Tensor& t) {
  double acc = 0.0;
  const float* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) acc += p[i];
  return acc;
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace gdcaf
