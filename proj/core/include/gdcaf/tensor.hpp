#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

namespace gdcaf {

// Dense float32 array in row-major order (last axis fastest). Every extent is
// at least 1 and product(shape) == data size. Tensors produced by ops are
// treated as immutable values and may be shared read-only across threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<float> values);

  static Tensor full(std::vector<int> shape, float value);
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  const std::vector<int>& shape() const { return shape_; }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  // Checked multi-index access; hot loops should index data() directly.
  template <class... Ix>
  float& at(Ix... ix) {
    static_assert((std::is_convertible_v<Ix, int> && ...));
    const int idx[] = {static_cast<int>(ix)...};
    return data_[offset(idx, sizeof...(ix))];
  }
  template <class... Ix>
  float at(Ix... ix) const {
    static_assert((std::is_convertible_v<Ix, int> && ...));
    const int idx[] = {static_cast<int>(ix)...};
    return data_[offset(idx, sizeof...(ix))];
  }

  std::size_t offset(const int* index, std::size_t n) const;

  // Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int> new_shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::string shape_str(const std::vector<int>& shape);

// --- Elementwise and structural ops -----------------------------------------

Tensor relu(const Tensor& t);
Tensor leaky_relu(const Tensor& t, float slope);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, float c);

// Concatenate along axis 0; all parts share the trailing extents.
Tensor concat0(const std::vector<const Tensor*>& parts);
// [start, start+count) along axis 0.
Tensor slice0(const Tensor& t, int start, int count);

// --- Convolution -------------------------------------------------------------

// input [C,H,W], kernels [C,M,kh,kw] with odd kh,kw; zero "same" padding.
// Output channel c*M+m convolves input channel c with kernel (c,m).
Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernels);

// input [C,H,W], weights [C_out,C], bias [C_out]; per-pixel channel mixture.
Tensor conv2d_pointwise(const Tensor& input, const Tensor& weights, const Tensor& bias);

// --- Normalization and attention arithmetic ----------------------------------

// Per-group zero mean / unit variance over (group channels, H, W), then
// per-channel affine. C must be divisible by groups.
Tensor group_norm(const Tensor& t, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps);

// Numerically stable softmax of a rank-1 tensor.
Tensor softmax(const Tensor& v);
// Softmax of a [R,C] matrix along the given axis (0 = down columns, 1 = along rows).
Tensor softmax2d(const Tensor& m, int axis);

// <a, b> / sqrt(d) with d == H*W, summed over all pixels of the two maps.
float scaled_inner_product(const Tensor& a, const Tensor& b, int d);
// Per-channel <a[c], b[c]> / sqrt(h*w) for two [C,h,w] stacks -> [C].
Tensor channel_inner(const Tensor& a, const Tensor& b);
// All pairs: out[i][j] = <a[i], b[j]> / sqrt(h*w) -> [C,C].
Tensor channel_gram(const Tensor& a, const Tensor& b);
// Scale map c of x by s[c]; s has extent x.shape[0].
Tensor broadcast_scale(const Tensor& x, const Tensor& s);
// out[r] = sum_c w[r][c] * maps[c] for maps [C,...] and w [R,C] -> [R,...].
Tensor mix_maps(const Tensor& maps, const Tensor& w);

// --- Resolution changes -------------------------------------------------------

// 2x2 mean pooling / nearest-neighbor doubling over the last two axes.
Tensor avg_pool2(const Tensor& t);
Tensor upsample2(const Tensor& t);

// --- Reductions (accumulated in 64-bit) ---------------------------------------

double sum(const Tensor& t);
double mse(const Tensor& a, const Tensor& b);

// --- Multiply-accumulate instrument -------------------------------------------
// Convolutions and attention reductions report their MAC counts here so that
// the relative cost of pooling configurations can be measured exactly.
namespace macs {
void reset();
std::uint64_t count();
void add(std::uint64_t n);
}  // namespace macs

}  // namespace gdcaf
