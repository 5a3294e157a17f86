#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "gdcaf/errors.hpp"
#include "gdcaf/nn.hpp"
#include "gdcaf/rng.hpp"
#include "gdcaf/tensor.hpp"

using namespace gdcaf;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Naive convolution oracle: literal quadruple loop with zero padding.
Tensor naive_depthwise(const Tensor& in, const Tensor& ker) {
  const int c = in.extent(0), h = in.extent(1), w = in.extent(2);
  const int m = ker.extent(1), kh = ker.extent(2), kw = ker.extent(3);
  Tensor out({c * m, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int mm = 0; mm < m; ++mm) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int dy = -(kh / 2); dy <= kh / 2; ++dy) {
            for (int dx = -(kw / 2); dx <= kw / 2; ++dx) {
              const int iy = y + dy, ix = x + dx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(in.at(ch, iy, ix)) *
                     ker.at(ch, mm, dy + kh / 2, dx + kw / 2);
            }
          }
          out.at(ch * m + mm, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

Tensor naive_pointwise(const Tensor& in, const Tensor& wt, const Tensor& bias) {
  const int c = in.extent(0), h = in.extent(1), w = in.extent(2);
  const int c_out = wt.extent(0);
  Tensor out({c_out, h, w});
  for (int o = 0; o < c_out; ++o) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = bias.at(o);
        for (int ch = 0; ch < c; ++ch) acc += static_cast<double>(wt.at(o, ch)) * in.at(ch, y, x);
        out.at(o, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

void check_close(const Tensor& a, const Tensor& b, double tol) {
  REQUIRE(a.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CAPTURE(i);
    CHECK(std::abs(static_cast<double>(a[i]) - b[i]) <= tol);
  }
}

}  // namespace

TEST_CASE("row-major set/get round-trips at every index") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> shape;
    const int rank = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < rank; ++i) shape.push_back(1 + static_cast<int>(rng.below(5)));
    Tensor t(shape);
    std::vector<int> idx(shape.size());
    std::size_t flat = 0;
    // Walk the full index space in row-major order; offsets must be 0,1,2,...
    for (;;) {
      CHECK(t.offset(idx.data(), idx.size()) == flat);
      t[flat] = static_cast<float>(flat);
      ++flat;
      int axis = rank - 1;
      while (axis >= 0 && ++idx[static_cast<std::size_t>(axis)] == shape[static_cast<std::size_t>(axis)]) {
        idx[static_cast<std::size_t>(axis)] = 0;
        --axis;
      }
      if (axis < 0) break;
    }
    CHECK(flat == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == static_cast<float>(i));
  }
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor({2, 0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3, 0.0f)), ShapeError);
  Tensor t({2, 3});
  CHECK_THROWS_AS(t.reshaped({5}), ShapeError);
  CHECK(t.reshaped({3, 2}).extent(0) == 3);
}

TEST_CASE("depthwise conv: hand-computed 3x3 all-ones") {
  Tensor in = Tensor::full({1, 3, 3}, 1.0f);
  Tensor ker = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor out = conv2d_depthwise(in, ker);
  CHECK(out.at(0, 1, 1) == doctest::Approx(9.0f));
  CHECK(out.at(0, 0, 1) == doctest::Approx(6.0f));
  CHECK(out.at(0, 1, 0) == doctest::Approx(6.0f));
  CHECK(out.at(0, 0, 0) == doctest::Approx(4.0f));
  CHECK(out.at(0, 2, 2) == doctest::Approx(4.0f));
}

TEST_CASE("depthwise conv: zero input, channel fan-out, oracle match") {
  Rng rng(11);
  Tensor zeros({3, 4, 4});
  Tensor ker = random_tensor({3, 2, 3, 3}, rng);
  Tensor out = conv2d_depthwise(zeros, ker);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
  CHECK(out.extent(0) == 6);  // two kernels per channel

  for (int trial = 0; trial < 5; ++trial) {
    Tensor in = random_tensor({2, 5, 6}, rng);
    Tensor k = random_tensor({2, 2, 3, 3}, rng);
    check_close(conv2d_depthwise(in, k), naive_depthwise(in, k), 1e-5);
  }
  CHECK_THROWS_AS(conv2d_depthwise(zeros, random_tensor({2, 2, 3, 3}, rng)), ShapeError);
  CHECK_THROWS_AS(conv2d_depthwise(zeros, random_tensor({3, 1, 2, 2}, rng)), ShapeError);
}

TEST_CASE("pointwise conv: identity, channel sum, reduction, oracle") {
  Rng rng(13);
  Tensor in = random_tensor({2, 3, 3}, rng);
  Tensor eye({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor zero_bias({2});
  check_close(conv2d_pointwise(in, eye, zero_bias), in, 0.0);

  Tensor sum_w({1, 2}, {1.0f, 1.0f});
  Tensor sum_out = conv2d_pointwise(in, sum_w, Tensor({1}));
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      CHECK(sum_out.at(0, y, x) == doctest::Approx(in.at(0, y, x) + in.at(1, y, x)));
    }
  }

  Tensor wide = random_tensor({24, 2, 2}, rng);
  Tensor reduce_w = random_tensor({1, 24}, rng);
  CHECK(conv2d_pointwise(wide, reduce_w, Tensor({1})).extent(0) == 1);

  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = random_tensor({4, 3, 5}, rng);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3}, rng);
    check_close(conv2d_pointwise(x, w, b), naive_pointwise(x, w, b), 1e-5);
  }
  CHECK_THROWS_AS(conv2d_pointwise(in, random_tensor({2, 3}, rng), zero_bias), ShapeError);
}

TEST_CASE("relu and leaky_relu") {
  Tensor t({4}, {-1.0f, 2.0f, 0.0f, -0.5f});
  Tensor r = relu(t);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 2.0f);
  Tensor l = leaky_relu(t, 0.2f);
  CHECK(l[0] == doctest::Approx(-0.2f));
  CHECK(l[1] == 2.0f);

  Rng rng(3);
  Tensor x = random_tensor({32}, rng, -2.0f, 2.0f);
  check_close(leaky_relu(x, 0.0f), relu(x), 0.0);
}

TEST_CASE("softmax: uniform, shift invariance, closed form") {
  Tensor zeros({4});
  Tensor u = softmax(zeros);
  for (int i = 0; i < 4; ++i) CHECK(u[static_cast<std::size_t>(i)] == doctest::Approx(0.25));

  Tensor big({2}, {1000.0f, 1000.0f});
  Tensor s = softmax(big);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(s[0]));

  Tensor logs({2}, {std::log(1.0f), std::log(3.0f)});
  Tensor p = softmax(logs);
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-5));

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = random_tensor({6}, rng, -3.0f, 3.0f);
    Tensor sm = softmax(v);
    double total = 0.0;
    for (std::size_t i = 0; i < sm.size(); ++i) total += sm[i];
    CHECK(std::abs(total - 1.0) <= 1e-6);
    const float c = rng.uniform(-5.0f, 5.0f);
    Tensor shifted = v;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += c;
    Tensor sm2 = softmax(shifted);
    for (std::size_t i = 0; i < sm.size(); ++i) {
      CHECK(std::abs(static_cast<double>(sm[i]) - sm2[i]) <= 1e-5);
    }
  }
}

TEST_CASE("scaled inner product: ones, orthogonal, loop oracle") {
  Tensor ones = Tensor::full({2, 2}, 1.0f);
  CHECK(scaled_inner_product(ones, ones, 4) == doctest::Approx(2.0f));

  Tensor a({1, 2}, {1.0f, 0.0f});
  Tensor b({1, 2}, {0.0f, 1.0f});
  CHECK(scaled_inner_product(a, b, 2) == doctest::Approx(0.0f));

  Rng rng(17);
  Tensor x = random_tensor({4, 4}, rng);
  Tensor y = random_tensor({4, 4}, rng);
  double acc = 0.0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) acc += static_cast<double>(x.at(r, c)) * y.at(r, c);
  }
  CHECK(scaled_inner_product(x, y, 16) == doctest::Approx(acc / 4.0).epsilon(1e-5));

  CHECK_THROWS_AS(scaled_inner_product(x, random_tensor({3, 4}, rng), 16), ShapeError);
  CHECK_THROWS_AS(scaled_inner_product(x, y, 15), ContractError);
}

TEST_CASE("avg_pool2 and upsample2") {
  Tensor c4 = Tensor::full({4, 4}, 3.25f);
  Tensor p = avg_pool2(c4);
  CHECK(p.extent(0) == 2);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(3.25f));

  Tensor quad({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(avg_pool2(quad)[0] == doctest::Approx(2.5f));

  Tensor px({1, 1}, {7.0f});
  Tensor up = upsample2(px);
  CHECK(up.extent(0) == 2);
  for (std::size_t i = 0; i < up.size(); ++i) CHECK(up[i] == 7.0f);

  // Round trip on constants and exact global mean preservation.
  Rng rng(19);
  Tensor m = random_tensor({6, 8}, rng);
  Tensor pooled = avg_pool2(m);
  CHECK(std::abs(sum(m) / static_cast<double>(m.size()) -
                 sum(pooled) / static_cast<double>(pooled.size())) <= 1e-6);
  Tensor cmap = Tensor::full({2, 4, 4}, -0.5f);
  check_close(upsample2(avg_pool2(cmap)), cmap, 0.0);

  CHECK_THROWS_AS(avg_pool2(Tensor({3, 4})), ShapeError);
  CHECK_THROWS_AS(avg_pool2(Tensor({4, 5})), ShapeError);
}

TEST_CASE("group_norm: constants, mean shift, two-pass oracle") {
  Tensor gamma = Tensor::full({4}, 1.0f);
  Tensor beta({4});
  Tensor constant = Tensor::full({4, 3, 3}, 2.5f);
  Tensor out = group_norm(constant, 2, gamma, beta, 1e-5f);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i]) <= 1e-4f);

  Rng rng(23);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor g2 = Tensor::full({2}, 1.0f);
  Tensor b2({2}, {0.75f, 0.75f});
  Tensor normed = group_norm(x, 1, g2, b2, 1e-5f);
  double mean = sum(normed) / static_cast<double>(normed.size());
  CHECK(mean == doctest::Approx(0.75).epsilon(1e-4));

  // Independent two-pass statistics per group of one channel.
  Tensor y = group_norm(x, 2, g2, Tensor({2}), 1e-5f);
  for (int c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (int i = 0; i < 16; ++i) m += x[static_cast<std::size_t>(c * 16 + i)];
    m /= 16.0;
    for (int i = 0; i < 16; ++i) {
      const double d = x[static_cast<std::size_t>(c * 16 + i)] - m;
      v += d * d;
    }
    v /= 16.0;
    for (int i = 0; i < 16; ++i) {
      const double expected = (x[static_cast<std::size_t>(c * 16 + i)] - m) / std::sqrt(v + 1e-5);
      CHECK(y[static_cast<std::size_t>(c * 16 + i)] == doctest::Approx(expected).epsilon(1e-4));
    }
  }

  CHECK_THROWS_AS(group_norm(x, 3, g2, b2, 1e-5f), ShapeError);
}

TEST_CASE("separable parameter economy versus standard conv") {
  // Depthwise + pointwise + bias at the default width.
  const std::size_t dw = 24ull * 2 * 3 * 3;
  const std::size_t pw = 24ull * (24 * 2);
  const std::size_t separable = dw + pw + 24;
  CHECK(separable == 1608);
  CHECK(standard_conv_param_count(24, 24) == 5208);
  CHECK(separable < standard_conv_param_count(24, 24));
}

TEST_CASE("concat/slice/broadcast/mix against direct loops") {
  Rng rng(29);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({1, 3}, rng);
  Tensor cat = concat0({&a, &b});
  CHECK(cat.extent(0) == 3);
  CHECK(cat.at(2, 1) == b.at(0, 1));
  check_close(slice0(cat, 0, 2), a, 0.0);
  check_close(slice0(cat, 2, 1), b, 0.0);

  Tensor maps = random_tensor({3, 2, 2}, rng);
  Tensor weights({3}, {0.5f, -1.0f, 2.0f});
  Tensor scaled = broadcast_scale(maps, weights);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 4; ++i) {
      CHECK(scaled[static_cast<std::size_t>(c * 4 + i)] ==
            doctest::Approx(weights.at(c) * maps[static_cast<std::size_t>(c * 4 + i)]));
    }
  }

  Tensor mixw = random_tensor({2, 3}, rng);
  Tensor mixed = mix_maps(maps, mixw);
  CHECK(mixed.extent(0) == 2);
  for (int r = 0; r < 2; ++r) {
    for (int i = 0; i < 4; ++i) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) {
        acc += static_cast<double>(mixw.at(r, c)) * maps[static_cast<std::size_t>(c * 4 + i)];
      }
      CHECK(mixed[static_cast<std::size_t>(r * 4 + i)] == doctest::Approx(acc).epsilon(1e-5));
    }
  }

  Tensor gram = channel_gram(maps, maps);
  Tensor inner = channel_inner(maps, maps);
  for (int i = 0; i < 3; ++i) {
    CHECK(gram.at(i, i) == doctest::Approx(inner.at(i)));
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int p = 0; p < 4; ++p) {
        acc += static_cast<double>(maps[static_cast<std::size_t>(i * 4 + p)]) *
               maps[static_cast<std::size_t>(j * 4 + p)];
      }
      CHECK(gram.at(i, j) == doctest::Approx(acc / 2.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("mac instrument counts convolution work") {
  macs::reset();
  CHECK(macs::count() == 0);
  Rng rng(31);
  Tensor in = random_tensor({2, 4, 4}, rng);
  Tensor ker = random_tensor({2, 2, 3, 3}, rng);
  (void)conv2d_depthwise(in, ker);
  CHECK(macs::count() == 2ull * 2 * 16 * 9);
  macs::reset();
  (void)conv2d_pointwise(in, random_tensor({3, 2}, rng), random_tensor({3}, rng));
  CHECK(macs::count() == 3ull * 2 * 16);
}
