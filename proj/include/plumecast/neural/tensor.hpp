#ifndef PLUMECAST_NEURAL_TENSOR_HPP
#define PLUMECAST_NEURAL_TENSOR_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace plumecast::neural {

/// Dense NCHW tensor.
template <typename Real>
struct Tensor {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<Real> data;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_, Real fill = Real(0))
      : n(n_), c(c_), h(h_), w(w_), data(n_ * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return h * w; }
  std::size_t offset(std::size_t in, std::size_t ic) const { return (in * c + ic) * h * w; }
  Real* channel(std::size_t in, std::size_t ic) { return data.data() + offset(in, ic); }
  const Real* channel(std::size_t in, std::size_t ic) const { return data.data() + offset(in, ic); }
  Real& at(std::size_t in, std::size_t ic, std::size_t y, std::size_t x) { return data[offset(in, ic) + y * w + x]; }
  Real at(std::size_t in, std::size_t ic, std::size_t y, std::size_t x) const {
    return data[offset(in, ic) + y * w + x];
  }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Spatial window [y0, y0 + h) x [x0, x0 + w) of every sample and channel.
template <typename Real>
Tensor<Real> crop(const Tensor<Real>& t, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  Tensor<Real> out(t.n, t.c, h, w);
  for (std::size_t n = 0; n < t.n; ++n) {
    for (std::size_t c = 0; c < t.c; ++c) {
      const Real* src = t.channel(n, c);
      Real* dst = out.channel(n, c);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) dst[y * w + x] = src[(y0 + y) * t.w + x0 + x];
      }
    }
  }
  return out;
}

}  // namespace plumecast::neural

#endif
