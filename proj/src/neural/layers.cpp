#include "plumecast/neural/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "plumecast/error.hpp"
#include "plumecast/parallel.hpp"

namespace plumecast::neural {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::leakyrelu: return "leakyrelu";
  }
  return "relu";
}

Activation activation_from_name(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "leakyrelu") return Activation::leakyrelu;
  throw ConfigError("activation", "unknown activation '" + std::string(s) + "'");
}

std::string_view norm_name(Norm n) {
  switch (n) {
    case Norm::batch: return "batch";
    case Norm::group: return "group";
    case Norm::none: return "none";
  }
  return "none";
}

Norm norm_from_name(std::string_view s) {
  if (s == "batch") return Norm::batch;
  if (s == "group") return Norm::group;
  if (s == "none") return Norm::none;
  throw ConfigError("norm", "unknown normalization '" + std::string(s) + "'");
}

std::string_view padding_name(Padding p) { return p == Padding::zero ? "zero" : "none"; }

Padding padding_from_name(std::string_view s) {
  if (s == "zero") return Padding::zero;
  if (s == "none") return Padding::none;
  throw ConfigError("padding", "unknown padding '" + std::string(s) + "'");
}

namespace {

template <typename Real>
Param<Real> make_param(std::string name, std::vector<std::size_t> shape, bool trainable = true) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  Param<Real> p{std::move(name), std::move(shape), std::vector<Real>(n, Real(0)), {}};
  if (trainable) p.grad.assign(n, Real(0));
  return p;
}

template <typename Real>
void uniform_fill(std::vector<Real>& v, double bound, Rng& rng) {
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
}

template <typename Real>
void require_recorded(const Tensor<Real>& cache, const char* layer) {
  if (cache.data.empty()) throw StateError(std::string(layer) + ": backward() without a recorded forward()");
}

}  // namespace

// --- Conv2d -----------------------------------------------------------------

template <typename Real>
Conv2d<Real>::Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, Padding padding, Rng& rng)
    : in_(in), out_(out), k_(kernel) {
  pad_lo_ = padding == Padding::zero ? (kernel - 1) / 2 : 0;
  pad_hi_ = padding == Padding::zero ? kernel - 1 - pad_lo_ : 0;
  weight_ = make_param<Real>(name + ".weight", {out, in, kernel, kernel});
  bias_ = make_param<Real>(name + ".bias", {out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  uniform_fill(weight_.value, bound, rng);
  uniform_fill(bias_.value, bound, rng);
}

template <typename Real>
Tensor<Real> Conv2d<Real>::forward(const Tensor<Real>& x, bool /*training*/, bool record) {
  if (x.c != in_) {
    throw ShapeError(weight_.name + ": expected " + std::to_string(in_) + " input channels, got " + std::to_string(x.c));
  }
  const std::size_t hp = x.h + pad_lo_ + pad_hi_;
  const std::size_t wp = x.w + pad_lo_ + pad_hi_;
  if (hp < k_ || wp < k_) throw ShapeError(weight_.name + ": input " + x.shape_string() + " smaller than the kernel");

  Tensor<Real> padded_storage;
  const Tensor<Real>* src = &x;
  if (pad_lo_ + pad_hi_ > 0) {
    padded_storage = Tensor<Real>(x.n, x.c, hp, wp);
    for (std::size_t n = 0; n < x.n; ++n) {
      for (std::size_t c = 0; c < x.c; ++c) {
        const Real* s = x.channel(n, c);
        Real* d = padded_storage.channel(n, c);
        for (std::size_t y = 0; y < x.h; ++y) std::copy(s + y * x.w, s + (y + 1) * x.w, d + (y + pad_lo_) * wp + pad_lo_);
      }
    }
    src = &padded_storage;
  }

  const std::size_t oh = hp - k_ + 1;
  const std::size_t ow = wp - k_ + 1;
  Tensor<Real> y(x.n, out_, oh, ow);
  const Real* w = weight_.value.data();
  const Real* b = bias_.value.data();
  parallel_for(static_cast<std::ptrdiff_t>(x.n * out_), [&](std::ptrdiff_t job) {
    const std::size_t n = static_cast<std::size_t>(job) / out_;
    const std::size_t co = static_cast<std::size_t>(job) % out_;
    Real* dst = y.channel(n, co);
    std::fill(dst, dst + oh * ow, b[co]);
    for (std::size_t ci = 0; ci < in_; ++ci) {
      const Real* plane = src->channel(n, ci);
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const Real wv = w[((co * in_ + ci) * k_ + ky) * k_ + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const Real* row = plane + (oy + ky) * wp + kx;
            Real* out = dst + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) out[ox] += wv * row[ox];
          }
        }
      }
    }
  });

  if (record) {
    input_ = src == &x ? x : std::move(padded_storage);
    in_h_ = x.h;
    in_w_ = x.w;
  } else {
    input_ = Tensor<Real>();
  }
  return y;
}

template <typename Real>
Tensor<Real> Conv2d<Real>::backward(const Tensor<Real>& dy) {
  require_recorded(input_, "Conv2d");
  const Tensor<Real>& x = input_;
  const std::size_t hp = x.h, wp = x.w;
  const std::size_t oh = dy.h, ow = dy.w;
  if (dy.c != out_ || dy.n != x.n || oh != hp - k_ + 1 || ow != wp - k_ + 1) {
    throw ShapeError(weight_.name + ": gradient shape " + dy.shape_string() + " does not match the forward pass");
  }
  const std::size_t batch = x.n;
  const Real* w = weight_.value.data();

  // Parameter gradients, one output channel per job.
  parallel_for(static_cast<std::ptrdiff_t>(out_), [&](std::ptrdiff_t job) {
    const auto co = static_cast<std::size_t>(job);
    std::vector<Real> acc(ow);
    Real db = 0;
    for (std::size_t n = 0; n < batch; ++n) {
      const Real* g = dy.channel(n, co);
      for (std::size_t i = 0; i < oh * ow; ++i) db += g[i];
    }
    bias_.grad[co] += db;
    for (std::size_t ci = 0; ci < in_; ++ci) {
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          std::fill(acc.begin(), acc.end(), Real(0));
          for (std::size_t n = 0; n < batch; ++n) {
            const Real* g = dy.channel(n, co);
            const Real* plane = x.channel(n, ci);
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const Real* row = plane + (oy + ky) * wp + kx;
              const Real* grow = g + oy * ow;
              for (std::size_t ox = 0; ox < ow; ++ox) acc[ox] += grow[ox] * row[ox];
            }
          }
          Real s = 0;
          for (std::size_t ox = 0; ox < ow; ++ox) s += acc[ox];
          weight_.grad[((co * in_ + ci) * k_ + ky) * k_ + kx] += s;
        }
      }
    }
  });

  // Input gradient, one (sample, input channel) per job.
  Tensor<Real> dxp(batch, in_, hp, wp);
  parallel_for(static_cast<std::ptrdiff_t>(batch * in_), [&](std::ptrdiff_t job) {
    const std::size_t n = static_cast<std::size_t>(job) / in_;
    const std::size_t ci = static_cast<std::size_t>(job) % in_;
    Real* dst = dxp.channel(n, ci);
    for (std::size_t co = 0; co < out_; ++co) {
      const Real* g = dy.channel(n, co);
      for (std::size_t ky = 0; ky < k_; ++ky) {
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const Real wv = w[((co * in_ + ci) * k_ + ky) * k_ + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            Real* row = dst + (oy + ky) * wp + kx;
            const Real* grow = g + oy * ow;
            for (std::size_t ox = 0; ox < ow; ++ox) row[ox] += wv * grow[ox];
          }
        }
      }
    }
  });
  input_ = Tensor<Real>();
  if (pad_lo_ + pad_hi_ == 0) return dxp;
  return crop(dxp, pad_lo_, pad_lo_, in_h_, in_w_);
}

// --- UpConv2x2 ----------------------------------------------------------------

template <typename Real>
UpConv2x2<Real>::UpConv2x2(std::string name, std::size_t in, std::size_t out, Rng& rng) : in_(in), out_(out) {
  weight_ = make_param<Real>(name + ".weight", {in, out, 2, 2});
  bias_ = make_param<Real>(name + ".bias", {out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(out * 4));
  uniform_fill(weight_.value, bound, rng);
  uniform_fill(bias_.value, bound, rng);
}

template <typename Real>
Tensor<Real> UpConv2x2<Real>::forward(const Tensor<Real>& x, bool /*training*/, bool record) {
  if (x.c != in_) throw ShapeError(weight_.name + ": channel mismatch");
  const std::size_t oh = 2 * x.h, ow = 2 * x.w;
  Tensor<Real> y(x.n, out_, oh, ow);
  const Real* w = weight_.value.data();
  parallel_for(static_cast<std::ptrdiff_t>(x.n * out_), [&](std::ptrdiff_t job) {
    const std::size_t n = static_cast<std::size_t>(job) / out_;
    const std::size_t co = static_cast<std::size_t>(job) % out_;
    Real* dst = y.channel(n, co);
    std::fill(dst, dst + oh * ow, bias_.value[co]);
    for (std::size_t ci = 0; ci < in_; ++ci) {
      const Real* src = x.channel(n, ci);
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const Real wv = w[((ci * out_ + co) * 2 + dy) * 2 + dx];
          for (std::size_t iy = 0; iy < x.h; ++iy) {
            Real* out = dst + (2 * iy + dy) * ow + dx;
            const Real* in = src + iy * x.w;
            for (std::size_t ix = 0; ix < x.w; ++ix) out[2 * ix] += wv * in[ix];
          }
        }
      }
    }
  });
  input_ = record ? x : Tensor<Real>();
  return y;
}

template <typename Real>
Tensor<Real> UpConv2x2<Real>::backward(const Tensor<Real>& g) {
  require_recorded(input_, "UpConv2x2");
  const Tensor<Real>& x = input_;
  const std::size_t ow = 2 * x.w;
  const Real* w = weight_.value.data();

  parallel_for(static_cast<std::ptrdiff_t>(out_), [&](std::ptrdiff_t job) {
    const auto co = static_cast<std::size_t>(job);
    Real db = 0;
    for (std::size_t n = 0; n < x.n; ++n) {
      const Real* gp = g.channel(n, co);
      for (std::size_t i = 0; i < g.plane(); ++i) db += gp[i];
    }
    bias_.grad[co] += db;
    for (std::size_t ci = 0; ci < in_; ++ci) {
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          Real s = 0;
          for (std::size_t n = 0; n < x.n; ++n) {
            const Real* gp = g.channel(n, co);
            const Real* in = x.channel(n, ci);
            for (std::size_t iy = 0; iy < x.h; ++iy) {
              for (std::size_t ix = 0; ix < x.w; ++ix) s += in[iy * x.w + ix] * gp[(2 * iy + dy) * ow + 2 * ix + dx];
            }
          }
          weight_.grad[((ci * out_ + co) * 2 + dy) * 2 + dx] += s;
        }
      }
    }
  });

  Tensor<Real> dx_t(x.n, in_, x.h, x.w);
  parallel_for(static_cast<std::ptrdiff_t>(x.n * in_), [&](std::ptrdiff_t job) {
    const std::size_t n = static_cast<std::size_t>(job) / in_;
    const std::size_t ci = static_cast<std::size_t>(job) % in_;
    Real* dst = dx_t.channel(n, ci);
    for (std::size_t co = 0; co < out_; ++co) {
      const Real* gp = g.channel(n, co);
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const Real wv = w[((ci * out_ + co) * 2 + dy) * 2 + dx];
          for (std::size_t iy = 0; iy < x.h; ++iy) {
            const Real* grow = gp + (2 * iy + dy) * ow + dx;
            Real* row = dst + iy * x.w;
            for (std::size_t ix = 0; ix < x.w; ++ix) row[ix] += wv * grow[2 * ix];
          }
        }
      }
    }
  });
  input_ = Tensor<Real>();
  return dx_t;
}

// --- MaxPool2x2 ---------------------------------------------------------------

template <typename Real>
Tensor<Real> MaxPool2x2<Real>::forward(const Tensor<Real>& x, bool /*training*/, bool record) {
  if (x.h % 2 != 0 || x.w % 2 != 0) {
    throw ShapeError("max pooling needs even spatial sizes, got " + std::to_string(x.h) + "x" + std::to_string(x.w));
  }
  const std::size_t oh = x.h / 2, ow = x.w / 2;
  Tensor<Real> y(x.n, x.c, oh, ow);
  if (record) argmax_.assign(y.size(), 0);
  parallel_for(static_cast<std::ptrdiff_t>(x.n * x.c), [&](std::ptrdiff_t job) {
    const std::size_t plane = static_cast<std::size_t>(job);
    const Real* src = x.data.data() + plane * x.plane();
    Real* dst = y.data.data() + plane * y.plane();
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const Real* p = src + 2 * oy * x.w + 2 * ox;
        const Real cand[4] = {p[0], p[1], p[x.w], p[x.w + 1]};
        unsigned char best = 0;
        for (unsigned char k = 1; k < 4; ++k) {
          if (cand[k] > cand[best]) best = k;
        }
        dst[oy * ow + ox] = cand[best];
        if (record) argmax_[plane * y.plane() + oy * ow + ox] = best;
      }
    }
  });
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  if (!record) argmax_.clear();
  return y;
}

template <typename Real>
Tensor<Real> MaxPool2x2<Real>::backward(const Tensor<Real>& dy) {
  if (argmax_.empty()) throw StateError("MaxPool2x2: backward() without a recorded forward()");
  Tensor<Real> dx(n_, c_, h_, w_);
  const std::size_t ow = w_ / 2;
  for (std::size_t plane = 0; plane < n_ * c_; ++plane) {
    const Real* g = dy.data.data() + plane * dy.plane();
    Real* d = dx.data.data() + plane * dx.plane();
    for (std::size_t i = 0; i < dy.plane(); ++i) {
      const std::size_t oy = i / ow, ox = i % ow;
      const unsigned char k = argmax_[plane * dy.plane() + i];
      d[(2 * oy + (k >> 1)) * w_ + 2 * ox + (k & 1)] += g[i];
    }
  }
  argmax_.clear();
  return dx;
}

// --- ActivationLayer ----------------------------------------------------------

template <typename Real>
Tensor<Real> ActivationLayer<Real>::forward(const Tensor<Real>& x, bool /*training*/, bool record) {
  Tensor<Real> y = x;
  switch (kind_) {
    case Activation::relu:
      for (auto& v : y.data) v = v > Real(0) ? v : Real(0);
      break;
    case Activation::leakyrelu:
      for (auto& v : y.data) v = v > Real(0) ? v : static_cast<Real>(kLeakySlope) * v;
      break;
    case Activation::tanh:
      for (auto& v : y.data) v = std::tanh(v);
      break;
    case Activation::sigmoid:
      for (auto& v : y.data) v = Real(1) / (Real(1) + std::exp(-v));
      break;
  }
  if (record) {
    input_ = x;
    output_ = y;
  } else {
    input_ = Tensor<Real>();
    output_ = Tensor<Real>();
  }
  return y;
}

template <typename Real>
Tensor<Real> ActivationLayer<Real>::backward(const Tensor<Real>& dy) {
  require_recorded(input_, "Activation");
  Tensor<Real> dx = dy;
  const auto& x = input_.data;
  const auto& y = output_.data;
  switch (kind_) {
    case Activation::relu:
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] = x[i] > Real(0) ? dx.data[i] : Real(0);
      break;
    case Activation::leakyrelu:
      for (std::size_t i = 0; i < dx.size(); ++i) {
        dx.data[i] = x[i] > Real(0) ? dx.data[i] : static_cast<Real>(kLeakySlope) * dx.data[i];
      }
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= Real(1) - y[i] * y[i];
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y[i] * (Real(1) - y[i]);
      break;
  }
  input_ = Tensor<Real>();
  output_ = Tensor<Real>();
  return dx;
}

// --- NormLayer -----------------------------------------------------------------

template <typename Real>
std::size_t NormLayer<Real>::group_count(std::size_t channels) {
  return std::gcd(channels, std::size_t{8});
}

template <typename Real>
NormLayer<Real>::NormLayer(std::string name, Norm kind, std::size_t channels)
    : kind_(kind), channels_(channels), groups_(group_count(channels)) {
  gamma_ = make_param<Real>(name + ".gamma", {channels});
  beta_ = make_param<Real>(name + ".beta", {channels});
  std::fill(gamma_.value.begin(), gamma_.value.end(), Real(1));
  if (kind_ == Norm::batch) {
    running_mean_ = make_param<Real>(name + ".running_mean", {channels}, false);
    running_var_ = make_param<Real>(name + ".running_var", {channels}, false);
    std::fill(running_var_.value.begin(), running_var_.value.end(), Real(1));
  }
}

template <typename Real>
std::vector<Param<Real>*> NormLayer<Real>::buffers() {
  if (kind_ == Norm::batch) return {&running_mean_, &running_var_};
  return {};
}

template <typename Real>
Tensor<Real> NormLayer<Real>::forward(const Tensor<Real>& x, bool training, bool record) {
  if (x.c != channels_) throw ShapeError(gamma_.name + ": channel mismatch");
  const std::size_t hw = x.plane();
  Tensor<Real> xhat(x.n, x.c, x.h, x.w);
  Tensor<Real> y(x.n, x.c, x.h, x.w);
  const Real eps = static_cast<Real>(kNormEpsilon);

  if (kind_ == Norm::batch) {
    used_batch_stats_ = training;
    inv_std_.assign(channels_, Real(0));
    const std::size_t count = x.n * hw;
    for (std::size_t c = 0; c < channels_; ++c) {
      Real mean, var;
      if (training) {
        double s = 0;
        for (std::size_t n = 0; n < x.n; ++n) {
          const Real* p = x.channel(n, c);
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
        }
        const double m = s / static_cast<double>(count);
        double ss = 0;
        for (std::size_t n = 0; n < x.n; ++n) {
          const Real* p = x.channel(n, c);
          for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - m) * (p[i] - m);
        }
        mean = static_cast<Real>(m);
        var = static_cast<Real>(ss / static_cast<double>(count));
        const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : ss;
        running_mean_.value[c] =
            static_cast<Real>((1.0 - kBatchNormMomentum) * running_mean_.value[c] + kBatchNormMomentum * m);
        running_var_.value[c] =
            static_cast<Real>((1.0 - kBatchNormMomentum) * running_var_.value[c] + kBatchNormMomentum * unbiased);
      } else {
        mean = running_mean_.value[c];
        var = running_var_.value[c];
      }
      const Real inv = Real(1) / std::sqrt(var + eps);
      inv_std_[c] = inv;
      for (std::size_t n = 0; n < x.n; ++n) {
        const Real* p = x.channel(n, c);
        Real* h = xhat.channel(n, c);
        Real* o = y.channel(n, c);
        for (std::size_t i = 0; i < hw; ++i) {
          h[i] = (p[i] - mean) * inv;
          o[i] = gamma_.value[c] * h[i] + beta_.value[c];
        }
      }
    }
  } else {
    used_batch_stats_ = true;
    const std::size_t per = channels_ / groups_;
    const std::size_t count = per * hw;
    inv_std_.assign(x.n * groups_, Real(0));
    for (std::size_t n = 0; n < x.n; ++n) {
      for (std::size_t g = 0; g < groups_; ++g) {
        double s = 0;
        for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
          const Real* p = x.channel(n, c);
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
        }
        const double m = s / static_cast<double>(count);
        double ss = 0;
        for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
          const Real* p = x.channel(n, c);
          for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - m) * (p[i] - m);
        }
        const Real inv = Real(1) / std::sqrt(static_cast<Real>(ss / static_cast<double>(count)) + eps);
        inv_std_[n * groups_ + g] = inv;
        for (std::size_t c = g * per; c < (g + 1) * per; ++c) {
          const Real* p = x.channel(n, c);
          Real* h = xhat.channel(n, c);
          Real* o = y.channel(n, c);
          for (std::size_t i = 0; i < hw; ++i) {
            h[i] = (p[i] - static_cast<Real>(m)) * inv;
            o[i] = gamma_.value[c] * h[i] + beta_.value[c];
          }
        }
      }
    }
  }
  xhat_ = record ? std::move(xhat) : Tensor<Real>();
  return y;
}

template <typename Real>
Tensor<Real> NormLayer<Real>::backward(const Tensor<Real>& dy) {
  require_recorded(xhat_, "NormLayer");
  const Tensor<Real>& xh = xhat_;
  const std::size_t hw = xh.plane();
  Tensor<Real> dx(xh.n, xh.c, xh.h, xh.w);

  for (std::size_t c = 0; c < channels_; ++c) {
    double dg = 0, db = 0;
    for (std::size_t n = 0; n < xh.n; ++n) {
      const Real* g = dy.channel(n, c);
      const Real* h = xh.channel(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        dg += g[i] * h[i];
        db += g[i];
      }
    }
    gamma_.grad[c] += static_cast<Real>(dg);
    beta_.grad[c] += static_cast<Real>(db);
  }

  // Each statistic group: dx = inv/M * (M*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)).
  auto group_backward = [&](const std::vector<std::pair<std::size_t, std::size_t>>& members, Real inv) {
    double s1 = 0, s2 = 0;
    std::size_t m = 0;
    for (const auto& [n, c] : members) {
      const Real* g = dy.channel(n, c);
      const Real* h = xh.channel(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = static_cast<double>(g[i]) * gamma_.value[c];
        s1 += d;
        s2 += d * h[i];
      }
      m += hw;
    }
    const double mm = static_cast<double>(m);
    for (const auto& [n, c] : members) {
      const Real* g = dy.channel(n, c);
      const Real* h = xh.channel(n, c);
      Real* o = dx.channel(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = static_cast<double>(g[i]) * gamma_.value[c];
        o[i] = static_cast<Real>(inv / mm * (mm * d - s1 - h[i] * s2));
      }
    }
  };

  if (kind_ == Norm::batch && !used_batch_stats_) {
    for (std::size_t n = 0; n < xh.n; ++n) {
      for (std::size_t c = 0; c < channels_; ++c) {
        const Real* g = dy.channel(n, c);
        Real* o = dx.channel(n, c);
        for (std::size_t i = 0; i < hw; ++i) o[i] = g[i] * gamma_.value[c] * inv_std_[c];
      }
    }
  } else if (kind_ == Norm::batch) {
    for (std::size_t c = 0; c < channels_; ++c) {
      std::vector<std::pair<std::size_t, std::size_t>> members;
      for (std::size_t n = 0; n < xh.n; ++n) members.emplace_back(n, c);
      group_backward(members, inv_std_[c]);
    }
  } else {
    const std::size_t per = channels_ / groups_;
    for (std::size_t n = 0; n < xh.n; ++n) {
      for (std::size_t g = 0; g < groups_; ++g) {
        std::vector<std::pair<std::size_t, std::size_t>> members;
        for (std::size_t c = g * per; c < (g + 1) * per; ++c) members.emplace_back(n, c);
        group_backward(members, inv_std_[n * groups_ + g]);
      }
    }
  }
  xhat_ = Tensor<Real>();
  return dx;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class UpConv2x2<float>;
template class UpConv2x2<double>;
template class MaxPool2x2<float>;
template class MaxPool2x2<double>;
template class ActivationLayer<float>;
template class ActivationLayer<double>;
template class NormLayer<float>;
template class NormLayer<double>;

}  // namespace plumecast::neural
