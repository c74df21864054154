#include "plumecast/neural/unet.hpp"

#include <algorithm>
#include <string>

#include "plumecast/error.hpp"
#include "plumecast/rng.hpp"

namespace plumecast::neural {

void ConvNetConfig::validate() const {
  if (depth < 1) throw ConfigError("depth", "depth must be >= 1");
  if (depth > 10) throw ConfigError("depth", "depth must be <= 10");
  if (init_features < 1) throw ConfigError("init_features", "init_features must be >= 1");
  if (kernel_size < 2) throw ConfigError("kernel_size", "kernel_size must be >= 2");
  if (in_channels < 1) throw ConfigError("in_channels", "in_channels must be >= 1");
  if (out_channels < 1) throw ConfigError("out_channels", "out_channels must be >= 1");
}

nlohmann::json ConvNetConfig::to_json() const {
  return {{"depth", depth},
          {"init_features", init_features},
          {"kernel_size", kernel_size},
          {"padding", padding_name(padding)},
          {"repeat_inner", repeat_inner},
          {"activation", activation_name(activation)},
          {"norm", norm_name(norm)},
          {"in_channels", in_channels},
          {"out_channels", out_channels}};
}

namespace {

std::size_t read_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(key, std::string(key) + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string read_string(const nlohmann::json& j, const char* key, std::string_view fallback) {
  if (!j.contains(key)) return std::string(fallback);
  if (!j.at(key).is_string()) throw ConfigError(key, std::string(key) + " must be a string");
  return j.at(key).get<std::string>();
}

}  // namespace

ConvNetConfig ConvNetConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model", "model config must be an object");
  static const char* known[] = {"depth",      "init_features", "kernel_size", "padding",     "repeat_inner",
                                "activation", "norm",          "in_channels", "out_channels"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError(key, "unknown model field '" + key + "'");
    }
  }
  ConvNetConfig c;
  c.depth = read_count(j, "depth", c.depth);
  c.init_features = read_count(j, "init_features", c.init_features);
  c.kernel_size = read_count(j, "kernel_size", c.kernel_size);
  c.in_channels = read_count(j, "in_channels", c.in_channels);
  c.out_channels = read_count(j, "out_channels", c.out_channels);
  c.padding = padding_from_name(read_string(j, "padding", padding_name(c.padding)));
  c.activation = activation_from_name(read_string(j, "activation", activation_name(c.activation)));
  c.norm = norm_from_name(read_string(j, "norm", norm_name(c.norm)));
  if (j.contains("repeat_inner")) {
    if (!j.at("repeat_inner").is_boolean()) throw ConfigError("repeat_inner", "repeat_inner must be a boolean");
    c.repeat_inner = j.at("repeat_inner").get<bool>();
  }
  c.validate();
  return c;
}

namespace {

std::size_t convs_per_block(const ConvNetConfig& cfg) { return cfg.repeat_inner ? 3 : 1; }

std::size_t block_shrink(const ConvNetConfig& cfg) {
  return cfg.padding == Padding::none ? convs_per_block(cfg) * (cfg.kernel_size - 1) : 0;
}

// 0 when incompatible.
std::size_t try_output_size(const ConvNetConfig& cfg, std::size_t input) {
  const std::size_t shrink = block_shrink(cfg);
  std::size_t s = input;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    if (s <= shrink) return 0;
    s -= shrink;
    if (s % 2 != 0) return 0;
    s /= 2;
  }
  if (s <= shrink) return 0;
  s -= shrink;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    if (2 * s <= shrink) return 0;
    s = 2 * s - shrink;
  }
  return s;
}

}  // namespace

bool size_compatible(const ConvNetConfig& cfg, std::size_t input) { return try_output_size(cfg, input) != 0; }

std::size_t next_compatible_size(const ConvNetConfig& cfg, std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    if (size_compatible(cfg, m)) return m;
  }
}

std::size_t stride_product(const ConvNetConfig& cfg) { return std::size_t{1} << cfg.depth; }

std::size_t output_size(const ConvNetConfig& cfg, std::size_t input) {
  const std::size_t s = try_output_size(cfg, input);
  if (s != 0) return s;
  const std::size_t stride = stride_product(cfg);
  const std::size_t next = next_compatible_size(cfg, input);
  const std::size_t residue = next % stride;
  std::string msg = "input size " + std::to_string(input) + " is incompatible with depth " +
                    std::to_string(cfg.depth) + ": size must be congruent to " + std::to_string(residue) +
                    " modulo " + std::to_string(stride) + " (divisible by " + std::to_string(stride) +
                    " after context shrinkage) and at least " + std::to_string(next_compatible_size(cfg, 1)) +
                    "; next valid size is " + std::to_string(next);
  throw ShapeError(msg);
}

std::size_t margin(const ConvNetConfig& cfg) {
  const std::size_t probe = next_compatible_size(cfg, 1);
  return probe - try_output_size(cfg, probe);
}

std::size_t parameter_count(const ConvNetConfig& cfg) {
  const std::size_t k2 = cfg.kernel_size * cfg.kernel_size;
  auto conv = [&](std::size_t i, std::size_t o) { return o * i * k2 + o; };
  auto block = [&](std::size_t i, std::size_t o) {
    std::size_t n = conv(i, o) + (cfg.norm == Norm::none ? 0 : 2 * o);
    if (cfg.repeat_inner) n += 2 * conv(o, o);
    return n;
  };
  const std::size_t f = cfg.init_features;
  std::size_t total = 0;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::size_t in = l == 0 ? cfg.in_channels : f << (l - 1);
    total += block(in, f << l);
    total += (f << (l + 1)) * (f << l) * 4 + (f << l);
    total += block(2 * (f << l), f << l);
  }
  total += block(f << (cfg.depth - 1), f << cfg.depth);
  total += cfg.out_channels * f + cfg.out_channels;
  return total;
}

// --- UNet ---------------------------------------------------------------------

template <typename Real>
Tensor<Real> UNet<Real>::Block::run(const Tensor<Real>& x, bool training, bool record) {
  Tensor<Real> cur = layers.front()->forward(x, training, record);
  for (std::size_t i = 1; i < layers.size(); ++i) cur = layers[i]->forward(cur, training, record);
  return cur;
}

template <typename Real>
Tensor<Real> UNet<Real>::Block::back(Tensor<Real> dy) {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) dy = (*it)->backward(dy);
  return dy;
}

template <typename Real>
typename UNet<Real>::Block UNet<Real>::make_block(const std::string& name, std::size_t in, std::size_t out,
                                                  Rng& rng) const {
  Block b;
  const auto k = cfg_.kernel_size;
  auto conv = [&](const std::string& n, std::size_t i) {
    b.layers.push_back(std::make_unique<Conv2d<Real>>(name + "." + n, i, out, k, cfg_.padding, rng));
  };
  auto act = [&] { b.layers.push_back(std::make_unique<ActivationLayer<Real>>(cfg_.activation)); };
  auto norm = [&] {
    if (cfg_.norm != Norm::none) b.layers.push_back(std::make_unique<NormLayer<Real>>(name + ".norm", cfg_.norm, out));
  };
  if (cfg_.repeat_inner) {
    conv("conv0", in);
    act();
    conv("conv1", out);
    norm();
    act();
    conv("conv2", out);
    act();
  } else {
    conv("conv0", in);
    norm();
    act();
  }
  return b;
}

template <typename Real>
UNet<Real>::UNet(const ConvNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(substream(seed, "unet/init"));
  const std::size_t f = cfg_.init_features;
  pools_.resize(cfg_.depth);
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    const std::size_t in = l == 0 ? cfg_.in_channels : f << (l - 1);
    encoders_.push_back(make_block("enc" + std::to_string(l), in, f << l, rng));
  }
  bottleneck_ = make_block("bottleneck", f << (cfg_.depth - 1), f << cfg_.depth, rng);
  ups_.reserve(cfg_.depth);
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    ups_.emplace_back("up" + std::to_string(l), f << (l + 1), f << l, rng);
  }
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    decoders_.push_back(make_block("dec" + std::to_string(l), 2 * (f << l), f << l, rng));
  }
  head_ = std::make_unique<Conv2d<Real>>("head", f, cfg_.out_channels, 1, Padding::none, rng);
}

namespace {

template <typename Real>
Tensor<Real> concat_channels(const Tensor<Real>& a, const Tensor<Real>& b) {
  Tensor<Real> out(a.n, a.c + b.c, a.h, a.w);
  for (std::size_t n = 0; n < a.n; ++n) {
    std::copy(a.channel(n, 0), a.channel(n, 0) + a.c * a.plane(), out.channel(n, 0));
    std::copy(b.channel(n, 0), b.channel(n, 0) + b.c * b.plane(), out.channel(n, a.c));
  }
  return out;
}

template <typename Real>
Tensor<Real> channel_slice(const Tensor<Real>& t, std::size_t c0, std::size_t count) {
  Tensor<Real> out(t.n, count, t.h, t.w);
  for (std::size_t n = 0; n < t.n; ++n) {
    std::copy(t.channel(n, c0), t.channel(n, c0) + count * t.plane(), out.channel(n, 0));
  }
  return out;
}

}  // namespace

template <typename Real>
Tensor<Real> UNet<Real>::forward(const Tensor<Real>& x, bool training, bool record) {
  if (x.c != cfg_.in_channels) {
    throw ShapeError("model expects " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     std::to_string(x.c));
  }
  output_size(cfg_, x.h);
  output_size(cfg_, x.w);

  std::vector<Tensor<Real>> skips;
  skips.reserve(cfg_.depth);
  Tensor<Real> cur = x;
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    skips.push_back(encoders_[l].run(cur, training, record));
    cur = pools_[l].forward(skips.back(), training, record);
  }
  cur = bottleneck_.run(cur, training, record);
  std::vector<LevelTrace> trace(cfg_.depth);
  for (std::size_t i = cfg_.depth; i-- > 0;) {
    Tensor<Real> up = ups_[i].forward(cur, training, record);
    const Tensor<Real>& skip = skips[i];
    LevelTrace& lt = trace[i];
    lt.skip_h = skip.h;
    lt.skip_w = skip.w;
    lt.up_c = up.c;
    lt.skip_c = skip.c;
    lt.h = up.h;
    lt.w = up.w;
    lt.y0 = (skip.h - up.h) / 2;
    lt.x0 = (skip.w - up.w) / 2;
    Tensor<Real> cat = (lt.y0 == 0 && lt.x0 == 0 && skip.h == up.h && skip.w == up.w)
                           ? concat_channels(up, skip)
                           : concat_channels(up, crop(skip, lt.y0, lt.x0, up.h, up.w));
    skips[i] = Tensor<Real>();
    cur = decoders_[i].run(cat, training, record);
  }
  Tensor<Real> y = head_->forward(cur, training, record);
  if (record) trace_ = std::move(trace);
  recorded_ = record;
  return y;
}

template <typename Real>
Tensor<Real> UNet<Real>::backward(const Tensor<Real>& dy) {
  if (!recorded_) throw StateError("backward() called without a recorded forward pass");
  recorded_ = false;
  Tensor<Real> g = head_->backward(dy);
  std::vector<Tensor<Real>> skip_grads(cfg_.depth);
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    const LevelTrace& lt = trace_[i];
    Tensor<Real> gcat = decoders_[i].back(std::move(g));
    Tensor<Real> gskip = channel_slice(gcat, lt.up_c, lt.skip_c);
    Tensor<Real> full(gskip.n, lt.skip_c, lt.skip_h, lt.skip_w);
    for (std::size_t n = 0; n < full.n; ++n) {
      for (std::size_t c = 0; c < full.c; ++c) {
        const Real* src = gskip.channel(n, c);
        Real* dst = full.channel(n, c);
        for (std::size_t y = 0; y < lt.h; ++y) {
          std::copy(src + y * lt.w, src + (y + 1) * lt.w, dst + (lt.y0 + y) * lt.skip_w + lt.x0);
        }
      }
    }
    skip_grads[i] = std::move(full);
    g = ups_[i].backward(channel_slice(gcat, 0, lt.up_c));
  }
  g = bottleneck_.back(std::move(g));
  for (std::size_t l = cfg_.depth; l-- > 0;) {
    g = pools_[l].backward(g);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += skip_grads[l].data[i];
    g = encoders_[l].back(std::move(g));
  }
  return g;
}

template <typename Real>
std::vector<Param<Real>*> UNet<Real>::params() {
  std::vector<Param<Real>*> out;
  auto add_block = [&](Block& b) {
    for (auto& layer : b.layers) {
      for (auto* p : layer->params()) out.push_back(p);
    }
  };
  for (auto& b : encoders_) add_block(b);
  add_block(bottleneck_);
  for (std::size_t l = 0; l < cfg_.depth; ++l) {
    for (auto* p : ups_[l].params()) out.push_back(p);
    add_block(decoders_[l]);
  }
  for (auto* p : head_->params()) out.push_back(p);
  return out;
}

template <typename Real>
std::vector<Param<Real>*> UNet<Real>::buffers() {
  std::vector<Param<Real>*> out;
  auto add_block = [&](Block& b) {
    for (auto& layer : b.layers) {
      for (auto* p : layer->buffers()) out.push_back(p);
    }
  };
  for (auto& b : encoders_) add_block(b);
  add_block(bottleneck_);
  for (auto& b : decoders_) add_block(b);
  return out;
}

template <typename Real>
void UNet<Real>::zero_grad() {
  for (auto* p : params()) std::fill(p->grad.begin(), p->grad.end(), Real(0));
}

template <typename Real>
std::size_t UNet<Real>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->value.size();
  return n;
}

template <typename Real>
std::vector<StateEntry> UNet<Real>::state() {
  std::vector<StateEntry> out;
  auto add = [&](Param<Real>* p) { out.push_back({p->name, p->shape, std::vector<double>(p->value.begin(), p->value.end())}); };
  for (auto* p : params()) add(p);
  for (auto* p : buffers()) add(p);
  return out;
}

template <typename Real>
void UNet<Real>::load_state(const std::vector<StateEntry>& entries) {
  auto targets = params();
  for (auto* b : buffers()) targets.push_back(b);
  if (targets.size() != entries.size()) {
    throw ShapeError("state has " + std::to_string(entries.size()) + " tensors, model expects " +
                     std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i]->name != entries[i].name || targets[i]->shape != entries[i].shape ||
        targets[i]->value.size() != entries[i].values.size()) {
      throw ShapeError("state tensor '" + entries[i].name + "' does not match model tensor '" + targets[i]->name + "'");
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    std::transform(entries[i].values.begin(), entries[i].values.end(), targets[i]->value.begin(),
                   [](double v) { return static_cast<Real>(v); });
  }
}

template <typename Real>
bool shift_equivariance_check(UNet<Real>& model, const Tensor<Real>& input, std::size_t sy, std::size_t sx) {
  if (sy == 0 && sx == 0) return true;
  if (sy >= input.h || sx >= input.w) throw ShapeError("shift exceeds the input size");
  const Tensor<Real> shifted = crop(input, sy, sx, input.h - sy, input.w - sx);
  const auto& cfg = model.config();
  if (!size_compatible(cfg, shifted.h) || !size_compatible(cfg, shifted.w)) {
    output_size(cfg, shifted.h);
    output_size(cfg, shifted.w);
  }
  const Tensor<Real> full = model.forward(input, false);
  const Tensor<Real> moved = model.forward(shifted, false);
  const Tensor<Real> expected = crop(full, sy, sx, moved.h, moved.w);
  return expected.data == moved.data;
}

bool tiling_exact(const ConvNetConfig& cfg) { return cfg.padding == Padding::none && cfg.norm != Norm::group; }

namespace {

// Largest tile output <= limit that keeps tile inputs compatible and stepping
// aligned to the pooling grid; returns `full` when no smaller tile works.
std::size_t pick_tile(const ConvNetConfig& cfg, std::size_t full, std::size_t limit) {
  const std::size_t stride = stride_product(cfg);
  const std::size_t m = margin(cfg);
  for (std::size_t t = std::min(limit, full); t >= stride; --t) {
    if ((full - t) % stride == 0 && size_compatible(cfg, t + m)) return t;
  }
  return full;
}

std::vector<std::size_t> tile_origins(std::size_t full, std::size_t tile, std::size_t stride) {
  std::vector<std::size_t> out;
  const std::size_t step = tile / stride * stride;
  for (std::size_t o = 0; o + tile < full; o += step) out.push_back(o);
  out.push_back(full - tile);
  return out;
}

}  // namespace

template <typename Real>
Tensor<Real> infer_tiled(UNet<Real>& model, const Tensor<Real>& input, std::size_t tile_output) {
  const auto& cfg = model.config();
  if (!tiling_exact(cfg)) return model.forward(input, false);
  const std::size_t oh = output_size(cfg, input.h);
  const std::size_t ow = output_size(cfg, input.w);
  const std::size_t th = pick_tile(cfg, oh, tile_output);
  const std::size_t tw = pick_tile(cfg, ow, tile_output);
  if (th == oh && tw == ow) return model.forward(input, false);
  const std::size_t m = margin(cfg);
  const std::size_t stride = stride_product(cfg);
  Tensor<Real> out(input.n, cfg.out_channels, oh, ow);
  for (std::size_t oy : tile_origins(oh, th, stride)) {
    for (std::size_t ox : tile_origins(ow, tw, stride)) {
      const Tensor<Real> tile = model.forward(crop(input, oy, ox, th + m, tw + m), false);
      for (std::size_t n = 0; n < out.n; ++n) {
        for (std::size_t c = 0; c < out.c; ++c) {
          const Real* src = tile.channel(n, c);
          Real* dst = out.channel(n, c);
          for (std::size_t y = 0; y < th; ++y) std::copy(src + y * tw, src + (y + 1) * tw, dst + (oy + y) * ow + ox);
        }
      }
    }
  }
  return out;
}

template class UNet<float>;
template class UNet<double>;
template bool shift_equivariance_check(UNet<float>&, const Tensor<float>&, std::size_t, std::size_t);
template bool shift_equivariance_check(UNet<double>&, const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> infer_tiled(UNet<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> infer_tiled(UNet<double>&, const Tensor<double>&, std::size_t);

}  // namespace plumecast::neural
