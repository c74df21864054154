#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles/gradcheck.hpp"
#include "oracles/oracles.hpp"
#include "plumecast/error.hpp"
#include "plumecast/neural/checkpoint.hpp"
#include "plumecast/neural/layers.hpp"
#include "plumecast/neural/train.hpp"
#include "plumecast/neural/unet.hpp"

using namespace plumecast;
using namespace plumecast::neural;

namespace {

ConvNetConfig tiny(Padding padding = Padding::none, Norm norm = Norm::none) {
  ConvNetConfig cfg;
  cfg.depth = 2;
  cfg.init_features = 3;
  cfg.kernel_size = 3;
  cfg.padding = padding;
  cfg.norm = norm;
  cfg.in_channels = 2;
  cfg.out_channels = 1;
  return cfg;
}

template <typename Real>
bool same(const Tensor<Real>& a, const Tensor<Real>& b) {
  return a.same_shape(b) && std::equal(a.data.begin(), a.data.end(), b.data.begin());
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "plumecast_test_neural";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("identity 1x1 convolution") {
  Rng rng(1);
  Conv2d<double> conv("c", 1, 1, 1, Padding::none, rng);
  conv.weight().value = {1.0};
  conv.bias().value = {0.0};
  auto x = oracles::random_tensor<double>(2, 1, 5, 4, rng);
  auto y = conv.forward(x, false, false);
  CHECK(same(x, y));
}

TEST_CASE("valid convolution equals the nested-loop reference") {
  Rng rng(2);
  Conv2d<double> conv("c", 1, 1, 3, Padding::none, rng);
  Tensor<double> x(1, 1, 5, 5);
  std::vector<double> ramp(25);
  for (std::size_t i = 0; i < 25; ++i) ramp[i] = x.data[i] = 0.1 * double(i) + 0.03 * double(i % 5);
  auto y = conv.forward(x, false, false);
  auto ref = oracles::naive_conv_valid(ramp, 5, 5, conv.weight().value, 3, conv.bias().value[0]);
  REQUIRE(y.h == 3);
  REQUIRE(y.w == 3);
  for (std::size_t i = 0; i < 9; ++i) CHECK(y.data[i] == ref[i]);
}

TEST_CASE("zero padding keeps the size, even kernels included") {
  Rng rng(3);
  for (std::size_t k : {2u, 3u, 4u, 5u}) {
    Conv2d<double> conv("c", 2, 3, k, Padding::zero, rng);
    auto y = conv.forward(oracles::random_tensor<double>(1, 2, 7, 6, rng), false, false);
    CHECK(y.h == 7);
    CHECK(y.w == 6);
    CHECK(y.c == 3);
  }
}

TEST_CASE("zero input with zero biases gives zero output") {
  auto cfg = tiny();
  UNet<double> net(cfg, 5);
  for (auto* p : net.params()) {
    if (p->name.ends_with(".bias")) std::fill(p->value.begin(), p->value.end(), 0.0);
  }
  const std::size_t n = next_compatible_size(cfg, 20);
  auto y = net.forward(Tensor<double>(1, 2, n, n), false);
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("shape helpers agree with forward") {
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    auto cfg = oracles::random_config(rng, i % 2 ? Padding::zero : Padding::none);
    UNet<double> net(cfg, i);
    const std::size_t n = oracles::small_input_size(cfg);
    CHECK(size_compatible(cfg, n));
    auto y = net.forward(oracles::random_tensor<double>(1, cfg.in_channels, n, n + stride_product(cfg), rng), false);
    CHECK(y.h == output_size(cfg, n));
    CHECK(y.w == output_size(cfg, n + stride_product(cfg)));
    CHECK(y.c == cfg.out_channels);
    CHECK(n - y.h == margin(cfg));
    if (cfg.padding == Padding::zero) CHECK(y.h == n);
    CHECK(net.parameter_count() == parameter_count(cfg));
  }
}

TEST_CASE("parameter count closed form") {
  ConvNetConfig cfg;  // depth 4, 32 features, kernel 5, batch norm, 3 -> 2
  UNet<float> net(cfg, 0);
  CHECK(net.parameter_count() == parameter_count(cfg));
  std::size_t manual = 0;
  for (auto* p : net.params()) manual += p->value.size();
  CHECK(manual == parameter_count(cfg));
  cfg.repeat_inner = true;
  cfg.kernel_size = 4;
  cfg.norm = Norm::group;
  CHECK(UNet<float>(cfg, 0).parameter_count() == parameter_count(cfg));
}

TEST_CASE("incompatible sizes name the divisibility requirement") {
  auto cfg = tiny();
  const std::size_t n = next_compatible_size(cfg, 30);
  CHECK_FALSE(size_compatible(cfg, n + 1));
  try {
    output_size(cfg, n + 1);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(stride_product(cfg))) != std::string::npos);
    CHECK(msg.find(std::to_string(next_compatible_size(cfg, n + 1))) != std::string::npos);
  }
  UNet<double> net(cfg, 1);
  CHECK_THROWS_AS(net.forward(Tensor<double>(1, 2, n + 1, n), false), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor<double>(1, 3, n, n), false), ShapeError);
}

TEST_CASE("backward needs a recorded forward") {
  UNet<double> net(tiny(), 1);
  CHECK_THROWS_AS(net.backward(Tensor<double>(1, 1, 4, 4)), StateError);
  const std::size_t n = next_compatible_size(tiny(), 20);
  net.forward(Tensor<double>(1, 2, n, n), true, false);
  CHECK_THROWS_AS(net.backward(Tensor<double>(1, 1, 4, 4)), StateError);
}

TEST_CASE("zero loss gradient gives zero parameter gradients") {
  auto cfg = tiny(Padding::none, Norm::batch);
  UNet<double> net(cfg, 2);
  Rng rng(5);
  const std::size_t n = next_compatible_size(cfg, 20);
  auto y = net.forward(oracles::random_tensor<double>(2, 2, n, n, rng), true, true);
  net.zero_grad();
  net.backward(Tensor<double>(y.n, y.c, y.h, y.w));
  for (auto* p : net.params())
    for (double g : p->grad) CHECK(g == 0.0);
}

TEST_CASE("gradients match central differences") {
  Rng rng(2024);
  double worst = 0.0;
  std::string where;
  for (int i = 0; i < 24; ++i) {
    auto cfg = oracles::random_config(rng, i % 2 ? Padding::zero : Padding::none, true);
    UNet<double> net(cfg, 100 + i);
    const std::size_t n = oracles::small_input_size(cfg);
    auto x = oracles::random_tensor<double>(2, cfg.in_channels, n, n, rng);
    const std::size_t o = output_size(cfg, n);
    auto t = oracles::random_tensor<double>(2, cfg.out_channels, o, o, rng);
    auto res = oracles::gradient_check(net, x, t, rng, 4);
    INFO(cfg.to_json().dump(), " ", res.worst_name);
    CHECK(res.worst_rel < 1e-6);
    if (res.worst_rel > worst) {
      worst = res.worst_rel;
      where = res.worst_name + " analytic " + std::to_string(res.worst_analytic) + " numeric " +
              std::to_string(res.worst_numeric);
    }
  }
  MESSAGE("worst relative gradient error ", worst, " at ", where);
}

TEST_CASE("piecewise-linear activations") {
  Rng rng(99);
  for (Activation act : {Activation::relu, Activation::leakyrelu}) {
    for (int i = 0; i < 4; ++i) {
      auto cfg = oracles::random_config(rng, i % 2 ? Padding::zero : Padding::none);
      cfg.activation = act;
      UNet<double> net(cfg, 300 + i);
      const std::size_t n = oracles::small_input_size(cfg);
      auto x = oracles::random_tensor<double>(2, cfg.in_channels, n, n, rng);
      const std::size_t o = output_size(cfg, n);
      auto t = oracles::random_tensor<double>(2, cfg.out_channels, o, o, rng);
      auto res = oracles::gradient_check(net, x, t, rng, 4);
      INFO(cfg.to_json().dump(), " ", res.worst_name);
      CHECK(res.worst_rel < 1e-4);
    }
  }
}

TEST_CASE("single precision gradients") {
  Rng rng(7);
  auto cfg = tiny(Padding::none, Norm::none);
  cfg.activation = Activation::tanh;
  UNet<double> ref(cfg, 9);
  UNet<float> net = ref.convert<float>();
  const std::size_t n = next_compatible_size(cfg, 16);
  auto xd = oracles::random_tensor<double>(1, 2, n, n, rng);
  Tensor<float> xf(1, 2, n, n);
  for (std::size_t i = 0; i < xd.size(); ++i) xf.data[i] = float(xd.data[i]);
  const std::size_t o = output_size(cfg, n);
  auto td = oracles::random_tensor<double>(1, 1, o, o, rng);
  Tensor<float> tf(1, 1, o, o);
  for (std::size_t i = 0; i < td.size(); ++i) tf.data[i] = float(td.data[i]);
  Tensor<double> gd;
  Tensor<float> gf;
  ref.zero_grad();
  loss_value(Loss::mse, ref.forward(xd, true, true), td, &gd);
  ref.backward(gd);
  net.zero_grad();
  loss_value(Loss::mse, net.forward(xf, true, true), tf, &gf);
  net.backward(gf);
  auto pd = ref.params();
  auto pf = net.params();
  for (std::size_t k = 0; k < pd.size(); ++k) {
    for (std::size_t i = 0; i < pd[k]->grad.size(); ++i) {
      const double a = pd[k]->grad[i], b = pf[k]->grad[i];
      CHECK(std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}) < 1e-3);
    }
  }
}

TEST_CASE("duplicated samples contribute equal gradients") {
  for (Norm norm : {Norm::none, Norm::batch, Norm::group}) {
    auto cfg = tiny(Padding::none, norm);
    UNet<double> net(cfg, 3);
    Rng rng(8);
    const std::size_t n = next_compatible_size(cfg, 18);
    const std::size_t o = output_size(cfg, n);
    auto x = oracles::random_tensor<double>(1, 2, n, n, rng);
    auto t = oracles::random_tensor<double>(1, 1, o, o, rng);
    Tensor<double> x2(2, 2, n, n), t2(2, 1, o, o);
    std::copy(x.data.begin(), x.data.end(), x2.data.begin());
    std::copy(x.data.begin(), x.data.end(), x2.data.begin() + x.size());
    std::copy(t.data.begin(), t.data.end(), t2.data.begin());
    std::copy(t.data.begin(), t.data.end(), t2.data.begin() + t.size());

    auto grads = [&](const Tensor<double>& in, const Tensor<double>& tgt, Tensor<double>* dx) {
      net.zero_grad();
      Tensor<double> dy;
      loss_value(Loss::mse, net.forward(in, true, true), tgt, &dy);
      *dx = net.backward(dy);
      std::vector<double> g;
      for (auto* p : net.params()) g.insert(g.end(), p->grad.begin(), p->grad.end());
      return g;
    };
    Tensor<double> dx1, dx2;
    auto g1 = grads(x, t, &dx1);
    auto g2 = grads(x2, t2, &dx2);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(g1[i]).epsilon(1e-9));
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(dx2.data[i] == dx2.data[x.size() + i]);
      CHECK(2 * dx2.data[i] == doctest::Approx(dx1.data[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("loss functions") {
  Rng rng(9);
  auto a = oracles::random_tensor<double>(2, 1, 4, 4, rng, -3, 3);
  auto b = oracles::random_tensor<double>(2, 1, 4, 4, rng, -3, 3);
  for (Loss l : {Loss::mae, Loss::mse, Loss::huber}) {
    CHECK(loss_value(l, a, a) == 0.0);
    CHECK(loss_value(l, a, b) >= 0.0);
    CHECK(loss_from_name(loss_name(l)) == l);
  }
  const double mae = loss_value(Loss::mae, a, b), mse = loss_value(Loss::mse, a, b);
  CHECK(loss_value(Loss::huber, a, b) <= mse / 2 + 1.0 * mae);
  Tensor<double> c(1, 1, 1, 2);
  c.data = {0.5, 2.0};
  Tensor<double> z(1, 1, 1, 2);
  CHECK(loss_value(Loss::huber, c, z) == doctest::Approx((0.125 + 1.5) / 2));
  CHECK(loss_value(Loss::mae, c, z) == doctest::Approx(1.25));
  CHECK(loss_value(Loss::mse, c, z) == doctest::Approx((0.25 + 4.0) / 2));
  CHECK_THROWS_AS(loss_value(Loss::mse, a, c), ShapeError);
}

TEST_CASE("learning rate zero leaves parameters unchanged") {
  for (Optimizer kind : {Optimizer::adam, Optimizer::sgd}) {
    auto cfg = tiny(Padding::none, Norm::batch);
    UNet<double> net(cfg, 4);
    auto before = net.state();
    OptimizerState<double> opt(kind, 0.0);
    Rng rng(10);
    const std::size_t n = next_compatible_size(cfg, 16);
    const std::size_t o = output_size(cfg, n);
    train_step(net, opt, oracles::random_tensor<double>(2, 2, n, n, rng),
               oracles::random_tensor<double>(2, 1, o, o, rng), Loss::mse);
    auto after = net.state();
    for (std::size_t k = 0; k < before.size(); ++k) {
      if (before[k].name.find("running") != std::string::npos) continue;
      CHECK(before[k].values == after[k].values);
    }
    CHECK(opt.steps() == 1);
  }
}

TEST_CASE("Adam converges on a convex quadratic") {
  Param<double> p;
  p.name = "x";
  p.shape = {4};
  p.value = {0, 0, 0, 0};
  p.grad.assign(4, 0.0);
  const double c[4] = {1.0, -2.0, 0.5, 3.0}, a[4] = {1.0, 2.0, 0.5, 4.0};
  OptimizerState<double> opt(Optimizer::adam, 0.025);
  double prev = 1e300, loss = 0.0;
  for (int t = 0; t < 500; ++t) {
    loss = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double d = p.value[i] - c[i];
      loss += 0.5 * a[i] * d * d;
      p.grad[i] = a[i] * d;
    }
    if (t >= 10) CHECK(loss <= prev);
    prev = loss;
    opt.step({&p});
  }
  CHECK(loss < 1e-6);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    auto cfg = tiny(Padding::none, Norm::batch);
    UNet<float> net(cfg, 77);
    OptimizerState<float> opt(Optimizer::adam, 1e-3);
    Rng rng(11);
    const std::size_t n = next_compatible_size(cfg, 16);
    const std::size_t o = output_size(cfg, n);
    std::vector<double> losses;
    for (int s = 0; s < 5; ++s) {
      losses.push_back(train_step(net, opt, oracles::random_tensor<float>(3, 2, n, n, rng),
                                  oracles::random_tensor<float>(3, 1, o, o, rng), Loss::mse));
    }
    return std::pair{losses, net.state()};
  };
  auto [l1, s1] = run();
  auto [l2, s2] = run();
  CHECK(l1 == l2);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t k = 0; k < s1.size(); ++k) CHECK(s1[k].values == s2[k].values);
}

TEST_CASE("non-finite loss aborts with the trace") {
  auto cfg = tiny();
  UNet<float> net(cfg, 1);
  OptimizerState<float> opt(Optimizer::adam, 1e-3);
  const std::size_t n = next_compatible_size(cfg, 16);
  const std::size_t o = output_size(cfg, n);
  Tensor<float> labels(1, 1, o, o, std::nanf(""));
  CHECK_THROWS_AS(train_step(net, opt, Tensor<float>(1, 2, n, n), labels, Loss::mse), DivergenceError);
}

TEST_CASE("batch norm in eval mode is a frozen affine map") {
  Rng rng(12);
  NormLayer<double> bn("bn", Norm::batch, 3);
  for (int i = 0; i < 5; ++i) bn.forward(oracles::random_tensor<double>(4, 3, 5, 5, rng, -2, 5), true, false);
  auto x1 = oracles::random_tensor<double>(1, 3, 5, 5, rng);
  auto x2 = oracles::random_tensor<double>(1, 3, 5, 5, rng);
  auto before = bn.buffers()[0]->value;
  auto y1 = bn.forward(x1, false, false);
  auto y2 = bn.forward(x2, false, false);
  CHECK(bn.buffers()[0]->value == before);
  Tensor<double> mix(1, 3, 5, 5);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = 0.3 * x1.data[i] + 0.7 * x2.data[i];
  auto ym = bn.forward(mix, false, false);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    CHECK(ym.data[i] == doctest::Approx(0.3 * y1.data[i] + 0.7 * y2.data[i]).epsilon(1e-12));
  }
  CHECK(same(bn.forward(x1, false, false), y1));
  CHECK(NormLayer<double>::group_count(32) == 8);
  CHECK(NormLayer<double>::group_count(12) == 4);
}

TEST_CASE("shift equivariance") {
  Rng rng(13);
  for (int i = 0; i < 10; ++i) {
    auto cfg = oracles::random_config(rng, Padding::none);
    if (cfg.norm == Norm::group) cfg.norm = Norm::none;
    UNet<double> net(cfg, 200 + i);
    const std::size_t s = stride_product(cfg);
    const std::size_t n = next_compatible_size(cfg, oracles::small_input_size(cfg) + s) + 2 * s;
    auto x = oracles::random_tensor<double>(1, cfg.in_channels, n, n, rng);
    CHECK(shift_equivariance_check(net, x, s, s));
    CHECK(shift_equivariance_check(net, x, 0, s));
    CHECK(shift_equivariance_check(net, x, 0, 0));
  }
  auto zcfg = tiny(Padding::zero);
  UNet<double> znet(zcfg, 3);
  auto x = oracles::random_tensor<double>(1, 2, 32, 32, rng);
  CHECK_FALSE(shift_equivariance_check(znet, x, 4, 4));
  CHECK(shift_equivariance_check(znet, x, 0, 0));
}

TEST_CASE("tiled inference is bit exact") {
  Rng rng(14);
  for (Norm norm : {Norm::none, Norm::batch}) {
    auto cfg = tiny(Padding::none, norm);
    cfg.kernel_size = 4;
    CHECK(tiling_exact(cfg));
    UNet<float> net(cfg, 21);
    const std::size_t n = next_compatible_size(cfg, 150);
    auto x = oracles::random_tensor<float>(1, 2, n, n, rng);
    auto full = net.forward(x, false);
    for (std::size_t tile : {16u, 40u, 64u, 1000u}) CHECK(same(infer_tiled(net, x, tile), full));
  }
  CHECK_FALSE(tiling_exact(tiny(Padding::zero)));
  CHECK_FALSE(tiling_exact(tiny(Padding::none, Norm::group)));
  UNet<float> znet(tiny(Padding::zero), 2);
  auto x = oracles::random_tensor<float>(1, 2, 64, 64, rng);
  CHECK(same(infer_tiled(znet, x, 16), znet.forward(x, false)));
}

TEST_CASE("config serialization") {
  auto cfg = tiny(Padding::zero, Norm::group);
  cfg.repeat_inner = true;
  cfg.activation = Activation::leakyrelu;
  CHECK(ConvNetConfig::from_json(cfg.to_json()) == cfg);
  auto j = cfg.to_json();
  j["dropout"] = 0.5;
  CHECK_THROWS_AS(ConvNetConfig::from_json(j), ConfigError);
  cfg.depth = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny();
  cfg.kernel_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(activation_from_name("gelu"), ConfigError);

  TrainConfig tc;
  CHECK(tc.learning_rate == 1e-4);
  CHECK(tc.batch_size == 20);
  auto back = TrainConfig::from_json(tc.to_json());
  CHECK(back.to_json() == tc.to_json());
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = {};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  try {
    optimizer_from_name("lbfgs");
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("LBFGS") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip") {
  auto cfg = tiny(Padding::none, Norm::batch);
  UNet<float> net(cfg, 31);
  Rng rng(15);
  const std::size_t n = next_compatible_size(cfg, 16);
  net.forward(oracles::random_tensor<float>(2, 2, n, n, rng), true);  // touch running stats
  auto path = scratch("model.lgc1");
  save_checkpoint(path, net, {{"epoch", 3}, {"metrics", {{"val_huber", 0.25}}}, {"note", "x"}});
  Checkpoint info;
  auto back = load_model(path, &info);
  CHECK(info.config == cfg);
  CHECK(info.header["epoch"] == 3);
  CHECK(info.header["note"] == "x");
  auto s1 = net.state(), s2 = back.state();
  REQUIRE(s1.size() == s2.size());
  for (std::size_t k = 0; k < s1.size(); ++k) {
    CHECK(s1[k].name == s2[k].name);
    CHECK(s1[k].values == s2[k].values);
  }
  auto x = oracles::random_tensor<float>(1, 2, n, n, rng);
  CHECK(same(net.forward(x, false), back.forward(x, false)));

  // byte-identical re-save
  auto path2 = scratch("model2.lgc1");
  save_checkpoint(path2, back, {{"epoch", 3}, {"metrics", {{"val_huber", 0.25}}}, {"note", "x"}});
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(a)), {}), bb((std::istreambuf_iterator<char>(b)), {});
  CHECK(ba == bb);

  std::filesystem::resize_file(path2, std::filesystem::file_size(path2) - 3);
  CHECK_THROWS_AS(read_checkpoint(path2), IoError);

  auto other = tiny();
  other.init_features = 4;
  UNet<float> wrong(other, 0);
  CHECK_THROWS(wrong.load_state(net.state()));
}

TEST_CASE("fit selects the best epoch deterministically") {
  auto cfg = tiny(Padding::none, Norm::batch);
  const std::size_t n = next_compatible_size(cfg, 16);
  const std::size_t o = output_size(cfg, n);
  Rng rng(16);
  auto xi = oracles::random_tensor<float>(12, 2, n, n, rng, 0, 1);
  Tensor<float> yi(12, 1, o, o);
  for (std::size_t s = 0; s < 12; ++s)
    for (std::size_t y = 0; y < o; ++y)
      for (std::size_t x = 0; x < o; ++x) yi.at(s, 0, y, x) = 0.5f * xi.at(s, 0, y + 2, x + 2);
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 4;
  tc.max_epochs = 6;
  tc.early_stopping_patience = 2;
  tc.seed = 5;
  auto run = [&] {
    UNet<float> net(cfg, 8);
    auto r = fit(net, xi, yi, xi, yi, tc);
    return std::pair{r, net.state()};
  };
  auto [r1, s1] = run();
  auto [r2, s2] = run();
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.val_huber == r2.val_huber);
  CHECK(r1.best_val_huber == *std::min_element(r1.val_huber.begin(), r1.val_huber.end()));
  for (std::size_t k = 0; k < s1.size(); ++k) CHECK(s1[k].values == s2[k].values);
  CHECK(r1.train_loss.size() == r1.epochs_run);
}
