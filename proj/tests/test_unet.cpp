#include "cmask/unet.hpp"

#include <cmath>
#include <set>

#include "doctest.h"
#include "support/grad_check.hpp"

using namespace cmask;

namespace {

Tensor random_input(const std::vector<int>& shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.value()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Deterministic scalar functional of a tensor; weights are fixed by the seed
// so gradients reach every output coordinate with a distinct coefficient.
Tensor project(const Tensor& t, uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::zeros(t.shape());
  for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(t, w));
}

UNetConfig micro_config() {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.channels = {2, 3};
  cfg.in_channels = 1;
  cfg.kernel_size = 3;
  cfg.stride = 2;
  cfg.dropout_p = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("default model has the frozen parameter count") {
  UNetConfig cfg;
  Rng rng(1);
  UNet net(cfg, rng);
  CHECK(net.parameter_count() == 9823281);

  UNetConfig cfg2;
  cfg2.in_channels = 2;
  Rng rng2(1);
  UNet net2(cfg2, rng2);
  CHECK(net2.parameter_count() == 9824482);
}

TEST_CASE("forward preserves input shape") {
  SUBCASE("compact two-level model") {
    UNetConfig cfg;
    cfg.depth = 2;
    cfg.channels = {8, 16};
    Rng rng(3);
    UNet net(cfg, rng);
    Tensor x = random_input({1, 1, 8, 12}, 10);
    detail::NoGradGuard ng;
    Tensor y = net.forward(x, false);
    CHECK(y.shape() == std::vector<int>{1, 1, 8, 12});
  }
  SUBCASE("default six-level model") {
    UNetConfig cfg;
    Rng rng(3);
    UNet net(cfg, rng);
    Tensor x = random_input({1, 1, 64, 64}, 11);
    detail::NoGradGuard ng;
    Tensor y = net.forward(x, false);
    CHECK(y.shape() == std::vector<int>{1, 1, 64, 64});
  }
  SUBCASE("two input channels and batch of three") {
    UNetConfig cfg = micro_config();
    cfg.in_channels = 2;
    Rng rng(3);
    UNet net(cfg, rng);
    Tensor x = random_input({3, 2, 4, 8}, 12);
    detail::NoGradGuard ng;
    Tensor y = net.forward(x, false);
    CHECK(y.shape() == std::vector<int>{3, 2, 4, 8});
  }
}

TEST_CASE("construction is deterministic in the seed") {
  UNetConfig cfg = micro_config();
  Rng a(77), b(77), c(78);
  UNet na(cfg, a), nb(cfg, b), nc(cfg, c);

  auto pa = na.named_parameters();
  auto pb = nb.named_parameters();
  auto pc = nc.named_parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal = true, any_diff_seed = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    if (pa[i].second.value() != pb[i].second.value()) all_equal = false;
    if (pa[i].second.value() != pc[i].second.value()) any_diff_seed = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);

  Tensor x = random_input({1, 1, 4, 4}, 5);
  detail::NoGradGuard ng;
  Tensor ya = na.forward(x, false);
  Tensor yb = nb.forward(x, false);
  CHECK(ya.value() == yb.value());
}

TEST_CASE("initial parameter values survive a float32 roundtrip unchanged") {
  UNetConfig cfg = micro_config();
  Rng rng(9);
  UNet net(cfg, rng);
  for (auto& [name, p] : net.named_parameters())
    for (double v : p.value())
      CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("parameter names are unique and sizes add up") {
  UNetConfig cfg;
  Rng rng(2);
  UNet net(cfg, rng);
  auto named = net.named_parameters();
  std::set<std::string> names;
  size_t total = 0;
  for (auto& [name, p] : named) {
    names.insert(name);
    total += p.numel();
  }
  CHECK(names.size() == named.size());
  CHECK(total == net.parameter_count());
  // First encoder layer and last decoder layer run without batch norm.
  CHECK(names.count("enc0.weight") == 1);
  CHECK(names.count("enc0.bn.gamma") == 0);
  CHECK(names.count("enc1.bn.gamma") == 1);
  CHECK(names.count("dec5.bn.gamma") == 0);
  CHECK(names.count("dec4.bn.gamma") == 1);

  auto buffers = net.named_buffers();
  CHECK(buffers.size() == 2 * (5 + 5));  // running mean + var per batch norm
}

TEST_CASE("config validation rejects inconsistent settings") {
  Rng rng(1);
  UNetConfig cfg;
  cfg.channels = {8, 16};  // depth still 6
  CHECK_THROWS_AS(UNet(cfg, rng), ParamError);

  cfg = UNetConfig{};
  cfg.kernel_size = 4;
  CHECK_THROWS_AS(UNet(cfg, rng), ParamError);

  cfg = UNetConfig{};
  cfg.dropout_p = 1.0;
  CHECK_THROWS_AS(UNet(cfg, rng), ParamError);

  cfg = UNetConfig{};
  cfg.depth = 0;
  cfg.channels = {};
  CHECK_THROWS_AS(UNet(cfg, rng), ParamError);
}

TEST_CASE("forward validates input geometry") {
  UNetConfig cfg = micro_config();
  Rng rng(4);
  UNet net(cfg, rng);
  // 6 is not a multiple of stride^depth = 4.
  CHECK_THROWS_AS(net.forward(random_input({1, 1, 6, 8}, 1), false), ParamError);
  CHECK_THROWS_AS(net.forward(random_input({1, 2, 4, 4}, 1), false), ParamError);
  CHECK_THROWS_AS(net.forward(random_input({4, 4}, 1), false), ParamError);
}

TEST_CASE("dropout fires only in training mode") {
  UNetConfig cfg = micro_config();
  cfg.dropout_p = 0.5;
  cfg.dropout_layers = 1;
  Rng rng(6);
  UNet net(cfg, rng);
  Tensor x = random_input({2, 1, 4, 4}, 20);

  CHECK_THROWS_AS(net.forward(x, true), ParamError);  // no generator supplied

  detail::NoGradGuard ng;
  Rng d1(100), d2(101);
  Tensor t1 = net.forward(x, true, &d1);
  Tensor t2 = net.forward(x, true, &d2);
  CHECK(t1.value() != t2.value());

  Tensor e1 = net.forward(x, false);
  Tensor e2 = net.forward(x, false);
  CHECK(e1.value() == e2.value());
}

TEST_CASE("training forwards update the running statistics") {
  UNetConfig cfg = micro_config();
  Rng rng(8);
  UNet net(cfg, rng);
  Tensor x = random_input({2, 1, 4, 4}, 21);

  detail::NoGradGuard ng;
  Tensor eval_before = net.forward(x, false);
  net.forward(x, true);
  bool mean_moved = false;
  for (auto& [name, buf] : net.named_buffers())
    for (double v : *buf)
      if (name.find("running_mean") != std::string::npos && v != 0.0) mean_moved = true;
  CHECK(mean_moved);
  Tensor eval_after = net.forward(x, false);
  CHECK(eval_before.value() != eval_after.value());
}

TEST_CASE("every parameter receives gradient") {
  UNetConfig cfg = micro_config();
  Rng rng(15);
  UNet net(cfg, rng);
  Tensor x = random_input({2, 1, 4, 4}, 22);
  Tensor loss = project(net.forward(x, true), 30);
  loss.backward();
  for (auto& [name, p] : net.named_parameters()) {
    INFO("parameter ", name);
    REQUIRE(p.has_grad());
    double linf = 0.0;
    for (double g : p.grad()) linf = std::max(linf, std::abs(g));
    CHECK(linf > 0.0);
  }
}

TEST_CASE("analytic gradients match finite differences through the whole model") {
  UNetConfig cfg = micro_config();
  cfg.channels = {2, 2};
  Rng rng(33);
  UNet net(cfg, rng);
  Tensor x = random_input({2, 1, 4, 4}, 40);

  auto make_loss = [&]() { return project(net.forward(x, true), 41); };

  for (auto& [name, p] : net.named_parameters()) {
    INFO("parameter ", name);
    auto res = oracle::grad_check(make_loss, p, 1e-5);
    CHECK(res.max_abs_err < 1e-6 * std::max(1.0, res.max_analytic));
  }
}
