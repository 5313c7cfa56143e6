#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <sstream>

#include "ota/checkpoint.hpp"
#include "ota/net.hpp"
#include "ota/rmsprop.hpp"
#include "ota/tensor.hpp"
#include "oracles.hpp"

using namespace ota;

namespace {

void set_params(DenseNet& net, const std::vector<double>& flat) {
  std::size_t off = 0;
  net.visit_params([&](std::span<double> p) {
    for (auto& v : p) v = flat.at(off++);
  });
  REQUIRE(off == flat.size());
}

std::vector<double> get_params(const DenseNet& net) {
  std::vector<double> flat;
  net.visit_params_const([&](std::span<const double> p) {
    flat.insert(flat.end(), p.begin(), p.end());
  });
  return flat;
}

DenseNet random_net(std::vector<std::size_t> dims, std::vector<Activation> acts,
                    std::uint64_t seed) {
  DenseNet net(std::move(dims), std::move(acts));
  net.init(seed);
  return net;
}

// Smallest |pre-activation| reached in any relu/leaky unit over the batch.
// Finite differences are only valid when no kink sits inside the FD step.
double kink_margin(const DenseNet& net, const Tensor& x) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < x.rows(); ++b) {
    std::vector<double> cur(x.row_span(b).begin(), x.row_span(b).end());
    for (std::size_t li = 0; li < net.num_layers(); ++li) {
      const auto& L = net.layer(li);
      std::vector<double> z(L.out, 0.0);
      for (std::size_t o = 0; o < L.out; ++o) {
        z[o] = L.bias[o];
        for (std::size_t i = 0; i < L.in; ++i) z[o] += L.w_out_in.at(o, i) * cur[i];
      }
      if (L.act == Activation::Relu || L.act == Activation::LeakyRelu) {
        for (double v : z) margin = std::min(margin, std::abs(v));
      }
      for (std::size_t o = 0; o < L.out; ++o) z[o] = oracle::naive_activation(L.act, z[o]);
      cur = std::move(z);
    }
  }
  return margin;
}

}  // namespace

TEST_CASE("forward: identity single layer reproduces input", "[net]") {
  DenseNet net({2, 2}, {Activation::Identity});
  // w_in_out = I, b = 0
  set_params(net, {1, 0, 0, 1, 0, 0});
  Tensor y = net.forward(Tensor::row({1, 2}));
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 2.0);
}

TEST_CASE("forward: zero weights yield the bias vector", "[net]") {
  DenseNet net({3, 2}, {Activation::Identity});
  set_params(net, {0, 0, 0, 0, 0, 0, 0.5, -2.0});
  Tensor y = net.forward(Tensor::row({7, -1, 3}));
  CHECK(y.at(0, 0) == 0.5);
  CHECK(y.at(0, 1) == -2.0);
}

TEST_CASE("forward: random two-layer net matches triple-loop oracle", "[net]") {
  auto net = random_net({3, 5, 2}, {Activation::LeakyRelu, Activation::Tanh}, 42);
  Tensor x({4, 3});
  Rng rng(7);
  for (auto& v : x.values()) v = rng.uniform(-2, 2);

  Tensor y = net.forward(x);
  for (std::size_t b = 0; b < 4; ++b) {
    std::vector<double> row(x.row_span(b).begin(), x.row_span(b).end());
    auto want = oracle::naive_forward_row(net, row);
    for (std::size_t o = 0; o < 2; ++o)
      CHECK(y.at(b, o) == Catch::Approx(want[o]).epsilon(1e-12));
  }
}

TEST_CASE("forward: purity, bit-identical outputs and thread-count independence", "[net]") {
  auto net = random_net({4, 16, 3}, {Activation::LeakyRelu, Activation::Identity}, 9);
  Tensor x({8, 4});
  Rng rng(11);
  for (auto& v : x.values()) v = rng.uniform(-1, 1);

  Tensor a = net.forward(x);
  Tensor b = net.forward(x);
  Tensor c = net.forward(x, 4);  // forced fan-out
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("forward: shape mismatch raises", "[net]") {
  auto net = random_net({3, 2}, {Activation::Identity}, 1);
  CHECK_THROWS_AS(net.forward(Tensor::row({1, 2})), DimensionError);
  Tensor up({1, 3});
  CHECK_THROWS_AS(net.backward_params(Tensor::row({1, 2, 3}), up), DimensionError);
}

TEST_CASE("backward_params: single linear layer, upstream=1 gives outer product", "[net]") {
  DenseNet net({3, 1}, {Activation::Identity});
  set_params(net, {0.1, 0.2, 0.3, 0.0});
  Tensor x = Tensor::row({2, -1, 4});
  Tensor up({1, 1});
  up[0] = 1.0;
  Grads g = net.backward_params(x, up);
  CHECK(g.w[0].at(0, 0) == 2.0);
  CHECK(g.w[0].at(1, 0) == -1.0);
  CHECK(g.w[0].at(2, 0) == 4.0);
  CHECK(g.b[0][0] == 1.0);
}

TEST_CASE("backward_params: zero upstream gives zero gradients", "[net]") {
  auto net = random_net({3, 4, 2}, {Activation::Tanh, Activation::Sigmoid}, 5);
  Tensor x = Tensor::row({0.3, -0.7, 1.1});
  Tensor up({1, 2});
  Grads g = net.backward_params(x, up);
  for (double v : oracle::flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("backward_input: identity net passes upstream through", "[net]") {
  DenseNet net({2, 2}, {Activation::Identity});
  set_params(net, {1, 0, 0, 1, 0, 0});
  Tensor up = Tensor::row({3.5, -1.25});
  Tensor dx = net.backward_input(Tensor::row({0.1, 0.2}), up);
  CHECK(dx.at(0, 0) == 3.5);
  CHECK(dx.at(0, 1) == -1.25);
}

TEST_CASE("backward_input: linear layer gives upstream times W", "[net]") {
  DenseNet net({2, 3}, {Activation::Identity});
  // w_in_out rows: input i -> outputs
  set_params(net, {1, 2, 3, 4, 5, 6, 0, 0, 0});
  Tensor up = Tensor::row({1, -1, 2});
  Tensor dx = net.backward_input(Tensor::row({0.4, -0.6}), up);
  // dx_i = sum_o up_o * w[i][o]
  CHECK(dx.at(0, 0) == Catch::Approx(1 * 1 + (-1) * 2 + 2 * 3));
  CHECK(dx.at(0, 1) == Catch::Approx(1 * 4 + (-1) * 5 + 2 * 6));
}

TEST_CASE("gradients agree with central finite differences across activations", "[net][property]") {
  // >= 100 random nets, all activations cycled through hidden/head slots.
  const Activation kinds[] = {Activation::Identity, Activation::Relu,
                              Activation::LeakyRelu, Activation::Tanh,
                              Activation::Sigmoid};
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const Activation hidden = kinds[seed % 5];
    const Activation head = kinds[(seed / 5) % 5];
    auto net = random_net({3, 6, 2}, {hidden, head}, seed);

    Rng rng(seed * 77 + 1);
    Tensor x({2, 3});
    Tensor up({2, 2});
    // redraw inputs that put a relu/leaky kink inside the FD step
    do {
      for (auto& v : x.values()) v = rng.uniform(-1.5, 1.5);
    } while (kink_margin(net, x) < 5e-3);
    for (auto& v : up.values()) v = rng.uniform(-1, 1);

    // scalar objective: sum(upstream . f(x))
    auto objective = [&]() {
      Tensor y = net.forward(x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
      return s;
    };

    auto analytic = oracle::flatten(net.backward_params(x, up));
    auto fd = oracle::fd_param_gradient(net, objective, 1e-4);
    REQUIRE(oracle::rel_error(analytic, fd) < 1e-5);

    // input gradient against finite differences as well
    Tensor dx = net.backward_input(x, up);
    std::vector<double> xv = x.values();
    auto obj_x = [&]() {
      Tensor xt({2, 3}, xv);
      Tensor y = net.forward(xt);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
      return s;
    };
    auto fdx = oracle::fd_vector_gradient(xv, obj_x, 1e-4);
    REQUIRE(oracle::rel_error(std::vector<double>(dx.values()), fdx) < 1e-5);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("rmsprop: zero gradient leaves parameters unchanged", "[rmsprop]") {
  auto net = random_net({2, 4, 1}, {Activation::LeakyRelu, Activation::Identity}, 3);
  auto before = get_params(net);
  RmsPropState st(net);
  Grads g = net.make_grads();
  rmsprop_step(net, g, st);
  CHECK(get_params(net) == before);
}

TEST_CASE("rmsprop: first-step magnitude from the update rule", "[rmsprop]") {
  // rho=0.9, alpha=1, eps=0, g=1, acc0=0  =>  delta = -1/sqrt(0.1)
  std::vector<double> p{0.0}, a{0.0};
  const std::vector<double> g{1.0};
  RmsPropOptions opt{1.0, 0.9, 0.0};
  rmsprop_update(std::span<double>(p), std::span<const double>(g), std::span<double>(a), opt);
  CHECK(p[0] == Catch::Approx(-1.0 / std::sqrt(0.1)).epsilon(1e-15));
  CHECK(a[0] == Catch::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("rmsprop: repeated constant gradient step magnitude converges to alpha", "[rmsprop]") {
  std::vector<double> p{0.0}, a{0.0};
  const std::vector<double> g{-2.5};
  RmsPropOptions opt{0.01, 0.9, 0.0};
  double prev = 0.0;
  double step = 0.0;
  for (int i = 0; i < 400; ++i) {
    prev = p[0];
    rmsprop_update(std::span<double>(p), std::span<const double>(g), std::span<double>(a), opt);
    step = std::abs(p[0] - prev);
  }
  // accumulator -> g^2, so |step| -> alpha * |g| / |g| = alpha
  CHECK(step == Catch::Approx(opt.alpha).epsilon(1e-9));
}

TEST_CASE("rmsprop: nonfinite gradient is rejected and net left intact", "[rmsprop]") {
  auto net = random_net({2, 2}, {Activation::Identity}, 8);
  auto before = get_params(net);
  RmsPropState st(net);
  Grads g = net.make_grads();
  g.w[0].at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(rmsprop_step(net, g, st), NumericError);
  CHECK(get_params(net) == before);
}

TEST_CASE("revision counter tracks parameter mutations", "[net]") {
  auto net = random_net({2, 2}, {Activation::Identity}, 8);
  const auto r0 = net.revision();
  net.visit_params([](std::span<double> p) { p[0] += 0.0; });
  CHECK(net.revision() == r0 + 1);
  RmsPropState st(net);
  Grads g = net.make_grads();
  rmsprop_step(net, g, st);
  CHECK(net.revision() == r0 + 2);
}

TEST_CASE("checkpoint: net and optimizer round-trip bit-exactly", "[checkpoint]") {
  auto net = random_net({3, 7, 2}, {Activation::LeakyRelu, Activation::Sigmoid}, 1234);
  // make optimizer state nontrivial
  RmsPropState st(net, {0.001, 0.9, 1e-8});
  Tensor x({4, 3});
  Rng rng(5);
  for (auto& v : x.values()) v = rng.uniform(-1, 1);
  Tensor up({4, 2});
  for (auto& v : up.values()) v = rng.uniform(-1, 1);
  rmsprop_step(net, net.backward_params(x, up), st);

  std::stringstream ss;
  save_net(ss, net);
  save_rmsprop(ss, st);

  DenseNet loaded = load_net(ss);
  RmsPropState lst = load_rmsprop(ss);

  CHECK(get_params(loaded) == get_params(net));
  CHECK(lst.acc == st.acc);
  CHECK(lst.opt.alpha == st.opt.alpha);

  // loaded net computes identically
  Tensor y1 = net.forward(x);
  Tensor y2 = loaded.forward(x);
  CHECK(std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(double)) == 0);
}

TEST_CASE("checkpoint: truncated stream raises parse error", "[checkpoint]") {
  auto net = random_net({2, 2}, {Activation::Identity}, 3);
  std::stringstream ss;
  save_net(ss, net);
  std::string text = ss.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_net(cut), ParseError);
}
