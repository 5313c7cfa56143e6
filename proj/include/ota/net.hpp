#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ota/common.hpp"
#include "ota/tensor.hpp"

namespace ota {

enum class Activation { Identity, Relu, LeakyRelu, Tanh, Sigmoid };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ParseError("unknown activation: " + s);
}

constexpr double kLeakySlope = 0.2;

inline double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::LeakyRelu: return z > 0.0 ? z : kLeakySlope * z;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
  }
  return z;
}

// Derivative expressed through the post-activation value. Valid for this
// activation set: relu/leaky sign survives the forward map, sigmoid/tanh
// have the classic closed forms.
inline double activation_deriv_from_post(Activation a, double y) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyRelu: return y > 0.0 ? 1.0 : kLeakySlope;
    case Activation::Tanh: return 1.0 - y * y;
    case Activation::Sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

// One dense layer. Weights are kept twice: w_in_out (in x out, the layout
// the forward pass streams over) and w_out_in (out x in, the layout the
// input-gradient pass streams over). w_out_in is derived and rebuilt after
// every parameter change; w_in_out is authoritative.
struct DenseLayer {
  std::size_t in = 0, out = 0;
  Tensor w_in_out;   // (in,out)
  Tensor w_out_in;   // (out,in), derived
  std::vector<double> bias;  // (out)
  Activation act = Activation::Identity;

  DenseLayer() = default;
  DenseLayer(std::size_t in_dim, std::size_t out_dim, Activation a)
      : in(in_dim),
        out(out_dim),
        w_in_out(Tensor::matrix(in_dim, out_dim)),
        w_out_in(Tensor::matrix(out_dim, in_dim)),
        bias(out_dim, 0.0),
        act(a) {}

  void sync_transposed() {
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t o = 0; o < out; ++o)
        w_out_in.at(o, i) = w_in_out.at(i, o);
  }
};

struct Grads {
  std::vector<Tensor> w;                 // (in,out) per layer
  std::vector<std::vector<double>> b;    // (out) per layer

  void zero() {
    for (auto& t : w) t.fill(0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
  }
  bool finite() const {
    for (const auto& t : w)
      if (!t.finite()) return false;
    for (const auto& v : b)
      if (!all_finite(v)) return false;
    return true;
  }
};

// Forward activations kept for the backward pass: acts[0] is the input
// batch, acts[l+1] the post-activation output of layer l.
struct ForwardTrace {
  std::vector<Tensor> acts;
  const Tensor& output() const { return acts.back(); }
};

// Minimal dense feedforward net. Either role (scalar-output potential or
// vector-output generator) is just a choice of dims and head activation.
class DenseNet {
 public:
  DenseNet() = default;

  // dims = {input, hidden..., output}; acts has dims.size()-1 entries.
  DenseNet(std::vector<std::size_t> dims, std::vector<Activation> acts) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
      throw DimensionError("net needs n>=2 dims and n-1 activations");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      layers_.emplace_back(dims[l], dims[l + 1], acts[l]);
  }

  // Uniform hidden activation + head, the shape everything here uses.
  static DenseNet mlp(std::size_t input, const std::vector<std::size_t>& hidden,
                      std::size_t output, Activation hidden_act, Activation head_act) {
    std::vector<std::size_t> dims{input};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output);
    std::vector<Activation> acts(hidden.size(), hidden_act);
    acts.push_back(head_act);
    return DenseNet(std::move(dims), std::move(acts));
  }

  DenseNet(const DenseNet& other)
      : layers_(other.layers_), revision_(other.revision_) {}
  DenseNet& operator=(const DenseNet& other) {
    layers_ = other.layers_;
    revision_ = other.revision_;
    return *this;
  }
  DenseNet(DenseNet&&) = default;
  DenseNet& operator=(DenseNet&&) = default;

  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }
  std::size_t num_layers() const { return layers_.size(); }
  const DenseLayer& layer(std::size_t l) const { return layers_[l]; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& L : layers_) n += L.w_in_out.size() + L.bias.size();
    return n;
  }

  // Xavier-uniform weights, zero biases.
  void init(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& L : layers_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
      for (auto& w : L.w_in_out.values()) w = rng.uniform(-limit, limit);
      std::fill(L.bias.begin(), L.bias.end(), 0.0);
      L.sync_transposed();
    }
    bump();
  }

  // Parameter revision; any mutation bumps it. Potential caches key on it.
  std::uint64_t revision() const { return revision_; }

  // Mutable access to every parameter block, in a fixed order
  // (per layer: weights then bias). Callers that mutate must not keep the
  // spans past the call; the transposed copies are rebuilt afterwards.
  template <typename Fn>
  void visit_params(Fn&& fn) {
    for (auto& L : layers_) {
      fn(std::span<double>(L.w_in_out.values()));
      fn(std::span<double>(L.bias));
    }
    for (auto& L : layers_) L.sync_transposed();
    bump();
  }

  template <typename Fn>
  void visit_params_const(Fn&& fn) const {
    for (const auto& L : layers_) {
      fn(std::span<const double>(L.w_in_out.values()));
      fn(std::span<const double>(L.bias));
    }
  }

  Grads make_grads() const {
    Grads g;
    for (const auto& L : layers_) {
      g.w.push_back(Tensor::matrix(L.in, L.out));
      g.b.emplace_back(L.out, 0.0);
    }
    return g;
  }

  // ---- forward ----------------------------------------------------------

  Tensor forward(const Tensor& x, unsigned threads = 0) const {
    check_input_(x);
    account_(x.rows());
    Tensor cur = x;
    for (const auto& L : layers_) {
      Tensor next = Tensor::matrix(cur.rows(), L.out);
      layer_forward_(L, cur, next, threads);
      cur = std::move(next);
    }
    return cur;
  }

  ForwardTrace forward_trace(const Tensor& x, unsigned threads = 0) const {
    check_input_(x);
    account_(x.rows());
    ForwardTrace tr;
    tr.acts.reserve(layers_.size() + 1);
    tr.acts.push_back(x);
    for (const auto& L : layers_) {
      Tensor next = Tensor::matrix(tr.acts.back().rows(), L.out);
      layer_forward_(L, tr.acts.back(), next, threads);
      tr.acts.push_back(std::move(next));
    }
    return tr;
  }

  // ---- backward ---------------------------------------------------------

  // Reverse pass from `upstream` (batch x output_dim). Returns parameter
  // gradients and, if dx != nullptr, the gradient w.r.t. the input batch.
  Grads backward(const ForwardTrace& tr, const Tensor& upstream,
                 Tensor* dx = nullptr, unsigned threads = 0) const {
    const Tensor& out = tr.acts.back();
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
      throw DimensionError("upstream shape does not match net output");

    Grads g = make_grads();
    Tensor delta = upstream;  // dL/d(post-activation of current layer)
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const DenseLayer& L = layers_[li];
      const Tensor& post = tr.acts[li + 1];
      const Tensor& prev = tr.acts[li];
      const std::size_t batch = delta.rows();

      // dL/d(pre-activation), in place
      for (std::size_t i = 0; i < delta.size(); ++i)
        delta[i] *= activation_deriv_from_post(L.act, post[i]);

      // grad_w[i][o] = sum_b prev[b][i] * delta[b][o]
      Tensor& gw = g.w[li];
      for (std::size_t b = 0; b < batch; ++b) {
        auto drow = delta.row_span(b);
        auto prow = prev.row_span(b);
        for (std::size_t i = 0; i < L.in; ++i)
          axpy(prow[i], drow, gw.row_span(i));
      }
      // grad_b[o] = sum_b delta[b][o]
      auto& gb = g.b[li];
      for (std::size_t b = 0; b < batch; ++b)
        axpy(1.0, delta.row_span(b), std::span<double>(gb));

      const bool need_below = li > 0 || dx != nullptr;
      if (!need_below) break;

      // dL/d(prev) = delta * W^T, streamed over rows of w_out_in
      Tensor below = Tensor::matrix(batch, L.in);
      parallel_for(batch, [&](std::size_t b) {
        auto drow = delta.row_span(b);
        auto brow = below.row_span(b);
        for (std::size_t o = 0; o < L.out; ++o)
          axpy(drow[o], L.w_out_in.row_span(o), brow);
      }, threads);
      delta = std::move(below);
    }
    if (dx != nullptr) *dx = std::move(delta);
    return g;
  }

  // Gradients of sum(upstream . output) w.r.t. parameters.
  Grads backward_params(const Tensor& x, const Tensor& upstream, unsigned threads = 0) const {
    return backward(forward_trace(x, threads), upstream, nullptr, threads);
  }

  // Gradient of sum(upstream . output) w.r.t. the input batch.
  Tensor backward_input(const Tensor& x, const Tensor& upstream, unsigned threads = 0) const {
    Tensor dx;
    backward(forward_trace(x, threads), upstream, &dx, threads);
    return dx;
  }

  // ---- call accounting ---------------------------------------------------
  // Forward-pass counters; the training loop's "the potential net never
  // sees generated points" contract is asserted against these in tests.
  std::uint64_t forward_calls() const { return forward_calls_.load(std::memory_order_relaxed); }
  std::uint64_t forward_rows() const { return forward_rows_.load(std::memory_order_relaxed); }
  void reset_accounting() const {
    forward_calls_.store(0, std::memory_order_relaxed);
    forward_rows_.store(0, std::memory_order_relaxed);
  }

  std::vector<DenseLayer>& layers_mut_for_io() { return layers_; }

 private:
  void check_input_(const Tensor& x) const {
    if (layers_.empty()) throw DimensionError("empty net");
    if (x.rank() != 2 || x.cols() != input_dim())
      throw DimensionError("input batch must be (n, " + std::to_string(input_dim()) + ")");
  }

  void account_(std::size_t rows) const {
    forward_calls_.fetch_add(1, std::memory_order_relaxed);
    forward_rows_.fetch_add(rows, std::memory_order_relaxed);
  }

  static void layer_forward_(const DenseLayer& L, const Tensor& x, Tensor& y, unsigned threads) {
    const std::size_t batch = x.rows();
    parallel_for(batch, [&](std::size_t b) {
      auto yrow = y.row_span(b);
      auto xrow = x.row_span(b);
      for (std::size_t o = 0; o < L.out; ++o) yrow[o] = L.bias[o];
      for (std::size_t i = 0; i < L.in; ++i)
        axpy(xrow[i], L.w_in_out.row_span(i), yrow);
      for (std::size_t o = 0; o < L.out; ++o)
        yrow[o] = apply_activation(L.act, yrow[o]);
    }, threads);
  }

  void bump() { ++revision_; }

  std::vector<DenseLayer> layers_;
  std::uint64_t revision_ = 0;
  mutable std::atomic<std::uint64_t> forward_calls_{0};
  mutable std::atomic<std::uint64_t> forward_rows_{0};
};

}  // namespace ota
