#ifndef TAIG_NET_HPP
#define TAIG_NET_HPP

#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "taig/rng.hpp"
#include "taig/tensor.hpp"

namespace taig {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Layers. A conv layer is an affine map of the flattened input (valid
// padding, stride 1), so the whole family stays piecewise linear.
struct AffineLayer {
  std::size_t in = 0, out = 0;
  Tensor W;  // {out, in}
  Tensor b;  // {out}
};

struct ReluLayer {};

struct Conv2dLayer {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, k = 0;
  Tensor W;  // {out_c, in_c, k, k}
  Tensor b;  // {out_c}
  std::size_t out_h() const { return in_h - k + 1; }
  std::size_t out_w() const { return in_w - k + 1; }
  std::size_t out_size() const { return out_c * out_h() * out_w(); }
};

using Layer = std::variant<AffineLayer, ReluLayer, Conv2dLayer>;

/// Feed-forward ReLU classifier. Immutable once trained; forward and
/// gradient evaluation are pure and safe to share across threads.
struct ReluNet {
  std::string arch;
  std::vector<std::size_t> input_shape;
  std::size_t num_classes = 0;
  std::vector<Layer> layers;

  std::size_t input_size() const { return Tensor::count(input_shape); }

  void check_invariants() const {
    if (num_classes < 2) throw SpecError("class count K must be >= 2");
    std::size_t dim = input_size();
    for (const auto& l : layers) {
      if (auto* a = std::get_if<AffineLayer>(&l)) {
        if (a->in != dim)
          throw SpecError("affine layer input dim " + std::to_string(a->in) +
                          " incompatible with incoming dim " + std::to_string(dim));
        dim = a->out;
      } else if (auto* c = std::get_if<Conv2dLayer>(&l)) {
        if (c->in_c * c->in_h * c->in_w != dim)
          throw SpecError("conv layer geometry incompatible with incoming dim");
        if (c->k > c->in_h || c->k > c->in_w)
          throw SpecError("conv kernel larger than input");
        dim = c->out_size();
      }
    }
    if (dim != num_classes)
      throw SpecError("final layer dim does not equal class count");
  }
};

/// Record of one forward pass: the input to every layer plus the logits.
/// Replaying forward from the same inputs reproduces the outputs bit-exactly.
struct Tape {
  std::vector<std::vector<double>> layer_inputs;
  std::vector<double> logits;
};

namespace detail {

inline std::vector<double> affine_fwd(const AffineLayer& l, const std::vector<double>& x) {
  std::vector<double> y(l.out);
  for (std::size_t o = 0; o < l.out; ++o) {
    double acc = l.b[o];
    const double* w = &l.W.data[o * l.in];
    for (std::size_t i = 0; i < l.in; ++i) acc += w[i] * x[i];
    y[o] = acc;
  }
  return y;
}

inline std::vector<double> conv_fwd(const Conv2dLayer& l, const std::vector<double>& x) {
  const std::size_t oh = l.out_h(), ow = l.out_w();
  std::vector<double> y(l.out_c * oh * ow);
  for (std::size_t oc = 0; oc < l.out_c; ++oc)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double acc = l.b[oc];
        for (std::size_t ic = 0; ic < l.in_c; ++ic)
          for (std::size_t kr = 0; kr < l.k; ++kr)
            for (std::size_t kc = 0; kc < l.k; ++kc)
              acc += l.W.data[((oc * l.in_c + ic) * l.k + kr) * l.k + kc] *
                     x[(ic * l.in_h + r + kr) * l.in_w + c + kc];
        y[(oc * oh + r) * ow + c] = acc;
      }
  return y;
}

inline std::vector<double> affine_bwd_input(const AffineLayer& l, const std::vector<double>& dy) {
  std::vector<double> dx(l.in, 0.0);
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* w = &l.W.data[o * l.in];
    for (std::size_t i = 0; i < l.in; ++i) dx[i] += w[i] * dy[o];
  }
  return dx;
}

inline std::vector<double> conv_bwd_input(const Conv2dLayer& l, const std::vector<double>& dy) {
  const std::size_t oh = l.out_h(), ow = l.out_w();
  std::vector<double> dx(l.in_c * l.in_h * l.in_w, 0.0);
  for (std::size_t oc = 0; oc < l.out_c; ++oc)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        double g = dy[(oc * oh + r) * ow + c];
        for (std::size_t ic = 0; ic < l.in_c; ++ic)
          for (std::size_t kr = 0; kr < l.k; ++kr)
            for (std::size_t kc = 0; kc < l.k; ++kc)
              dx[(ic * l.in_h + r + kr) * l.in_w + c + kc] +=
                  l.W.data[((oc * l.in_c + ic) * l.k + kr) * l.k + kc] * g;
      }
  return dx;
}

}  // namespace detail

/// Forward pass on logits. No softmax anywhere on the differentiated path.
inline std::pair<Tensor, Tape> forward(const ReluNet& net, const Tensor& x) {
  if (x.shape != net.input_shape)
    throw ShapeError("forward: input shape does not match net input shape");
  Tape tape;
  std::vector<double> cur = x.data;
  for (const auto& layer : net.layers) {
    tape.layer_inputs.push_back(cur);
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      cur = detail::affine_fwd(*a, cur);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      cur = detail::conv_fwd(*c, cur);
    } else {
      for (auto& v : cur) v = v > 0 ? v : 0.0;
    }
  }
  tape.logits = cur;
  return {Tensor({net.num_classes}, std::move(cur)), std::move(tape)};
}

inline Tensor logits(const ReluNet& net, const Tensor& x) {
  return forward(net, x).first;
}

inline std::size_t predict(const ReluNet& net, const Tensor& x) {
  Tensor l = logits(net, x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < l.size(); ++k)
    if (l[k] > l[best]) best = k;
  return best;
}

/// Backward pass from an arbitrary logit cotangent down to the input.
/// ReLU subgradient at exactly 0 is taken as 0.
inline Tensor backward_input(const ReluNet& net, const Tape& tape,
                             const std::vector<double>& dlogits) {
  std::vector<double> dy = dlogits;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    const auto& in = tape.layer_inputs[li];
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      dy = detail::affine_bwd_input(*a, dy);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      dy = detail::conv_bwd_input(*c, dy);
    } else {
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (!(in[i] > 0)) dy[i] = 0.0;
    }
  }
  return Tensor(net.input_shape, std::move(dy));
}

/// Exact gradient of logit f_k with respect to the input.
inline Tensor grad_input(const ReluNet& net, const Tensor& x, std::size_t k) {
  if (k >= net.num_classes)
    throw IndexError("grad_input: class index " + std::to_string(k) +
                     " out of range (K=" + std::to_string(net.num_classes) + ")");
  auto [l, tape] = forward(net, x);
  (void)l;
  std::vector<double> seed(net.num_classes, 0.0);
  seed[k] = 1.0;
  return backward_input(net, tape, seed);
}

/// Central-difference estimate of the same gradient; the independent oracle
/// used by the verification ops.
inline Tensor finite_diff_grad(const ReluNet& net, const Tensor& x, std::size_t k,
                               double h) {
  if (!(h > 0)) throw SpecError("finite_diff_grad: h must be positive");
  if (k >= net.num_classes) throw IndexError("finite_diff_grad: invalid class index");
  Tensor g = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe.data[i] = x[i] + h;
    double fp = logits(net, probe)[k];
    probe.data[i] = x[i] - h;
    double fm = logits(net, probe)[k];
    probe.data[i] = x[i];
    g.data[i] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Smallest |pre-activation| seen at any ReLU during a forward pass; the
/// kink-proximity measure used by oracle checks.
inline double min_preact_margin(const ReluNet& net, const Tensor& x) {
  Tape tape = forward(net, x).second;
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t li = 0; li < net.layers.size(); ++li)
    if (std::holds_alternative<ReluLayer>(net.layers[li]))
      for (double v : tape.layer_inputs[li]) margin = std::min(margin, std::abs(v));
  return margin;
}

// ---- architecture specs -------------------------------------------------
//
// Grammar:
//   mlp-H1-H2-...      fully connected with ReLU between hidden layers
//   conv-FxK-H         conv F filters KxK (valid, stride 1), ReLU,
//                      flatten, affine H, ReLU, affine K
// The final affine to the K logits is implicit in both.

inline ReluNet build_net(const std::string& arch, std::vector<std::size_t> input_shape,
                         std::size_t num_classes) {
  ReluNet net;
  net.arch = arch;
  net.input_shape = std::move(input_shape);
  net.num_classes = num_classes;

  auto make_affine = [](std::size_t in, std::size_t out) {
    AffineLayer a;
    a.in = in;
    a.out = out;
    a.W = Tensor::zeros({out, in});
    a.b = Tensor::zeros({out});
    return a;
  };

  std::vector<std::string> parts;
  std::stringstream ss(arch);
  std::string tok;
  while (std::getline(ss, tok, '-')) parts.push_back(tok);
  if (parts.empty()) throw SpecError("empty architecture spec");

  auto parse_num = [&](const std::string& s) -> std::size_t {
    try {
      std::size_t pos = 0;
      auto v = std::stoul(s, &pos);
      if (pos != s.size() || v == 0) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw SpecError("bad number '" + s + "' in architecture spec '" + arch + "'");
    }
  };

  std::size_t dim = net.input_size();
  if (parts[0] == "mlp") {
    for (std::size_t i = 1; i < parts.size(); ++i) {
      std::size_t h = parse_num(parts[i]);
      net.layers.emplace_back(make_affine(dim, h));
      net.layers.emplace_back(ReluLayer{});
      dim = h;
    }
    net.layers.emplace_back(make_affine(dim, num_classes));
  } else if (parts[0] == "conv") {
    if (parts.size() != 3) throw SpecError("conv spec must be conv-FxK-H: " + arch);
    auto xpos = parts[1].find('x');
    if (xpos == std::string::npos) throw SpecError("conv spec must be conv-FxK-H: " + arch);
    std::size_t filters = parse_num(parts[1].substr(0, xpos));
    std::size_t kernel = parse_num(parts[1].substr(xpos + 1));
    std::size_t hidden = parse_num(parts[2]);
    if (net.input_shape.size() != 3)
      throw SpecError("conv architecture requires a {channels,height,width} input shape");
    Conv2dLayer c;
    c.in_c = net.input_shape[0];
    c.in_h = net.input_shape[1];
    c.in_w = net.input_shape[2];
    c.out_c = filters;
    c.k = kernel;
    if (c.k > c.in_h || c.k > c.in_w) throw SpecError("conv kernel larger than input");
    c.W = Tensor::zeros({filters, c.in_c, kernel, kernel});
    c.b = Tensor::zeros({filters});
    dim = c.out_size();
    net.layers.emplace_back(std::move(c));
    net.layers.emplace_back(ReluLayer{});
    net.layers.emplace_back(make_affine(dim, hidden));
    net.layers.emplace_back(ReluLayer{});
    net.layers.emplace_back(make_affine(hidden, num_classes));
  } else {
    throw SpecError("unknown architecture family '" + parts[0] + "'");
  }
  net.check_invariants();
  return net;
}

/// Deterministic scaled-uniform (Glorot) initialization.
inline ReluNet init(const std::string& arch, std::vector<std::size_t> input_shape,
                    std::size_t num_classes, std::uint64_t seed) {
  ReluNet net = build_net(arch, std::move(input_shape), num_classes);
  Rng rng(derive_seed(seed, "init"));
  for (auto& layer : net.layers) {
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      double bound = std::sqrt(6.0 / static_cast<double>(a->in + a->out));
      for (auto& w : a->W.data) w = rng.uniform(-bound, bound);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      double fan_in = static_cast<double>(c->in_c * c->k * c->k);
      double fan_out = static_cast<double>(c->out_c * c->k * c->k);
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& w : c->W.data) w = rng.uniform(-bound, bound);
    }
  }
  return net;
}

}  // namespace taig

#endif
