#ifndef TAIG_TRAIN_HPP
#define TAIG_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "taig/data.hpp"
#include "taig/net.hpp"
#include "taig/rng.hpp"

namespace taig {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double holdout_fraction = 0.1;

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

namespace detail {

/// Parameter gradients mirroring the net's layer tensors.
struct ParamGrads {
  std::vector<std::vector<Tensor>> per_layer;  // [layer] -> {dW, db} or {}

  explicit ParamGrads(const ReluNet& net) {
    for (const auto& layer : net.layers) {
      if (auto* a = std::get_if<AffineLayer>(&layer))
        per_layer.push_back({Tensor::zeros(a->W.shape), Tensor::zeros(a->b.shape)});
      else if (auto* c = std::get_if<Conv2dLayer>(&layer))
        per_layer.push_back({Tensor::zeros(c->W.shape), Tensor::zeros(c->b.shape)});
      else
        per_layer.push_back({});
    }
  }

  void zero() {
    for (auto& g : per_layer)
      for (auto& t : g) std::fill(t.data.begin(), t.data.end(), 0.0);
  }
};

/// Backward pass accumulating both input and parameter cotangents.
inline void accumulate_grads(const ReluNet& net, const Tape& tape,
                             const std::vector<double>& dlogits, ParamGrads& grads) {
  std::vector<double> dy = dlogits;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    const auto& in = tape.layer_inputs[li];
    if (auto* a = std::get_if<AffineLayer>(&layer)) {
      Tensor& dW = grads.per_layer[li][0];
      Tensor& db = grads.per_layer[li][1];
      for (std::size_t o = 0; o < a->out; ++o) {
        db.data[o] += dy[o];
        double* dwrow = &dW.data[o * a->in];
        for (std::size_t i = 0; i < a->in; ++i) dwrow[i] += dy[o] * in[i];
      }
      dy = affine_bwd_input(*a, dy);
    } else if (auto* c = std::get_if<Conv2dLayer>(&layer)) {
      Tensor& dW = grads.per_layer[li][0];
      Tensor& db = grads.per_layer[li][1];
      const std::size_t oh = c->out_h(), ow = c->out_w();
      for (std::size_t oc = 0; oc < c->out_c; ++oc)
        for (std::size_t r = 0; r < oh; ++r)
          for (std::size_t cc = 0; cc < ow; ++cc) {
            double g = dy[(oc * oh + r) * ow + cc];
            db.data[oc] += g;
            for (std::size_t ic = 0; ic < c->in_c; ++ic)
              for (std::size_t kr = 0; kr < c->k; ++kr)
                for (std::size_t kc = 0; kc < c->k; ++kc)
                  dW.data[((oc * c->in_c + ic) * c->k + kr) * c->k + kc] +=
                      g * in[(ic * c->in_h + r + kr) * c->in_w + cc + kc];
          }
      dy = conv_bwd_input(*c, dy);
    } else {
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (!(in[i] > 0)) dy[i] = 0.0;
    }
  }
}

/// Softmax cross-entropy on the logits (training only; attacks never see it).
/// Returns the loss and writes dlogits.
inline double softmax_xent(const std::vector<double>& logits, std::size_t label,
                           std::vector<double>& dlogits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0;
  dlogits.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    dlogits[k] = std::exp(logits[k] - mx);
    z += dlogits[k];
  }
  double loss = std::log(z) - (logits[label] - mx);
  for (std::size_t k = 0; k < logits.size(); ++k) dlogits[k] /= z;
  dlogits[label] -= 1.0;
  return loss;
}

}  // namespace detail

inline double accuracy(const ReluNet& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict(net, data.images[i]) == data.labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

struct TrainResult {
  ReluNet net;
  double holdout_accuracy = 0;
  std::vector<double> epoch_losses;
};

/// Minibatch SGD with cross-entropy. Deterministic for a fixed seed; aborts
/// with a diagnostic if the loss diverges.
inline TrainResult train(ReluNet net, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw DataError("train: empty dataset");
  for (auto l : data.labels)
    if (l >= net.num_classes) throw DataError("train: label >= net class count");

  Rng rng(derive_seed(cfg.seed, "train"));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(i + 1)]);

  std::size_t holdout = static_cast<std::size_t>(
      std::floor(cfg.holdout_fraction * static_cast<double>(data.size())));
  std::size_t ntrain = data.size() - holdout;
  if (ntrain == 0) throw DataError("train: holdout leaves no training items");

  detail::ParamGrads grads(net);
  std::vector<double> dlogits;
  TrainResult result;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = ntrain - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(i + 1)]);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < ntrain; start += cfg.batch_size) {
      std::size_t end = std::min(start + cfg.batch_size, ntrain);
      grads.zero();
      for (std::size_t bi = start; bi < end; ++bi) {
        std::size_t idx = order[bi];
        auto [lg, tape] = forward(net, data.images[idx]);
        (void)lg;
        epoch_loss += detail::softmax_xent(tape.logits, data.labels[idx], dlogits);
        detail::accumulate_grads(net, tape, dlogits, grads);
      }
      double scale = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t li = 0; li < net.layers.size(); ++li) {
        auto apply = [&](Tensor& param, const Tensor& g) {
          for (std::size_t i = 0; i < param.size(); ++i)
            param.data[i] -= scale * g.data[i] +
                             cfg.learning_rate * cfg.weight_decay * param.data[i];
        };
        if (auto* a = std::get_if<AffineLayer>(&net.layers[li])) {
          apply(a->W, grads.per_layer[li][0]);
          apply(a->b, grads.per_layer[li][1]);
        } else if (auto* c = std::get_if<Conv2dLayer>(&net.layers[li])) {
          apply(c->W, grads.per_layer[li][0]);
          apply(c->b, grads.per_layer[li][1]);
        }
      }
    }
    if (!std::isfinite(epoch_loss))
      throw DataError("training loss diverged (non-finite) at epoch " +
                      std::to_string(epoch));
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(ntrain));
  }

  Dataset held;
  held.num_classes = data.num_classes;
  held.split = "holdout";
  for (std::size_t i = ntrain; i < data.size(); ++i) {
    held.images.push_back(data.images[order[i]]);
    held.labels.push_back(data.labels[order[i]]);
  }
  result.holdout_accuracy = holdout > 0 ? accuracy(net, held) : accuracy(net, data);
  result.net = std::move(net);
  return result;
}

}  // namespace taig

#endif
