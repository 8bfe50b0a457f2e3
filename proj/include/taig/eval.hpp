#ifndef TAIG_EVAL_HPP
#define TAIG_EVAL_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "taig/attacks.hpp"
#include "taig/attribution.hpp"
#include "taig/data.hpp"
#include "taig/net.hpp"

namespace taig {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Untargeted: fraction with argmax != label. Targeted: argmax == target.
inline double asr(const ReluNet& victim, const std::vector<Tensor>& adversarials,
                  const std::vector<std::size_t>& labels, AttackMode mode,
                  std::size_t target_class = 0) {
  if (adversarials.size() != labels.size())
    throw EvalError("asr: adversarials/labels length mismatch");
  if (adversarials.empty()) throw EvalError("asr: empty batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < adversarials.size(); ++i) {
    std::size_t pred = predict(victim, adversarials[i]);
    if (mode == AttackMode::Targeted ? pred == target_class : pred != labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(adversarials.size());
}

/// Success-rate table surrogate x victims. The surrogate's own cell is
/// flagged and excluded from the average, per the usual reporting convention.
struct TransferMatrix {
  std::string surrogate_tag;
  std::vector<std::string> victim_tags;
  std::vector<double> rates;          // aligned with victim_tags
  std::vector<bool> is_surrogate;     // aligned with victim_tags
  std::size_t sample_count = 0;
  double epsilon = 0;
  std::string attack_tag;

  /// Mean over non-surrogate cells; NaN when every victim is the surrogate.
  double black_box_average() const {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rates.size(); ++i)
      if (!is_surrogate[i]) {
        s += rates[i];
        ++n;
      }
    return n ? s / static_cast<double>(n)
             : std::numeric_limits<double>::quiet_NaN();
  }
};

struct NamedNet {
  std::string tag;
  const ReluNet* net;
};

/// Attacks are generated once on the surrogate and evaluated on every
/// victim. `data` should already be pre-filtered by subsample_correct.
inline TransferMatrix transfer_eval(const NamedNet& surrogate,
                                    const std::vector<NamedNet>& victims,
                                    const Dataset& data, const AttackConfig& base_cfg,
                                    const std::string& attack_tag) {
  if (victims.empty()) throw EvalError("transfer_eval: empty victim list");
  std::vector<Tensor> advs;
  advs.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    AttackConfig cfg = base_cfg;
    cfg.seed = derive_seed(base_cfg.seed, "image", i);
    advs.push_back(run(*surrogate.net, data.images[i], data.labels[i], cfg).adversarial);
  }
  TransferMatrix tm;
  tm.surrogate_tag = surrogate.tag;
  tm.sample_count = data.size();
  tm.epsilon = base_cfg.epsilon;
  tm.attack_tag = attack_tag;
  for (const auto& v : victims) {
    tm.victim_tags.push_back(v.tag);
    tm.rates.push_back(asr(*v.net, advs, data.labels, base_cfg.mode, base_cfg.target_class));
    tm.is_surrogate.push_back(v.tag == surrogate.tag);
  }
  return tm;
}

struct MetricReport {
  std::vector<double> rmse;
  std::vector<double> l0_fraction;
  std::vector<double> psnr;  // +inf when images identical

  double mean_rmse = 0, mean_l0 = 0, mean_psnr = 0;
};

/// RMSE, fraction of changed components (|diff| > 1e-12), and PSNR with
/// peak 1.0. PSNR of identical images is reported as +inf and skipped in
/// the aggregate.
inline MetricReport perceptual(const std::vector<Tensor>& originals,
                               const std::vector<Tensor>& adversarials) {
  if (originals.size() != adversarials.size())
    throw EvalError("perceptual: batch length mismatch");
  MetricReport rep;
  double psnr_sum = 0;
  std::size_t psnr_count = 0;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    originals[i].require_same_shape(adversarials[i], "perceptual");
    double sq = 0;
    std::size_t changed = 0;
    const std::size_t n = originals[i].size();
    for (std::size_t p = 0; p < n; ++p) {
      double d = adversarials[i][p] - originals[i][p];
      sq += d * d;
      if (std::abs(d) > 1e-12) ++changed;
    }
    double rmse = std::sqrt(sq / static_cast<double>(n));
    rep.rmse.push_back(rmse);
    rep.l0_fraction.push_back(static_cast<double>(changed) / static_cast<double>(n));
    double psnr = rmse > 0 ? 20.0 * std::log10(1.0 / rmse)
                           : std::numeric_limits<double>::infinity();
    rep.psnr.push_back(psnr);
    rep.mean_rmse += rmse;
    rep.mean_l0 += rep.l0_fraction.back();
    if (std::isfinite(psnr)) {
      psnr_sum += psnr;
      ++psnr_count;
    }
  }
  auto count = static_cast<double>(originals.size());
  rep.mean_rmse /= count;
  rep.mean_l0 /= count;
  rep.mean_psnr = psnr_count ? psnr_sum / static_cast<double>(psnr_count)
                             : std::numeric_limits<double>::infinity();
  return rep;
}

inline double psnr_from_rmse(double rmse) { return 20.0 * std::log10(1.0 / rmse); }

struct SignHistogram {
  std::vector<double> per_image;  // normalized disagreement, each in [0,1]
  std::vector<std::size_t> bins;
  double bin_width = 0;

  double mean() const {
    double s = 0;
    for (double v : per_image) s += v;
    return per_image.empty() ? 0 : s / static_cast<double>(per_image.size());
  }
};

/// Per-image normalized disagreement |sign(ATTR) - sign(grad f)|_1 / (2N),
/// binned over the dataset.
inline SignHistogram sign_hist(const ReluNet& net, const Dataset& data,
                               const PathSpec& spec, std::size_t num_bins = 20) {
  SignHistogram hist;
  hist.bins.assign(num_bins, 0);
  hist.bin_width = 1.0 / static_cast<double>(num_bins);
  Tensor r = black_reference(net.input_shape);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t y = data.labels[i];
    Attribution a = attribute(net, data.images[i], r, y, spec);
    Tensor g = grad_input(net, data.images[i], y);
    double l1 = 0;
    for (std::size_t p = 0; p < g.size(); ++p)
      l1 += std::abs(sgn(a.values[p]) - sgn(g[p]));
    double v = l1 / (2.0 * static_cast<double>(g.size()));
    hist.per_image.push_back(v);
    auto b = std::min(num_bins - 1, static_cast<std::size_t>(v * num_bins));
    ++hist.bins[b];
  }
  return hist;
}

}  // namespace taig

#endif
