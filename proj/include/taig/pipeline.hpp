#ifndef TAIG_PIPELINE_HPP
#define TAIG_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "taig/config.hpp"
#include "taig/eval.hpp"
#include "taig/io.hpp"

namespace taig {

// The four CLI commands. Every command is a pure function of
// (config file, model files, data files); reruns reproduce outputs
// bit-exactly.

namespace pipedetail {

inline Dataset build_dataset(const RunConfig& rc) {
  if (rc.dataset.type == "blobs") {
    BlobConfig bc;
    bc.num_classes = rc.dataset.classes;
    bc.per_class = rc.dataset.per_class;
    bc.input_shape = rc.dataset.shape;
    bc.separation = rc.dataset.separation;
    bc.sigma = rc.dataset.sigma;
    bc.seed = derive_seed(rc.seed, "dataset");
    return gen_blobs(bc);
  }
  return load_idx(rc.dataset.images_path, rc.dataset.labels_path);
}

inline std::uint64_t model_seed(const RunConfig& rc, const ModelSection& m) {
  return derive_seed(rc.seed, "model:" + m.tag, m.seed_index);
}

inline std::filesystem::path model_path(const std::filesystem::path& out,
                                        const std::string& tag) {
  return out / (tag + ".net");
}

inline std::map<std::string, ReluNet> load_zoo(const RunConfig& rc,
                                               const std::filesystem::path& out) {
  std::map<std::string, ReluNet> zoo;
  for (const auto& m : rc.models) {
    auto p = model_path(out, m.tag);
    if (!std::filesystem::exists(p))
      throw FormatError("model file missing: " + p.string() + " (run `taig train` first)");
    zoo.emplace(m.tag, load(p));
  }
  return zoo;
}

/// The evaluation pool: items every referenced model classifies correctly.
inline Dataset eval_pool(const RunConfig& rc, const Dataset& data,
                         const std::map<std::string, ReluNet>& zoo) {
  if (!rc.eval) throw ConfigError("this command requires an 'eval' section");
  std::vector<const ReluNet*> nets;
  nets.push_back(&zoo.at(rc.eval->surrogate));
  for (const auto& v : rc.eval->victims)
    if (v != rc.eval->surrogate) nets.push_back(&zoo.at(v));
  return subsample_correct(data, nets, rc.eval->n_images, derive_seed(rc.seed, "pool"));
}

inline nlohmann::json attack_echo(const AttackSection& a) {
  nlohmann::json e;
  e["tag"] = a.tag;
  e["kind"] = a.kind;
  e["epsilon"] = a.epsilon;
  e["mode"] = a.mode;
  e["S"] = a.sampling_points;
  e["E"] = a.turning_points;
  e["samples_per_segment"] = a.samples_per_segment;
  if (a.tau) e["tau"] = *a.tau;
  if (a.alpha) e["alpha"] = *a.alpha;
  if (a.iterations) e["iterations"] = *a.iterations;
  return e;
}

}  // namespace pipedetail

inline void cmd_train(const RunConfig& rc, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  Dataset data = pipedetail::build_dataset(rc);
  nlohmann::json log;
  log["version"] = kVersion;
  log["seed"] = rc.seed;
  for (const auto& m : rc.models) {
    auto seed = pipedetail::model_seed(rc, m);
    ReluNet net = init(m.arch, data.images.front().shape, data.num_classes, seed);
    TrainConfig tc = m.train;
    tc.seed = seed;
    TrainResult tr = train(std::move(net), data, tc);
    save(tr.net, pipedetail::model_path(out, m.tag));
    log["models"][m.tag] = {{"arch", m.arch},
                            {"holdout_accuracy", tr.holdout_accuracy},
                            {"final_loss", tr.epoch_losses.back()}};
  }
  write_file_atomic(out / "train_log.json", log.dump(2) + "\n");
}

inline void cmd_attack(const RunConfig& rc, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  Dataset data = pipedetail::build_dataset(rc);
  auto zoo = pipedetail::load_zoo(rc, out);
  Dataset pool = pipedetail::eval_pool(rc, data, zoo);
  const ReluNet& surrogate = zoo.at(rc.eval->surrogate);

  for (const auto& a : rc.attacks) {
    AttackConfig base = make_attack_config(a, derive_seed(rc.seed, "attack:" + a.tag));
    std::vector<Tensor> advs;
    std::vector<bool> success;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      AttackConfig cfg = base;
      cfg.seed = derive_seed(base.seed, "image", i);
      AttackResult res = run(surrogate, pool.images[i], pool.labels[i], cfg);
      advs.push_back(std::move(res.adversarial));
      success.push_back(res.success_on_surrogate);
    }
    nlohmann::json side;
    side["attack"] = pipedetail::attack_echo(a);
    side["surrogate"] = rc.eval->surrogate;
    side["seed"] = rc.seed;
    side["labels"] = pool.labels;
    side["success_on_surrogate"] = success;
    dump_tensors(out / (a.tag + "_adv.bin"), advs, side);
  }
}

inline void cmd_eval(const RunConfig& rc, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  if (!rc.eval) throw ConfigError("eval command requires an 'eval' section");
  Dataset data = pipedetail::build_dataset(rc);
  auto zoo = pipedetail::load_zoo(rc, out);
  Dataset pool = pipedetail::eval_pool(rc, data, zoo);

  NamedNet surrogate{rc.eval->surrogate, &zoo.at(rc.eval->surrogate)};
  std::vector<NamedNet> victims;
  victims.push_back(surrogate);
  for (const auto& v : rc.eval->victims)
    if (v != rc.eval->surrogate) victims.push_back({v, &zoo.at(v)});

  bool want_perceptual = false, want_hist = false;
  for (const auto& m : rc.eval->metrics) {
    if (m == "perceptual") want_perceptual = true;
    if (m == "sign_hist") want_hist = true;
  }

  CsvWriter csv({"attack", "epsilon", "surrogate", "victim", "is_surrogate", "n", "asr"});
  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["seed"] = rc.seed;
  for (const auto& a : rc.attacks) {
    AttackConfig base = make_attack_config(a, derive_seed(rc.seed, "attack:" + a.tag));
    // Same per-image seed stream as cmd_attack, so dumps and reports agree.
    TransferMatrix tm = transfer_eval(surrogate, victims, pool, base, a.tag);
    for (std::size_t i = 0; i < tm.victim_tags.size(); ++i)
      csv.append_row({a.tag, std::to_string(a.epsilon), tm.surrogate_tag, tm.victim_tags[i],
                      tm.is_surrogate[i] ? "1" : "0", std::to_string(tm.sample_count),
                      std::to_string(tm.rates[i])});
    nlohmann::json ja = pipedetail::attack_echo(a);
    ja["black_box_average"] = tm.black_box_average();
    if (want_perceptual) {
      std::vector<Tensor> advs;
      for (std::size_t i = 0; i < pool.size(); ++i) {
        AttackConfig cfg = base;
        cfg.seed = derive_seed(base.seed, "image", i);
        advs.push_back(run(*surrogate.net, pool.images[i], pool.labels[i], cfg).adversarial);
      }
      MetricReport mr = perceptual(pool.images, advs);
      ja["perceptual"] = {{"mean_rmse", mr.mean_rmse},
                         {"mean_l0_fraction", mr.mean_l0},
                         {"mean_psnr", std::isfinite(mr.mean_psnr) ? mr.mean_psnr : -1.0}};
    }
    meta["attacks"].push_back(ja);
  }
  if (want_hist) {
    PathSpec ig_spec;
    ig_spec.samples_per_segment = 30;
    PathSpec rig_spec;
    rig_spec.kind = PathKind::RandomPiecewise;
    rig_spec.segments = 30;
    rig_spec.tau = 0.05;
    rig_spec.samples_per_segment = 1;
    rig_spec.seed = derive_seed(rc.seed, "hist");
    SignHistogram hi = sign_hist(*surrogate.net, pool, ig_spec);
    SignHistogram hr = sign_hist(*surrogate.net, pool, rig_spec);
    meta["sign_hist"] = {{"ig_bins", hi.bins},
                         {"rig_bins", hr.bins},
                         {"ig_mean_disagreement", hi.mean()},
                         {"rig_mean_disagreement", hr.mean()}};
  }
  csv.save(out / "transfer.csv");
  write_file_atomic(out / "eval_meta.json", meta.dump(2) + "\n");
}

/// Spearman rank correlation; average ranks on ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(xs), ry = ranks(ys);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  return dx > 0 && dy > 0 ? num / std::sqrt(dx * dy) : 0.0;
}

inline void cmd_ablate(const RunConfig& rc, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  if (!rc.ablate) throw ConfigError("ablate command requires an 'ablate' section");
  Dataset data = pipedetail::build_dataset(rc);
  auto zoo = pipedetail::load_zoo(rc, out);
  Dataset pool = pipedetail::eval_pool(rc, data, zoo);

  const AttackSection* base_section = nullptr;
  for (const auto& a : rc.attacks)
    if (a.tag == rc.ablate->attack) base_section = &a;

  NamedNet surrogate{rc.eval->surrogate, &zoo.at(rc.eval->surrogate)};
  std::vector<NamedNet> victims;
  victims.push_back(surrogate);
  for (const auto& v : rc.eval->victims)
    if (v != rc.eval->surrogate) victims.push_back({v, &zoo.at(v)});

  CsvWriter csv({"parameter", "value", "black_box_asr", "surrogate_asr"});
  std::vector<double> means;
  for (auto value : rc.ablate->values) {
    AttackSection a = *base_section;
    if (rc.ablate->parameter == "S")
      a.sampling_points = value;
    else if (rc.ablate->parameter == "E")
      a.turning_points = value;
    else
      a.samples_per_segment = value;
    AttackConfig cfg = make_attack_config(a, derive_seed(rc.seed, "ablate", value));
    TransferMatrix tm = transfer_eval(surrogate, victims, pool, cfg, a.tag);
    double bb = tm.black_box_average();
    means.push_back(bb);
    csv.append_row({rc.ablate->parameter, std::to_string(value), std::to_string(bb),
                    std::to_string(tm.rates[0])});
  }
  csv.save(out / "ablation.csv");

  std::vector<double> order(rc.ablate->values.begin(), rc.ablate->values.end());
  nlohmann::json meta;
  meta["version"] = kVersion;
  meta["parameter"] = rc.ablate->parameter;
  meta["values"] = rc.ablate->values;
  meta["black_box_means"] = means;
  meta["spearman_vs_value"] = spearman(order, means);
  meta["range_pp"] = means.empty() ? 0.0
                                   : (*std::max_element(means.begin(), means.end()) -
                                      *std::min_element(means.begin(), means.end())) *
                                         100.0;
  meta["trend_non_decreasing"] = spearman(order, means) >= 0.0;
  write_file_atomic(out / "ablation_meta.json", meta.dump(2) + "\n");
}

}  // namespace taig

#endif
