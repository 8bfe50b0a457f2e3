#ifndef TAIG_CONFIG_HPP
#define TAIG_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "taig/attacks.hpp"
#include "taig/train.hpp"

namespace taig {

// Declarative run configuration, one JSON file driving the whole pipeline.
// Unknown keys are errors, not warnings.

struct DatasetSection {
  std::string type;  // "blobs" | "idx"
  // blobs
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::vector<std::size_t> shape{1, 8, 8};
  double separation = 0.5;
  double sigma = 0.1;
  // idx
  std::string images_path;
  std::string labels_path;
};

struct ModelSection {
  std::string tag;
  std::string arch;
  std::size_t seed_index = 0;  // folded into the derived per-model seed
  TrainConfig train;
};

struct AttackSection {
  std::string tag;
  std::string kind;  // taig-s | taig-r | fgsm | ifgsm | mifgsm
  double epsilon = 8.0 / 255.0;
  std::optional<double> alpha;
  std::optional<std::size_t> iterations;
  std::string mode = "untargeted";
  std::size_t target = 0;
  std::string direction = "descend";
  std::size_t sampling_points = 30;   // S
  std::size_t turning_points = 30;    // E
  std::optional<double> tau;          // defaults to epsilon
  std::size_t samples_per_segment = 1;
  double momentum = 0.0;
};

struct EvalSection {
  std::string surrogate;
  std::vector<std::string> victims;
  std::vector<std::string> metrics{"asr"};
  std::size_t n_images = 100;
};

struct AblateSection {
  std::string parameter;  // "S" | "E" | "samples_per_segment"
  std::vector<std::size_t> values;
  std::string attack;  // tag of the attack section to sweep
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetSection dataset;
  std::vector<ModelSection> models;
  std::vector<AttackSection> attacks;
  std::optional<EvalSection> eval;
  std::optional<AblateSection> ablate;
};

namespace cfgdetail {

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  if (obj.contains(key)) return obj.at(key).get<T>();
  return fallback;
}

}  // namespace cfgdetail

/// Iteration default follows the epsilon pairing: 20 / 50 / 100 iterations
/// for budgets around 0.03 / 0.05 / 0.1.
inline std::size_t default_iterations(double epsilon) {
  if (epsilon < 0.04) return 20;
  if (epsilon < 0.075) return 50;
  return 100;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using cfgdetail::check_keys;
  using cfgdetail::get_or;
  RunConfig rc;
  check_keys(j, {"seed", "dataset", "models", "attacks", "eval", "ablate"}, "top level");
  rc.seed = get_or<std::uint64_t>(j, "seed", 0);

  if (!j.contains("dataset")) throw ConfigError("missing required section 'dataset'");
  {
    const auto& d = j.at("dataset");
    check_keys(d,
               {"type", "classes", "per_class", "shape", "separation", "sigma",
                "images", "labels"},
               "dataset");
    rc.dataset.type = d.at("type").get<std::string>();
    if (rc.dataset.type == "blobs") {
      rc.dataset.classes = get_or<std::size_t>(d, "classes", rc.dataset.classes);
      rc.dataset.per_class = get_or<std::size_t>(d, "per_class", rc.dataset.per_class);
      rc.dataset.shape = get_or<std::vector<std::size_t>>(d, "shape", rc.dataset.shape);
      rc.dataset.separation = get_or<double>(d, "separation", rc.dataset.separation);
      rc.dataset.sigma = get_or<double>(d, "sigma", rc.dataset.sigma);
    } else if (rc.dataset.type == "idx") {
      rc.dataset.images_path = d.at("images").get<std::string>();
      rc.dataset.labels_path = d.at("labels").get<std::string>();
    } else {
      throw ConfigError("dataset.type must be 'blobs' or 'idx'");
    }
  }

  if (!j.contains("models")) throw ConfigError("missing required section 'models'");
  for (const auto& m : j.at("models")) {
    check_keys(m, {"tag", "arch", "seed_index", "train"}, "models entry");
    ModelSection ms;
    ms.tag = m.at("tag").get<std::string>();
    ms.arch = m.at("arch").get<std::string>();
    ms.seed_index = get_or<std::size_t>(m, "seed_index", 0);
    if (m.contains("train")) {
      const auto& t = m.at("train");
      check_keys(t, {"learning_rate", "epochs", "batch_size", "weight_decay"},
                 "models.train");
      ms.train.learning_rate = get_or<double>(t, "learning_rate", ms.train.learning_rate);
      ms.train.epochs = get_or<std::size_t>(t, "epochs", ms.train.epochs);
      ms.train.batch_size = get_or<std::size_t>(t, "batch_size", ms.train.batch_size);
      ms.train.weight_decay = get_or<double>(t, "weight_decay", ms.train.weight_decay);
    }
    rc.models.push_back(std::move(ms));
  }
  if (rc.models.empty()) throw ConfigError("section 'models' must not be empty");

  static const std::set<std::string> kAttackKinds{"taig-s", "taig-r", "fgsm", "ifgsm",
                                                  "mifgsm"};
  if (j.contains("attacks"))
    for (const auto& a : j.at("attacks")) {
      check_keys(a,
                 {"tag", "kind", "epsilon", "alpha", "iterations", "mode", "target",
                  "direction", "S", "E", "tau", "samples_per_segment", "momentum"},
                 "attacks entry");
      AttackSection as;
      as.tag = a.at("tag").get<std::string>();
      as.kind = a.at("kind").get<std::string>();
      if (!kAttackKinds.count(as.kind)) {
        std::string valid;
        for (const auto& k : kAttackKinds) valid += (valid.empty() ? "" : ", ") + k;
        throw ConfigError("unknown attack kind '" + as.kind + "' (valid: " + valid + ")");
      }
      as.epsilon = get_or<double>(a, "epsilon", as.epsilon);
      if (a.contains("alpha")) as.alpha = a.at("alpha").get<double>();
      if (a.contains("iterations")) as.iterations = a.at("iterations").get<std::size_t>();
      as.mode = get_or<std::string>(a, "mode", as.mode);
      if (as.mode != "untargeted" && as.mode != "targeted")
        throw ConfigError("attack mode must be 'untargeted' or 'targeted'");
      as.target = get_or<std::size_t>(a, "target", 0);
      as.direction = get_or<std::string>(a, "direction", as.direction);
      if (as.direction != "descend" && as.direction != "ascend")
        throw ConfigError("attack direction must be 'descend' or 'ascend'");
      as.sampling_points = get_or<std::size_t>(a, "S", as.sampling_points);
      as.turning_points = get_or<std::size_t>(a, "E", as.turning_points);
      if (a.contains("tau")) as.tau = a.at("tau").get<double>();
      as.samples_per_segment =
          get_or<std::size_t>(a, "samples_per_segment", as.samples_per_segment);
      as.momentum = get_or<double>(a, "momentum", as.momentum);
      rc.attacks.push_back(std::move(as));
    }

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"surrogate", "victims", "metrics", "n_images"}, "eval");
    EvalSection es;
    es.surrogate = e.at("surrogate").get<std::string>();
    es.victims = e.at("victims").get<std::vector<std::string>>();
    if (es.victims.empty()) throw ConfigError("eval.victims must not be empty");
    es.metrics = get_or<std::vector<std::string>>(e, "metrics", es.metrics);
    es.n_images = get_or<std::size_t>(e, "n_images", es.n_images);
    rc.eval = std::move(es);
  }

  if (j.contains("ablate")) {
    const auto& ab = j.at("ablate");
    check_keys(ab, {"parameter", "values", "attack"}, "ablate");
    AblateSection abs_;
    abs_.parameter = ab.at("parameter").get<std::string>();
    if (abs_.parameter != "S" && abs_.parameter != "E" &&
        abs_.parameter != "samples_per_segment")
      throw ConfigError("ablate.parameter must be 'S', 'E', or 'samples_per_segment'");
    abs_.values = ab.at("values").get<std::vector<std::size_t>>();
    if (abs_.values.empty()) throw ConfigError("ablate.values must not be empty");
    abs_.attack = ab.at("attack").get<std::string>();
    rc.ablate = std::move(abs_);
  }

  // Cross references.
  auto model_exists = [&](const std::string& tag) {
    for (const auto& m : rc.models)
      if (m.tag == tag) return true;
    return false;
  };
  if (rc.eval) {
    if (!model_exists(rc.eval->surrogate))
      throw ConfigError("eval.surrogate '" + rc.eval->surrogate + "' is not a model tag");
    for (const auto& v : rc.eval->victims)
      if (!model_exists(v)) throw ConfigError("eval victim '" + v + "' is not a model tag");
  }
  if (rc.ablate) {
    bool found = false;
    for (const auto& a : rc.attacks)
      if (a.tag == rc.ablate->attack) found = true;
    if (!found)
      throw ConfigError("ablate.attack '" + rc.ablate->attack + "' is not an attack tag");
  }
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Report the line number, which the byte offset determines.
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError("config parse error at line " + std::to_string(line) + ": " +
                      e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
}

/// Materialize the attack section into an AttackConfig for a given net.
inline AttackConfig make_attack_config(const AttackSection& as, std::uint64_t seed) {
  AttackConfig cfg;
  cfg.epsilon = as.epsilon;
  cfg.alpha = as.alpha.value_or(1.0 / 255.0);
  cfg.iterations = as.iterations.value_or(default_iterations(as.epsilon));
  cfg.mode = as.mode == "targeted" ? AttackMode::Targeted : AttackMode::Untargeted;
  cfg.target_class = as.target;
  // Targeted mode ascends the target-class attribution; untargeted descends f_y.
  cfg.direction = as.direction == "ascend" || cfg.mode == AttackMode::Targeted
                      ? Direction::Ascend
                      : Direction::Descend;
  cfg.seed = seed;
  if (as.kind == "taig-s") {
    cfg.source.kind = GradKind::IgStraight;
    cfg.source.path.kind = PathKind::Straight;
    cfg.source.path.samples_per_segment = as.sampling_points;
  } else if (as.kind == "taig-r") {
    cfg.source.kind = GradKind::RigPath;
    cfg.source.path.kind = PathKind::RandomPiecewise;
    cfg.source.path.segments = as.turning_points;
    cfg.source.path.tau = as.tau.value_or(as.epsilon);
    cfg.source.path.samples_per_segment = as.samples_per_segment;
  } else {
    cfg.source.kind = GradKind::Standard;
    if (as.kind == "fgsm") {
      cfg.iterations = 1;
      cfg.alpha = as.alpha.value_or(as.epsilon);
    } else if (as.kind == "mifgsm") {
      cfg.source.momentum_mu = as.momentum > 0 ? as.momentum : 1.0;
    }
  }
  return cfg;
}

}  // namespace taig

#endif
