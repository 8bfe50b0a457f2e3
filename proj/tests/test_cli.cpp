#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "taig/pipeline.hpp"

using namespace taig;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("taig_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string base_config_json() {
  return R"({
    "seed": 11,
    "dataset": {"type": "blobs", "classes": 3, "per_class": 40, "shape": [10],
                "separation": 0.4, "sigma": 0.1},
    "models": [
      {"tag": "sur", "arch": "mlp-24", "train": {"epochs": 10}},
      {"tag": "vic", "arch": "mlp-16-8", "seed_index": 1, "train": {"epochs": 10}}
    ],
    "attacks": [
      {"tag": "igs", "kind": "taig-s", "epsilon": 0.05, "S": 10},
      {"tag": "base", "kind": "ifgsm", "epsilon": 0.05}
    ],
    "eval": {"surrogate": "sur", "victims": ["sur", "vic"], "n_images": 12},
    "ablate": {"parameter": "S", "values": [2, 5, 10], "attack": "igs"}
  })";
}

RunConfig base_config() { return parse_run_config(nlohmann::json::parse(base_config_json())); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(TAIG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("cmd_train writes one model file per entry plus a log") {
  fs::path out = fresh_dir("train");
  RunConfig rc = base_config();
  cmd_train(rc, out);
  CHECK(fs::exists(out / "sur.net"));
  CHECK(fs::exists(out / "vic.net"));
  auto log = nlohmann::json::parse(slurp(out / "train_log.json"));
  CHECK(log.at("models").contains("sur"));
  CHECK(log.at("models").at("sur").at("holdout_accuracy").get<double>() > 0.5);

  // Reruns are bit-identical.
  std::string first = slurp(out / "sur.net");
  cmd_train(rc, out);
  CHECK(slurp(out / "sur.net") == first);
}

TEST_CASE("config parsing: missing sections and unknown keys name the culprit") {
  auto j = nlohmann::json::parse(base_config_json());
  auto no_dataset = j;
  no_dataset.erase("dataset");
  CHECK_THROWS_WITH(parse_run_config(no_dataset),
                    Catch::Matchers::ContainsSubstring("dataset"));
  auto bad_key = j;
  bad_key["dataset"]["colour"] = 3;
  CHECK_THROWS_WITH(parse_run_config(bad_key),
                    Catch::Matchers::ContainsSubstring("colour"));
  auto bad_kind = j;
  bad_kind["attacks"][0]["kind"] = "pgd";
  CHECK_THROWS_WITH(parse_run_config(bad_kind),
                    Catch::Matchers::ContainsSubstring("taig-s"));
  auto bad_victim = j;
  bad_victim["eval"]["victims"] = {"sur", "ghost"};
  CHECK_THROWS_WITH(parse_run_config(bad_victim),
                    Catch::Matchers::ContainsSubstring("ghost"));
}

TEST_CASE("default iteration count follows the epsilon schedule") {
  CHECK(default_iterations(0.03) == 20);
  CHECK(default_iterations(0.05) == 50);
  CHECK(default_iterations(0.1) == 100);
  auto j = nlohmann::json::parse(base_config_json());
  RunConfig rc = parse_run_config(j);
  AttackConfig cfg = make_attack_config(rc.attacks[0], 0);
  CHECK(cfg.iterations == 50);  // epsilon 0.05, no explicit override
  CHECK(cfg.source.kind == GradKind::IgStraight);
  CHECK(cfg.source.path.samples_per_segment == 10);
}

TEST_CASE("make_attack_config: taig-r tau defaults to epsilon; fgsm is one step") {
  AttackSection as;
  as.kind = "taig-r";
  as.epsilon = 0.08;
  as.turning_points = 7;
  AttackConfig cfg = make_attack_config(as, 1);
  CHECK(cfg.source.kind == GradKind::RigPath);
  CHECK(cfg.source.path.segments == 7);
  CHECK(cfg.source.path.tau == 0.08);

  as.kind = "fgsm";
  cfg = make_attack_config(as, 1);
  CHECK(cfg.iterations == 1);
  CHECK(cfg.alpha == 0.08);

  as.kind = "mifgsm";
  cfg = make_attack_config(as, 1);
  CHECK(cfg.source.momentum_mu == 1.0);

  as.kind = "taig-s";
  as.mode = "targeted";
  as.target = 1;
  cfg = make_attack_config(as, 1);
  CHECK(cfg.mode == AttackMode::Targeted);
  CHECK(cfg.direction == Direction::Ascend);
}

TEST_CASE("cmd_attack produces in-budget dumps and reruns bit-identically") {
  fs::path out = fresh_dir("attack");
  RunConfig rc = base_config();
  cmd_train(rc, out);
  cmd_attack(rc, out);
  REQUIRE(fs::exists(out / "igs_adv.bin"));
  REQUIRE(fs::exists(out / "igs_adv.bin.json"));

  auto side = nlohmann::json::parse(slurp(out / "igs_adv.bin.json"));
  CHECK(side.at("count").get<std::size_t>() == 12);
  CHECK(side.at("surrogate") == "sur");
  auto advs = load_tensor_dump(out / "igs_adv.bin");
  REQUIRE(advs.size() == 12);
  Dataset data = pipedetail::build_dataset(rc);
  auto zoo = pipedetail::load_zoo(rc, out);
  Dataset pool = pipedetail::eval_pool(rc, data, zoo);
  for (std::size_t i = 0; i < advs.size(); ++i) {
    CHECK(linf_dist(advs[i], pool.images[i]) <= 0.05 + 1e-12);
    for (double v : advs[i].data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  std::string first = slurp(out / "igs_adv.bin");
  cmd_attack(rc, out);
  CHECK(slurp(out / "igs_adv.bin") == first);
}

TEST_CASE("cmd_attack without trained models points at the missing file") {
  fs::path out = fresh_dir("attack_missing");
  RunConfig rc = base_config();
  CHECK_THROWS_WITH(cmd_attack(rc, out),
                    Catch::Matchers::ContainsSubstring("train"));
}

TEST_CASE("cmd_eval: csv cells match asr recomputed from the dumps") {
  fs::path out = fresh_dir("eval");
  RunConfig rc = base_config();
  rc.eval->metrics = {"asr", "perceptual", "sign_hist"};
  cmd_train(rc, out);
  cmd_attack(rc, out);
  cmd_eval(rc, out);

  std::string csv = slurp(out / "transfer.csv");
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "attack,epsilon,surrogate,victim,is_surrogate,n,asr");

  // Recompute the igs/vic cell from the attack dump.
  Dataset data = pipedetail::build_dataset(rc);
  auto zoo = pipedetail::load_zoo(rc, out);
  Dataset pool = pipedetail::eval_pool(rc, data, zoo);
  auto advs = load_tensor_dump(out / "igs_adv.bin");
  double expect = asr(zoo.at("vic"), advs, pool.labels, AttackMode::Untargeted);

  bool found = false;
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("igs,", 0) == 0 && line.find(",vic,") != std::string::npos) {
      found = true;
      double got = std::stod(line.substr(line.rfind(',') + 1));
      CHECK(got == Catch::Approx(expect).margin(1e-9));
    }
  }
  CHECK(found);

  auto meta = nlohmann::json::parse(slurp(out / "eval_meta.json"));
  REQUIRE(meta.contains("attacks"));
  CHECK(meta.at("attacks").size() == 2);
  CHECK(meta.at("attacks")[0].contains("perceptual"));
  CHECK(meta.contains("sign_hist"));
  double ig_dis = meta["sign_hist"]["ig_mean_disagreement"].get<double>();
  double rig_dis = meta["sign_hist"]["rig_mean_disagreement"].get<double>();
  CHECK(ig_dis >= 0.0);
  CHECK(rig_dis <= 1.0);
}

TEST_CASE("cmd_ablate sweeps the requested values and reports the trend") {
  fs::path out = fresh_dir("ablate");
  RunConfig rc = base_config();
  cmd_train(rc, out);
  cmd_ablate(rc, out);

  std::string csv = slurp(out / "ablation.csv");
  std::size_t rows = 0;
  for (char c : csv)
    if (c == '\n') ++rows;
  CHECK(rows == 4);  // header + 3 values

  auto meta = nlohmann::json::parse(slurp(out / "ablation_meta.json"));
  CHECK(meta.at("parameter") == "S");
  CHECK(meta.at("values").get<std::vector<std::size_t>>() ==
        std::vector<std::size_t>{2, 5, 10});
  CHECK(meta.at("black_box_means").size() == 3);
  double rho = meta.at("spearman_vs_value").get<double>();
  CHECK(rho >= -1.0);
  CHECK(rho <= 1.0);
}

TEST_CASE("spearman: monotone, anti-monotone, and tied inputs") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == 1.0);
  CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == -1.0);
  CHECK(spearman({1, 2, 3, 4}, {5, 5, 5, 5}) == 0.0);
  CHECK(spearman({1, 2, 3, 4}, {10, 10, 20, 30}) > 0.9);
}

TEST_CASE("cli subprocess: exit codes for success, config error, runtime error") {
  fs::path out = fresh_dir("subproc");
  fs::path cfg = out / "run.json";
  {
    std::ofstream os(cfg);
    os << base_config_json();
  }
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("train --config " + cfg.string() + " --out " + (out / "o").string()) == 0);
  CHECK(fs::exists(out / "o" / "sur.net"));

  fs::path bad = out / "bad.json";
  {
    std::ofstream os(bad);
    os << R"({"seed": 1})";  // missing dataset/models
  }
  CHECK(run_cli("train --config " + bad.string()) == 2);
  // attack before train: runtime error (missing model files)
  CHECK(run_cli("attack --config " + cfg.string() + " --out " +
                (out / "empty").string()) == 3);
  // bad JSON syntax
  fs::path syn = out / "syntax.json";
  {
    std::ofstream os(syn);
    os << "{ nope";
  }
  CHECK(run_cli("train --config " + syn.string()) == 2);
}

TEST_CASE("cli subprocess: --seed override changes outputs deterministically") {
  fs::path out = fresh_dir("seedover");
  fs::path cfg = out / "run.json";
  {
    std::ofstream os(cfg);
    os << base_config_json();
  }
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (out / "a").string() +
                  " --seed 5") == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (out / "b").string() +
                  " --seed 5") == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (out / "c").string() +
                  " --seed 6") == 0);
  CHECK(slurp(out / "a" / "sur.net") == slurp(out / "b" / "sur.net"));
  CHECK(slurp(out / "a" / "sur.net") != slurp(out / "c" / "sur.net"));
}
