#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "tb/cli.hpp"
#include "tb/defense.hpp"
#include "tb/eval.hpp"

using namespace tb;
using namespace tb::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result tbench(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> synth_flags() {
  return {"--set", "data.synth=true", "--set", "data.synth.count=120", "--set",
          "data.synth.classes=3", "--set", "data.synth.side=8", "--set", "data.synth.seed=4"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("config precedence is flag over file over default") {
  tbtest::TempDir dir("cfg");
  spit(dir / "run.cfg", "attack.epsilon = 0.1\ntrain.epochs = 7\n");
  const auto from_file = resolve_config(dir / "run.cfg", {});
  CHECK(from_file.at("attack.epsilon") == "0.1");
  CHECK(from_file.at("train.epochs") == "7");
  CHECK(from_file.at("attack.steps") == default_config().at("attack.steps"));
  const auto flagged = resolve_config(dir / "run.cfg", {{"attack.epsilon", "0.2"}});
  CHECK(flagged.at("attack.epsilon") == "0.2");
  CHECK(flagged.at("train.epochs") == "7");
  CHECK(resolve_config({}, {}) == default_config());

  spit(dir / "bad.cfg", "attack.epsilonn = 0.1\n");
  try {
    resolve_config(dir / "bad.cfg", {});
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("attack.epsilonn") != std::string::npos);
  }
  CHECK_THROWS_AS(resolve_config({}, {{"nope", "1"}}), UsageError);
}

TEST_CASE("manifest JSON round trip") {
  tbtest::TempDir dir("manifest");
  spit(dir / "w", "weights");
  RunManifest m;
  m.command = "train";
  m.argv = {"train", "--out", "w"};
  m.config = {{"train.epochs", "3"}};
  m.seeds = {{"train.seed", 9}};
  m.outputs = {describe_file("weights", dir / "w")};
  m.notes = {{"samples", "10"}};
  m.version = version();
  const auto back = RunManifest::from_json(m.to_json());
  CHECK(back.command == m.command);
  CHECK(back.argv == m.argv);
  CHECK(back.config == m.config);
  CHECK(back.seeds == m.seeds);
  CHECK(back.outputs.front().fnv1a == m.outputs.front().fnv1a);
  CHECK(back.notes == m.notes);

  spit(dir / "m.json", m.to_json());
  CHECK(config_from_manifest(dir / "m.json") == m.config);

  m.outputs.push_back({"gone", (dir / "missing").string(), "0"});
  CHECK_THROWS(m.to_json());
}

TEST_CASE("PGM round trip and grid layout") {
  tbtest::TempDir dir("pgm");
  const Tensor benign = tbtest::random_images({20, 1, 6, 5}, 1);
  const Tensor adv = tbtest::random_images({20, 1, 6, 5}, 2);
  const auto idx = pick_indices(20, 12, 3);
  REQUIRE(idx.size() == 12);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK(idx.back() < 20);
  CHECK(pick_indices(20, 12, 3) == idx);

  const Pgm grid = image_grid(benign, adv, idx);
  CHECK(grid.width == 12 * 5 + 13);
  CHECK(grid.height == 2 * 6 + 3);
  write_pgm(dir / "g.pgm", grid);
  const Pgm back = read_pgm(dir / "g.pgm");
  CHECK(back.pixels == grid.pixels);
  CHECK(slurp(dir / "g.pgm").rfind("P2\n", 0) == 0);

  double worst = 0;
  for (std::size_t k = 0; k < idx.size(); ++k)
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 5; ++c) {
        const double top = back.pixels[(1 + r) * back.width + 1 + k * 6 + c] / 255.0;
        const double bottom = back.pixels[(8 + r) * back.width + 1 + k * 6 + c] / 255.0;
        worst = std::max(worst, std::abs(top - benign[idx[k] * 30 + r * 5 + c]));
        worst = std::max(worst, std::abs(bottom - adv[idx[k] * 30 + r * 5 + c]));
      }
  CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("usage errors exit with code 2") {
  const auto missing = tbench({"train", "--out", "/tmp/never.tbnet"});
  CHECK(missing.code == kExitUsage);
  CHECK(missing.err.find("data.images") != std::string::npos);

  const auto bogus = tbench(with({"attack", "--model", "x.tbnet", "--out", "/tmp/x", "--attack", "cw"},
                                 synth_flags()));
  CHECK(bogus.code == kExitUsage);
  CHECK(bogus.err.find("sinitidim") != std::string::npos);

  CHECK(tbench({"frobnicate"}).code == kExitUsage);
  CHECK(tbench({"train", "--no-such-flag"}).code == kExitUsage);
}

TEST_CASE("train is deterministic and zero epochs keeps the init") {
  tbtest::TempDir dir("train");
  const auto a = tbench(with({"train", "--out", (dir / "a.tbnet").string(), "--epochs", "2"}, synth_flags()));
  REQUIRE(a.code == kExitOk);
  const auto b = tbench(with({"train", "--out", (dir / "b.tbnet").string(), "--epochs", "2"}, synth_flags()));
  REQUIRE(b.code == kExitOk);
  CHECK(slurp(dir / "a.tbnet") == slurp(dir / "b.tbnet"));
  CHECK(fs::exists(dir / "a.tbnet.manifest.json"));

  const auto z = tbench(with({"train", "--out", (dir / "z.tbnet").string(), "--epochs", "0", "--set",
                              "model.init_seed=5", "--arch", "cnn_b"},
                             synth_flags()));
  REQUIRE(z.code == kExitOk);
  CHECK(diffnet::load_network(dir / "z.tbnet") ==
        diffnet::build_architecture("cnn_b", {1, 8, 8}, 3, 5));
}

TEST_CASE("attack, verify, eval, probe, sweep and dump-grid") {
  tbtest::TempDir dir("pipeline");
  const std::string a = (dir / "alpha.tbnet").string(), b = (dir / "beta.tbnet").string();
  REQUIRE(tbench(with({"train", "--out", a, "--epochs", "3"}, synth_flags())).code == kExitOk);
  REQUIRE(tbench(with({"train", "--out", b, "--epochs", "3", "--arch", "cnn_b"}, synth_flags())).code == kExitOk);

  SUBCASE("zero budget fgsm is the identity") {
    const auto r = tbench(with({"attack", "--model", a, "--out", (dir / "z").string(), "--attack", "fgsm",
                                "--epsilon", "0"},
                               synth_flags()));
    REQUIRE(r.code == kExitOk);
    CHECK(slurp(dir / "z" / "adv-images.idx") == slurp(dir / "z" / "benign-images.idx"));
    CHECK(bitwise_equal(data::read_f64_tensor(dir / "z" / "adv.f64"),
                        data::read_f64_tensor(dir / "z" / "benign.f64")));

    const auto e = tbench({"eval", "--target", a, "--attack-dir", (dir / "z").string(), "--out",
                           (dir / "zr").string()});
    REQUIRE(e.code == kExitOk);
    const auto report = eval::TransferReport::from_json(slurp(dir / "zr.json"));
    CHECK(report.fooled[0][0] == 0);
    CHECK(report.counts[0][0] > 0);
  }

  SUBCASE("ensemble attack, verify and eval") {
    const std::string out = (dir / "ens").string();
    const auto r = tbench(with({"attack", "--model", a, "--model", b, "--out", out, "--attack",
                                "sinitidim", "--steps", "4", "--scale-copies", "2"},
                               synth_flags()));
    REQUIRE(r.code == kExitOk);
    const auto manifest = nlohmann::json::parse(slurp(dir / "ens" / "manifest.json"));
    CHECK(manifest["notes"]["ensemble_weights"] == "0.5,0.5");
    CHECK(manifest["notes"]["source"] == "alpha+beta");
    CHECK(manifest["config"]["attack.id"] == "sinitidim");

    const std::string benign = (dir / "ens" / "benign-images.idx").string();
    const std::string adv = (dir / "ens" / "adv-images.idx").string();
    CHECK(tbench({"verify", "--benign", benign, "--adversarial", adv}).code == kExitOk);
    CHECK(tbench({"verify", "--benign", benign, "--adversarial", adv, "--epsilon", "1/255"}).code ==
          kExitBudget);

    const auto e = tbench({"eval", "--target", a, "--target", b, "--attack-dir", out, "--out",
                           (dir / "rep").string(), "--exact", "--defend"});
    REQUIRE(e.code == kExitOk);
    const std::string csv = slurp(dir / "rep.csv");
    CHECK(csv.rfind("source,alpha,beta,alpha+rp,beta+rp\n", 0) == 0);
    CHECK(csv.find("\nalpha+beta,") != std::string::npos);

    // Library recount over the same files.
    const auto report = eval::TransferReport::from_json(slurp(dir / "rep.json"));
    const auto ds = data::Dataset(data::read_f64_tensor(dir / "ens" / "benign.f64"),
                                  data::read_idx_labels(dir / "ens" / "labels.idx"), 3);
    const Tensor x_adv = data::read_f64_tensor(dir / "ens" / "adv.f64");
    const auto ma = attacks::make_model(diffnet::load_network(a));
    const auto mb = attacks::make_model(diffnet::load_network(b));
    const std::vector<eval::NamedClassifier> targets{
        {"alpha", ma},
        {"beta", mb},
        {"alpha+rp", std::make_shared<defense::DefendedModel>(ma, defense::DefenseConfig{})},
        {"beta+rp", std::make_shared<defense::DefendedModel>(mb, defense::DefenseConfig{})}};
    const auto lib = eval::score_adversarial("x", "sinitidim", targets, ds, x_adv);
    CHECK(report.evaluated == lib.evaluated);
    CHECK(report.fooled == lib.fooled);
    CHECK(report.counts == lib.counts);
  }

  SUBCASE("probe writes the default curve") {
    const auto p = tbench(with({"probe", "--model", a, "--out", (dir / "probe.csv").string()}, synth_flags()));
    REQUIRE(p.code == kExitOk);
    const auto curve = eval::ScaleCurve::from_csv(slurp(dir / "probe.csv"));
    CHECK(curve.scales.size() == 20);
  }

  SUBCASE("sweep writes one row per attack, step count and target") {
    const auto s = tbench(with({"sweep", "--source", a, "--target", b, "--out", (dir / "sweep.csv").string(),
                                "--set", "sweep.steps=2,4"},
                               synth_flags()));
    REQUIRE(s.code == kExitOk);
    const std::string csv = slurp(dir / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2);
  }

  SUBCASE("dump-grid tiles twelve pairs") {
    const std::string out = (dir / "g").string();
    REQUIRE(tbench(with({"attack", "--model", a, "--out", out, "--attack", "fgsm"}, synth_flags())).code == kExitOk);
    const auto g = tbench({"dump-grid", "--benign", out + "/benign-images.idx", "--adversarial",
                           out + "/adv-images.idx", "--out", (dir / "grid.pgm").string()});
    REQUIRE(g.code == kExitOk);
    const Pgm pgm = read_pgm(dir / "grid.pgm");
    CHECK(pgm.width == 12 * 8 + 13);
    CHECK(pgm.height == 2 * 8 + 3);
  }
}
