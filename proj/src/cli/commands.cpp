#include <chrono>
#include <deque>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "internal.hpp"
#include "json.hpp"
#include "tb/eval.hpp"

namespace tb::cli {

namespace {

using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

/// Shorthand flags for the most used keys.
const std::vector<std::pair<std::string, std::string>>& aliases() {
  static const std::vector<std::pair<std::string, std::string>> list = {
      {"attack.id", "--attack"},          {"attack.epsilon", "--epsilon"},
      {"attack.steps", "--steps"},        {"attack.step_size", "--step-size"},
      {"attack.decay", "--decay"},        {"attack.scale_copies", "--scale-copies"},
      {"attack.kernel_size", "--kernel-size"}, {"model.arch", "--arch"},
      {"train.epochs", "--epochs"},       {"train.learning_rate", "--lr"},
      {"train.batch_size", "--batch-size"}, {"probe.s_min", "--s-min"},
      {"probe.s_max", "--s-max"},         {"probe.step", "--step"},
      {"grid.count", "--count"},
  };
  return list;
}

/// Config-related flags of one subcommand.
struct Bindings {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  unsigned threads = 1;
};

/// State shared by every subcommand.
struct Session {
  std::vector<std::string> argv;
  std::ostream* out = nullptr;
  std::deque<Bindings> bindings;
  const Bindings* active = nullptr;
  unsigned threads = 1;
  Clock::time_point start = Clock::now();

  kv::Map flags() const {
    kv::Map m;
    for (const auto& [key, opt] : active->options)
      if (opt->count() > 0) m[key] = active->values.at(key);
    for (const auto& s : active->sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + s + "'");
      m[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return m;
  }

  kv::Map config() const { return resolve_config(active->config_file, flags()); }

  RunManifest manifest(const std::string& command, const kv::Map& cfg) const {
    RunManifest m;
    m.command = command;
    m.argv = argv;
    m.config = detail::resolved_snapshot(cfg);
    for (const auto& [k, v] : m.config) {
      if (k.size() >= 4 && k.compare(k.size() - 4, 4, "seed") == 0) {
        try {
          m.seeds[k] = kv::parse_uint(v, k);
        } catch (const kv::ParseError&) {
          throw UsageError("seed key '" + k + "' is not an unsigned integer");
        }
      }
    }
    m.version = version();
    m.notes["threads"] = std::to_string(threads);
    return m;
  }

  void finish(RunManifest& m, const fs::path& path) const {
    m.duration_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    write_text(path, m.to_json());
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
  }
};

Bindings& add_common(CLI::App* sub, Session& s) {
  Bindings& b = s.bindings.emplace_back();
  sub->add_option("--config", b.config_file, "Key/value config file or run manifest");
  sub->add_option("--set", b.sets, "Override any config key: key=value");
  sub->add_option("--threads", b.threads, "Worker threads")->check(CLI::PositiveNumber);
  std::map<std::string, std::string> alias_of;
  for (const auto& [k, a] : aliases()) alias_of[k] = a;
  for (const auto& [key, def] : default_config()) {
    std::string names = "--" + key;
    if (auto it = alias_of.find(key); it != alias_of.end()) names += "," + it->second;
    b.values[key] = def;
    b.options[key] = sub->add_option(names, b.values[key])->default_str(def)->group("Config");
  }
  return b;
}

diffnet::Network load_model_checked(const fs::path& p) {
  try {
    return diffnet::load_network(p);
  } catch (const std::exception& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

std::string stem_of(const fs::path& p) { return p.stem().string(); }

void check_model_fits(const diffnet::Network& net, const data::Dataset& ds, const std::string& what) {
  if (!(net.input_shape() == ds.image_shape()))
    throw UsageError(what + " expects input " + net.input_shape().str() + " but the data is " +
                     ds.image_shape().str());
  if (net.class_count() < ds.class_count())
    throw UsageError(what + " has " + std::to_string(net.class_count()) +
                     " outputs but the data has " + std::to_string(ds.class_count()) + " classes");
}

/// IDX images, or an exact sidecar when the path ends in .f64.
Tensor read_images(const fs::path& p) {
  try {
    return p.extension() == ".f64" ? data::read_f64_tensor(p) : data::read_idx_images(p);
  } catch (const std::exception& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

/// Largest |a - b| after checking shapes and the pixel range of `adv`.
double check_budget(const Tensor& benign, const Tensor& adv, double eps, const std::string& what) {
  if (benign.shape() != adv.shape())
    throw UsageError(what + ": shapes differ, " + shape_string(benign.shape()) + " vs " +
                     shape_string(adv.shape()));
  for (double v : adv.raw())
    if (!(v >= 0.0 && v <= 1.0)) throw BudgetViolation(what + ": pixel outside [0,1]");
  const double d = max_abs_diff(benign, adv);
  if (!(d <= eps + 1e-9))
    throw BudgetViolation(what + ": max |x_adv - x| = " + kv::format_real(d) + " exceeds epsilon " +
                          kv::format_real(eps));
  return d;
}

/// Rounds to bytes while keeping each byte inside the epsilon-ball of the
/// quantized benign pixel.
Tensor quantize_within(const Tensor& adv, const Tensor& benign_q, double eps) {
  Tensor out(adv.shape());
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double qb = benign_q[i] * 255.0;
    const double lo = std::max(0.0, std::ceil(qb - eps * 255.0 - 1e-9));
    const double hi = std::min(255.0, std::floor(qb + eps * 255.0 + 1e-9));
    out[i] = std::clamp(static_cast<double>(data::quantize_pixel(adv[i])), lo, hi) / 255.0;
  }
  return out;
}

Tensor quantized(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = data::quantize_pixel(x[i]) / 255.0;
  return out;
}

std::string manifest_path(const std::string& flag, const fs::path& out) {
  return flag.empty() ? out.string() + ".manifest.json" : flag;
}

// Subcommands ---------------------------------------------------------------

struct TrainArgs {
  std::string out, manifest;
  bool adversarial = false;
};

int cmd_train(Session& s, const TrainArgs& a) {
  kv::Map cfg = s.config();
  if (a.adversarial) cfg["train.adversarial"] = "true";
  std::vector<Artifact> inputs;
  const auto ds = detail::load_dataset(cfg, inputs);
  const auto tc = detail::train_config(cfg);
  const auto init_seed = kv::parse_uint(cfg.at("model.init_seed"), "model.init_seed");
  diffnet::Network net = [&] {
    try {
      return diffnet::build_architecture(cfg.at("model.arch"), ds.image_shape(), ds.class_count(),
                                         init_seed);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }();
  const bool adv = kv::parse_bool(cfg.at("train.adversarial"), "train.adversarial");
  train::TrainResult result = [&] {
    if (!adv) return train::train(std::move(net), ds, tc);
    attacks::AttackConfig ac = detail::attack_config(cfg);
    ac.epsilon = kv::parse_real(cfg.at("train.adversarial_epsilon"), "train.adversarial_epsilon");
    return train::adversarial_train(std::move(net), ds, tc, ac);
  }();

  diffnet::save_network(result.net, a.out);
  RunManifest m = s.manifest("train", cfg);
  m.inputs = inputs;
  m.outputs.push_back(describe_file("weights", a.out));
  m.notes["samples"] = std::to_string(ds.size());
  m.notes["initial_loss"] = kv::format_real(result.initial_loss);
  m.notes["final_loss"] = kv::format_real(result.final_loss);
  m.notes["train_accuracy"] = kv::format_real(result.train_accuracy);
  s.finish(m, manifest_path(a.manifest, a.out));
  *s.out << "trained " << cfg.at("model.arch") << (adv ? " (adversarial)" : "") << " on "
         << ds.size() << " samples: loss " << kv::format_real(result.initial_loss) << " -> "
         << kv::format_real(result.final_loss) << ", accuracy "
         << kv::format_real(result.train_accuracy) << "\n";
  return kExitOk;
}

struct AttackArgs {
  std::vector<std::string> models;
  std::string out_dir;
};

int cmd_attack(Session& s, const AttackArgs& a) {
  const kv::Map cfg = s.config();
  const auto id = detail::attack_id(cfg);
  const auto acfg = detail::attack_config(cfg);
  std::vector<Artifact> inputs;
  const auto ds = detail::load_dataset(cfg, inputs);

  std::vector<attacks::ModelPtr> members;
  std::vector<std::string> ids;
  for (const auto& p : a.models) {
    auto net = load_model_checked(p);
    check_model_fits(net, ds, p);
    members.push_back(attacks::make_model(std::move(net)));
    ids.push_back(stem_of(p));
    inputs.push_back(describe_file("model", p));
  }
  attacks::ModelPtr oracle = members.front();
  std::vector<double> weights{1.0};
  if (members.size() > 1) {
    auto ens = attacks::equal_ensemble(members);
    weights = ens->weights();
    oracle = ens;
  }

  const Tensor& x = ds.images();
  const Tensor x_adv = attacks::craft(id, *oracle, x, ds.labels(), acfg, s.threads);
  const double exact_dist = check_budget(x, x_adv, acfg.epsilon, "crafted batch");
  const Tensor xq = quantized(x);
  const Tensor advq = quantize_within(x_adv, xq, acfg.epsilon);
  check_budget(xq, advq, acfg.epsilon, "quantized batch");

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  data::write_idx_images(dir / "benign-images.idx", xq);
  data::write_idx_images(dir / "adv-images.idx", advq);
  data::write_idx_labels(dir / "labels.idx", ds.labels());
  data::write_f64_tensor(dir / "benign.f64", x);
  data::write_f64_tensor(dir / "adv.f64", x_adv);

  RunManifest m = s.manifest("attack", cfg);
  m.inputs = inputs;
  for (const char* f : {"benign-images.idx", "adv-images.idx", "labels.idx", "benign.f64", "adv.f64"})
    m.outputs.push_back(describe_file(f, dir / f));
  std::string joined_ids, joined_w;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    joined_ids += (i ? "+" : "") + ids[i];
    joined_w += (i ? "," : "") + kv::format_real(weights[i]);
  }
  m.notes["source"] = joined_ids;
  m.notes["ensemble_weights"] = joined_w;
  m.notes["attack"] = attacks::attack_name(id);
  m.notes["samples"] = std::to_string(ds.size());
  m.notes["max_abs_perturbation"] = kv::format_real(exact_dist);
  s.finish(m, dir / "manifest.json");
  *s.out << attacks::attack_name(id) << " on " << joined_ids << ": " << ds.size()
         << " examples, max |delta| " << kv::format_real(exact_dist) << " <= epsilon "
         << kv::format_real(acfg.epsilon) << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> targets;
  std::string attack_dir, adversarial, benign, labels, out, source_id;
  bool exact = false;
  bool defend = false;
};

int cmd_eval(Session& s, EvalArgs a) {
  const kv::Map cfg = s.config();
  nlohmann::json attack_manifest;
  if (!a.attack_dir.empty()) {
    const fs::path dir = a.attack_dir;
    if (a.adversarial.empty()) a.adversarial = (dir / (a.exact ? "adv.f64" : "adv-images.idx")).string();
    if (a.benign.empty()) a.benign = (dir / (a.exact ? "benign.f64" : "benign-images.idx")).string();
    if (a.labels.empty()) a.labels = (dir / "labels.idx").string();
    if (fs::exists(dir / "manifest.json")) {
      std::ifstream is(dir / "manifest.json");
      attack_manifest = nlohmann::json::parse(is);
    }
  }
  if (a.adversarial.empty() || a.benign.empty() || a.labels.empty())
    throw UsageError("eval needs --attack-dir or all of --adversarial, --benign, --labels");

  std::vector<Artifact> inputs;
  const Tensor adv = read_images(a.adversarial);
  const Tensor benign = read_images(a.benign);
  const auto labels = data::read_idx_labels(a.labels);
  inputs.push_back(describe_file("adversarial", a.adversarial));
  inputs.push_back(describe_file("benign", a.benign));
  inputs.push_back(describe_file("labels", a.labels));

  std::vector<eval::NamedClassifier> targets;
  std::size_t classes = 0;
  std::vector<attacks::ModelPtr> plain;
  for (const auto& p : a.targets) {
    auto net = load_model_checked(p);
    classes = std::max(classes, net.class_count());
    auto model = attacks::make_model(std::move(net));
    plain.push_back(model);
    targets.push_back({stem_of(p), model});
    inputs.push_back(describe_file("target", p));
  }
  const data::Dataset ds(benign, labels, classes);
  for (const auto& p : a.targets) check_model_fits(load_model_checked(p), ds, p);
  if (a.defend) {
    const auto dcfg = detail::defense_config(cfg);
    for (std::size_t i = 0; i < plain.size(); ++i)
      targets.push_back({stem_of(a.targets[i]) + "+rp",
                         std::make_shared<defense::DefendedModel>(plain[i], dcfg)});
  }

  std::string attack = cfg.at("attack.id");
  std::string source = a.source_id.empty() ? stem_of(a.adversarial) : a.source_id;
  kv::Map snapshot = detail::resolved_snapshot(cfg);
  std::uint64_t seed = kv::parse_uint(cfg.at("attack.seed"), "attack.seed");
  if (!attack_manifest.is_null()) {
    const auto& notes = attack_manifest.at("notes");
    attack = notes.at("attack").get<std::string>();
    if (a.source_id.empty()) source = notes.at("source").get<std::string>();
    snapshot = attack_manifest.at("config").get<kv::Map>();
    seed = kv::parse_uint(snapshot.at("attack.seed"), "attack.seed");
  }
  if (a.defend)
    for (const auto& [k, v] : detail::defense_config(cfg).to_kv()) snapshot[k] = v;

  const auto report = eval::score_adversarial(source, attack, targets, ds, adv, snapshot, seed);
  const fs::path json_path = a.out + ".json", csv_path = a.out + ".csv";
  Session::write_text(json_path, report.to_json());
  Session::write_text(csv_path, report.to_csv());

  RunManifest m = s.manifest("eval", cfg);
  m.inputs = inputs;
  m.outputs.push_back(describe_file("report_json", json_path));
  m.outputs.push_back(describe_file("report_csv", csv_path));
  m.notes["evaluated"] = std::to_string(report.evaluated);
  s.finish(m, a.out + ".manifest.json");
  *s.out << report.to_csv();
  return kExitOk;
}

struct ProbeArgs {
  std::string model, out, manifest;
};

int cmd_probe(Session& s, const ProbeArgs& a) {
  const kv::Map cfg = s.config();
  std::vector<Artifact> inputs;
  const auto ds = detail::load_dataset(cfg, inputs);
  auto net = load_model_checked(a.model);
  check_model_fits(net, ds, a.model);
  inputs.push_back(describe_file("model", a.model));
  const auto model = attacks::make_model(std::move(net));
  const auto curve = [&] {
    try {
      return eval::scale_probe(*model, ds, kv::parse_real(cfg.at("probe.s_min"), "probe.s_min"),
                               kv::parse_real(cfg.at("probe.s_max"), "probe.s_max"),
                               kv::parse_real(cfg.at("probe.step"), "probe.step"), stem_of(a.model));
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }();
  Session::write_text(a.out, curve.to_csv());
  RunManifest m = s.manifest("probe", cfg);
  m.inputs = inputs;
  m.outputs.push_back(describe_file("curve", a.out));
  m.notes["points"] = std::to_string(curve.scales.size());
  m.notes["samples"] = std::to_string(curve.samples);
  s.finish(m, manifest_path(a.manifest, a.out));
  *s.out << "wrote " << curve.scales.size() << " points to " << a.out << "\n";
  return kExitOk;
}

struct SweepArgs {
  std::string source, out, manifest;
  std::vector<std::string> targets;
};

int cmd_sweep(Session& s, const SweepArgs& a) {
  const kv::Map cfg = s.config();
  const auto acfg = detail::attack_config(cfg);
  std::vector<attacks::AttackId> ids;
  for (const auto& name : detail::split_list(cfg.at("sweep.attacks"))) {
    try {
      ids.push_back(attacks::parse_attack(name));
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<int> steps;
  for (const auto& t : detail::split_list(cfg.at("sweep.steps"))) {
    const auto v = kv::parse_int(t, "sweep.steps");
    if (v < 1) throw UsageError("sweep.steps entries must be positive");
    steps.push_back(static_cast<int>(v));
  }
  if (ids.empty() || steps.empty()) throw UsageError("sweep.attacks and sweep.steps must be nonempty");

  std::vector<Artifact> inputs;
  const auto ds = detail::load_dataset(cfg, inputs);
  auto src_net = load_model_checked(a.source);
  check_model_fits(src_net, ds, a.source);
  inputs.push_back(describe_file("source", a.source));
  const eval::NamedModel source{stem_of(a.source), attacks::make_model(std::move(src_net))};
  std::vector<eval::NamedClassifier> targets;
  for (const auto& p : a.targets) {
    auto net = load_model_checked(p);
    check_model_fits(net, ds, p);
    inputs.push_back(describe_file("target", p));
    targets.push_back({stem_of(p), attacks::make_model(std::move(net))});
  }
  const auto rows = eval::iteration_sweep(source, targets, ids, steps, acfg, ds, acfg.seed, s.threads);
  Session::write_text(a.out, eval::sweep_to_csv(rows));
  RunManifest m = s.manifest("sweep", cfg);
  m.inputs = inputs;
  m.outputs.push_back(describe_file("sweep", a.out));
  m.notes["step_size"] = kv::format_real(acfg.alpha());
  s.finish(m, manifest_path(a.manifest, a.out));
  *s.out << eval::sweep_to_csv(rows);
  return kExitOk;
}

struct GridArgs {
  std::string benign, adversarial, out, manifest;
};

int cmd_dump_grid(Session& s, const GridArgs& a) {
  const kv::Map cfg = s.config();
  const Tensor benign = read_images(a.benign);
  const Tensor adv = read_images(a.adversarial);
  if (benign.shape() != adv.shape()) throw UsageError("benign and adversarial shapes differ");
  const auto n = kv::parse_uint(cfg.at("grid.count"), "grid.count");
  const auto seed = kv::parse_uint(cfg.at("grid.seed"), "grid.seed");
  if (n == 0 || n > benign.dim(0))
    throw UsageError("grid.count must lie in [1, " + std::to_string(benign.dim(0)) + "]");
  const auto idx = pick_indices(benign.dim(0), n, seed);
  write_pgm(a.out, image_grid(benign, adv, idx));

  RunManifest m = s.manifest("dump-grid", cfg);
  m.inputs = {describe_file("benign", a.benign), describe_file("adversarial", a.adversarial)};
  m.outputs.push_back(describe_file("grid", a.out));
  std::string list;
  for (std::size_t i = 0; i < idx.size(); ++i) list += (i ? "," : "") + std::to_string(idx[i]);
  m.notes["indices"] = list;
  s.finish(m, manifest_path(a.manifest, a.out));
  *s.out << "wrote " << n << " benign + " << n << " adversarial tiles to " << a.out << "\n";
  return kExitOk;
}

struct VerifyArgs {
  std::string benign, adversarial;
};

int cmd_verify(Session& s, const VerifyArgs& a) {
  const kv::Map cfg = s.config();
  const double eps = detail::attack_config(cfg).epsilon;
  const Tensor benign = read_images(a.benign);
  const Tensor adv = read_images(a.adversarial);
  const double d = check_budget(benign, adv, eps, a.adversarial);
  *s.out << "ok: " << adv.dim(0) << " images, max |x_adv - x| " << kv::format_real(d)
         << " <= epsilon " << kv::format_real(eps) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial transferability benchmark", "tbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  Session s;
  s.out = &out;
  s.argv = args;

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write TBNET1 weights");
  Bindings& b_train = add_common(train, s);
  train->add_option("--out", ta.out, "Weight file")->required();
  train->add_option("--manifest", ta.manifest, "Manifest path (default <out>.manifest.json)");
  train->add_flag("--adversarial", ta.adversarial, "Train on inner-PGD examples");

  AttackArgs aa;
  auto* attack = app.add_subcommand("attack", "Craft adversarial examples");
  Bindings& b_attack = add_common(attack, s);
  attack->add_option("--model", aa.models, "Source weights; repeat for an equal-weight ensemble")->required();
  attack->add_option("--out", aa.out_dir, "Output directory")->required();

  EvalArgs ea;
  auto* evalc = app.add_subcommand("eval", "Score adversarial images against target models");
  Bindings& b_evalc = add_common(evalc, s);
  evalc->add_option("--target", ea.targets, "Target weights; repeatable")->required();
  evalc->add_option("--attack-dir", ea.attack_dir, "Directory written by `attack`");
  evalc->add_option("--adversarial", ea.adversarial, "Adversarial images (IDX or .f64)");
  evalc->add_option("--benign", ea.benign, "Benign images (IDX or .f64)");
  evalc->add_option("--labels", ea.labels, "Labels (IDX)");
  evalc->add_option("--source-id", ea.source_id, "Row label for the report");
  evalc->add_option("--out", ea.out, "Report prefix; writes <out>.json and <out>.csv")->required();
  evalc->add_flag("--exact", ea.exact, "Use the 64-bit sidecars from --attack-dir");
  evalc->add_flag("--defend", ea.defend, "Add resize-pad defended copies of every target");

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe", "Mean loss against input scale");
  Bindings& b_probe = add_common(probe, s);
  probe->add_option("--model", pa.model, "Weights")->required();
  probe->add_option("--out", pa.out, "CSV path")->required();
  probe->add_option("--manifest", pa.manifest, "Manifest path (default <out>.manifest.json)");

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Success rate against iteration count");
  Bindings& b_sweep = add_common(sweep, s);
  sweep->add_option("--source", sa.source, "Source weights")->required();
  sweep->add_option("--target", sa.targets, "Target weights; repeatable")->required();
  sweep->add_option("--out", sa.out, "CSV path")->required();
  sweep->add_option("--manifest", sa.manifest, "Manifest path (default <out>.manifest.json)");

  GridArgs ga;
  auto* grid = app.add_subcommand("dump-grid", "Benign/adversarial tile grid as plain PGM");
  Bindings& b_grid = add_common(grid, s);
  grid->add_option("--benign", ga.benign, "Benign images")->required();
  grid->add_option("--adversarial", ga.adversarial, "Adversarial images")->required();
  grid->add_option("--out", ga.out, "PGM path")->required();
  grid->add_option("--manifest", ga.manifest, "Manifest path (default <out>.manifest.json)");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Check adversarial images against the epsilon-ball");
  Bindings& b_verify = add_common(verify, s);
  verify->add_option("--benign", va.benign, "Benign images")->required();
  verify->add_option("--adversarial", va.adversarial, "Adversarial images")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, r;
    const int code = app.exit(e, o, r);
    out << o.str();
    err << r.str();
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::pair<CLI::App*, Bindings*> subs[] = {
      {train, &b_train}, {attack, &b_attack}, {evalc, &b_evalc}, {probe, &b_probe},
      {sweep, &b_sweep}, {grid, &b_grid},     {verify, &b_verify}};
  for (const auto& [app_ptr, b] : subs)
    if (*app_ptr) {
      s.active = b;
      s.threads = b->threads;
    }

  try {
    if (*train) return cmd_train(s, ta);
    if (*attack) return cmd_attack(s, aa);
    if (*evalc) return cmd_eval(s, ea);
    if (*probe) return cmd_probe(s, pa);
    if (*sweep) return cmd_sweep(s, sa);
    if (*grid) return cmd_dump_grid(s, ga);
    if (*verify) return cmd_verify(s, va);
  } catch (const BudgetViolation& e) {
    err << "epsilon-ball violation: " << e.what() << "\n";
    return kExitBudget;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const kv::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace tb::cli
