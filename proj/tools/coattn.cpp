// coattn: group-equivariant CNNs with co-attentive group axes.
//   verify    equivariance / commutation / synchrony check suite
//   train     fit an architecture on an amat/idx corpus or synthetic digits
//   eval      error rate of a saved parameter set
//   gen-data  write the synthetic rotated-digit corpus as .amat files

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "coattn/data.hpp"
#include "coattn/equicheck.hpp"
#include "coattn/serialize.hpp"
#include "coattn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string arch = "p4cnn";
  std::string group = "both";
  std::string data;
  std::string synthetic;
  std::string out = "out";
  std::string config;
  std::string params;
  std::uint64_t seed = 0;
  int epochs = 10;
  double lr = 0.01;
  int batch = 50;
};

// defaults < json config < explicit flags
void apply_config(const CLI::App& cmd, Options& o) {
  if (o.config.empty()) return;
  std::ifstream in(o.config);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + o.config);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", std::string("bad JSON: ") + e.what());
  }
  auto absent = [&cmd](const std::string& flag) {
    const CLI::Option* opt = cmd.get_option_no_throw("--" + flag);
    return opt != nullptr && opt->count() == 0;
  };
  try {
    if (j.contains("arch") && absent("arch")) o.arch = j["arch"].get<std::string>();
    if (j.contains("group") && absent("group")) o.group = j["group"].get<std::string>();
    if (j.contains("data") && absent("data")) o.data = j["data"].get<std::string>();
    if (j.contains("synthetic") && absent("synthetic"))
      o.synthetic = j["synthetic"].get<std::string>();
    if (j.contains("out") && absent("out")) o.out = j["out"].get<std::string>();
    if (j.contains("seed") && absent("seed")) o.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("epochs") && absent("epochs")) o.epochs = j["epochs"].get<int>();
    if (j.contains("lr") && absent("lr")) o.lr = j["lr"].get<double>();
    if (j.contains("batch") && absent("batch")) o.batch = j["batch"].get<int>();
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", std::string("bad value: ") + e.what());
  }
}

coattn::SplitBundles load_splits(const Options& o) {
  if (!o.synthetic.empty() && !o.data.empty())
    throw CLI::ValidationError("--data", "give either --data or --synthetic, not both");
  if (!o.synthetic.empty()) return coattn::make_synthetic_corpus(o.synthetic, o.seed);
  if (o.data.empty())
    throw CLI::ValidationError("--data", "need --data DIR or --synthetic MODE");
  coattn::SplitBundles s;
  const fs::path dir(o.data);
  if (fs::exists(dir / "train.amat")) {
    s.train = coattn::load_amat((dir / "train.amat").string());
    s.valid = coattn::load_amat((dir / "valid.amat").string());
    s.test = coattn::load_amat((dir / "test.amat").string());
  } else if (fs::exists(dir / "train-images-idx3-ubyte")) {
    s.train = coattn::load_idx((dir / "train-images-idx3-ubyte").string(),
                               (dir / "train-labels-idx1-ubyte").string());
    s.valid = coattn::load_idx((dir / "valid-images-idx3-ubyte").string(),
                               (dir / "valid-labels-idx1-ubyte").string());
    s.test = coattn::load_idx((dir / "test-images-idx3-ubyte").string(),
                              (dir / "test-labels-idx1-ubyte").string());
  } else {
    throw std::runtime_error("no train.amat or train-images-idx3-ubyte under " + o.data);
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json resolved_json(const Options& o, const std::string& cmd) {
  json j;
  j["command"] = cmd;
  j["arch"] = o.arch;
  j["seed"] = o.seed;
  j["epochs"] = o.epochs;
  j["lr"] = o.lr;
  j["batch"] = o.batch;
  j["momentum"] = 0.9;
  j["optimizer"] = "sgd-momentum";
  j["data"] = o.data.empty() ? (o.synthetic.empty() ? "" : "synthetic:" + o.synthetic) : o.data;
  j["out"] = o.out;
  return j;
}

int cmd_verify(const Options& o) {
  using namespace coattn;
  fs::create_directories(o.out);
  std::vector<CheckReport> reports;
  std::vector<bool> expect_pass;
  Rng seeder(o.seed);

  auto add = [&](CheckReport r, bool expected) {
    reports.push_back(std::move(r));
    expect_pass.push_back(expected);
  };

  const bool do_p4 = o.group == "p4" || o.group == "both";
  const bool do_p4m = o.group == "p4m" || o.group == "both";

  auto layer_suite = [&](const GroupSpec& spec, const std::string& arch) {
    const std::string tag = spec.name();
    add(check_layer_equivariance(
            "lift-conv-" + tag,
            [&spec](Rng& rng) {
              GConvParams p;
              p.filters = Tensor({3, 2, 1, 3, 3});
              for (auto& x : p.filters.v) x = rng.normal();
              p.bias = Tensor({3});
              for (auto& x : p.bias.v) x = rng.normal();
              return [p, &spec](const FeatureMap& in) { return lift_conv(in, p, spec, 1); };
            },
            spec, false, 2, 9, 25, 1e-10, seeder.next_u64()),
        true);
    add(check_layer_equivariance(
            "group-conv-" + tag,
            [&spec](Rng& rng) {
              GConvParams p;
              p.filters = Tensor({2, 2, spec.size, 3, 3});
              for (auto& x : p.filters.v) x = rng.normal();
              p.bias = Tensor({2});
              for (auto& x : p.bias.v) x = rng.normal();
              return [p](const FeatureMap& in) { return group_conv(in, p, 1); };
            },
            spec, true, 2, 9, 25, 1e-10, seeder.next_u64()),
        true);
    add(check_layer_equivariance(
            "co-attention-" + tag,
            [&spec](Rng& rng) {
              std::vector<AttentionParams> att;
              for (int l = 0; l < 2; ++l) {
                if (spec.kind == GroupKind::RotMirror) {
                  Tensor c1({spec.r_max}), c2({spec.r_max});
                  for (auto& x : c1.v) x = rng.normal();
                  for (auto& x : c2.v) x = rng.normal();
                  att.push_back(block_circulant_attention(std::move(c1), std::move(c2)));
                } else {
                  Tensor c({spec.size});
                  for (auto& x : c.v) x = rng.normal();
                  att.push_back(circulant_attention(std::move(c)));
                }
              }
              return [att](const FeatureMap& in) { return co_attentive_map(in, att); };
            },
            spec, true, 2, 9, 25, 1e-10, seeder.next_u64()),
        true);

    const Model net = build_model(arch, seeder.next_u64());
    add(check_network_equivariance(net, spec, 10, 1e-6, seeder.next_u64()), true);

    const DatasetBundle probe = make_synthetic_digits(1, seeder.next_u64());
    add(check_synchrony(net, probe.images), true);
  };

  if (do_p4) {
    const GroupSpec p4 = group_from_name("p4");
    add(check_attention_equivariance(AttentionKind::Circulant, p4, 2000, 1e-12,
                                     seeder.next_u64()),
        true);
    Rng crng(seeder.next_u64());
    Tensor c({4});
    for (auto& x : c.v) x = crng.normal();
    add(check_commutation(build_circulant(c), p4, 1e-12), true);
    add(check_attention_equivariance(AttentionKind::Full, p4, 100, 1e-3, seeder.next_u64()),
        false);  // negative control
    layer_suite(p4, "a-p4cnn");

    const Model z2 = build_model("z2cnn", seeder.next_u64());
    add(check_network_equivariance(z2, p4, 5, 1e-6, seeder.next_u64()), false);
  }
  if (do_p4m) {
    const GroupSpec p4m = group_from_name("p4m");
    add(check_attention_equivariance(AttentionKind::BlockCirculant, p4m, 2000, 1e-12,
                                     seeder.next_u64()),
        true);
    Rng crng(seeder.next_u64());
    Tensor c1({4}), c2({4});
    for (auto& x : c1.v) x = crng.normal();
    for (auto& x : c2.v) x = crng.normal();
    add(check_commutation(build_block_circulant(c1, c2), p4m, 1e-12), true);
    add(check_attention_equivariance(AttentionKind::Full, p4m, 100, 1e-3, seeder.next_u64()),
        false);
    layer_suite(p4m, "a-p4mcnn");
  }

  bool ok = true;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const bool good = reports[i].pass == expect_pass[i];
    ok = ok && good;
    if (!expect_pass[i])
      reports[i].note += (reports[i].note.empty() ? "" : "; ") +
                         std::string(reports[i].pass ? "UNEXPECTED pass" : "expected violation");
  }
  std::cout << report_table(reports);
  write_text(fs::path(o.out) / "verify_report.json", to_json(reports) + "\n");
  std::cout << (ok ? "verify: all checks behaved as expected\n"
                   : "verify: some checks misbehaved\n");
  return ok ? kExitOk : kExitFailure;
}

int cmd_train(const Options& o) {
  using namespace coattn;
  fs::create_directories(o.out);
  SplitBundles data = load_splits(o);
  Model m = build_model(o.arch, o.seed);

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.lr = o.lr;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  const auto history = train_loop(m, data.train, data.valid, cfg);

  const double test_error = evaluate(m, data.test);
  write_text(fs::path(o.out) / "history.csv", history_csv(history));
  save_params(m, o.out);
  json rc = resolved_json(o, "train");
  rc["param_count"] = param_count(m);
  rc["test_error"] = test_error;
  write_text(fs::path(o.out) / "resolved_config.json", rc.dump(2) + "\n");

  if (m.group.size > 1) {
    // post-training re-check: the stack must still be exactly equivariant
    const CheckReport rep = check_network_equivariance(m, m.group, 5, 1e-6, o.seed + 1);
    write_text(fs::path(o.out) / "recheck.json", to_json(rep) + "\n");
    std::cout << report_table({rep});
    if (!rep.pass) {
      std::cerr << "train: post-training equivariance re-check failed\n";
      return kExitFailure;
    }
  }
  std::printf("train: %s test_error %.4f\n", o.arch.c_str(), test_error);
  return kExitOk;
}

int cmd_eval(const Options& o) {
  using namespace coattn;
  if (o.params.empty()) throw CLI::ValidationError("--params", "required for eval");
  const Model m = load_model(o.params);
  SplitBundles data = load_splits(o);
  const double err = evaluate(m, data.test);
  std::printf("%.4f\n", err);
  if (!o.out.empty() && o.out != "out") {
    fs::create_directories(o.out);
    json j;
    j["arch"] = m.arch;
    j["test_error"] = err;
    write_text(fs::path(o.out) / "metrics.json", j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_gen_data(const Options& o) {
  using namespace coattn;
  if (o.synthetic.empty())
    throw CLI::ValidationError("--synthetic", "required for gen-data (quarter|uniform)");
  fs::create_directories(o.out);
  SplitBundles s = make_synthetic_corpus(o.synthetic, o.seed);
  save_amat(s.train, (fs::path(o.out) / "train.amat").string());
  save_amat(s.valid, (fs::path(o.out) / "valid.amat").string());
  save_amat(s.test, (fs::path(o.out) / "test.amat").string());
  std::printf("gen-data: wrote %s/{train,valid,test}.amat (mode %s, seed %llu)\n", o.out.c_str(),
              o.synthetic.c_str(), static_cast<unsigned long long>(o.seed));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"group-equivariant CNNs with co-attentive group axes"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "rng seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--config", o.config, "JSON config (defaults < config < flags)");
  };
  const std::vector<std::string> archs = {"z2cnn", "p4cnn", "a-p4cnn", "p4mcnn", "a-p4mcnn"};

  CLI::App* verify = app.add_subcommand("verify", "run the equivariance check suite");
  verify->add_option("--group", o.group, "p4|p4m|both")
      ->check(CLI::IsMember({"p4", "p4m", "both"}));
  add_common(verify);

  CLI::App* train = app.add_subcommand("train", "train an architecture");
  train->add_option("--arch", o.arch, "architecture")->check(CLI::IsMember(archs));
  train->add_option("--data", o.data, "dataset directory (amat or idx triples)");
  train->add_option("--synthetic", o.synthetic, "synthetic corpus mode")
      ->check(CLI::IsMember({"quarter", "uniform"}));
  train->add_option("--epochs", o.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", o.lr, "learning rate");
  train->add_option("--batch", o.batch, "minibatch size")->check(CLI::PositiveNumber);
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate saved parameters");
  eval->add_option("--params", o.params, "directory with params.bin/params.json");
  eval->add_option("--data", o.data, "dataset directory");
  eval->add_option("--synthetic", o.synthetic, "synthetic corpus mode")
      ->check(CLI::IsMember({"quarter", "uniform"}));
  add_common(eval);

  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  gen->add_option("--synthetic", o.synthetic, "quarter|uniform")
      ->check(CLI::IsMember({"quarter", "uniform"}));
  add_common(gen);

  try {
    app.parse(argc, argv);
    CLI::App* sub = app.get_subcommands().front();
    apply_config(*sub, o);
    if (sub == verify) return cmd_verify(o);
    if (sub == train) return cmd_train(o);
    if (sub == eval) return cmd_eval(o);
    return cmd_gen_data(o);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
