#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "reloc/config.hpp"
#include "reloc/io.hpp"
#include "reloc/pipeline.hpp"

namespace {

using reloc::KeyValues;
using reloc::RunConfig;

constexpr const char* kUsage = R"(usage: reloc <command> [flags]

commands:
  synth-gen    generate a synthetic dataset
  train        train a relocalization network on a dataset
  build-map    build and serialize one scene's map representation
  localize     localize query frames and write a result CSV
  eval         aggregate metrics, sweeps, and the scale ablation
  grad-check   run the finite-difference gradient suite

common flags:
  --config <file>      key = value configuration file
  --set <key=value>    override one config key (repeatable)
  --preset <name>      desk | paper
  --seed <n>           global seed (config key `seed`)
  --threads <n>        worker threads; 1 reproduces any thread count
  --out <dir>          output directory (default: config `output_dir`,
                       then $RELOC_OUTPUT_ROOT/<command>)

train:        --dataset <file> [--resume <checkpoint>] [--grad-check]
build-map:    --checkpoint <file> --dataset <file> --scene <id>
              [--strategy uniform|random|retrieval] [--topk <k>] [--n <entries>]
              [--map-seed <n>] [--query <frame id>]
localize:     --checkpoint <file> --dataset <file> [--scene <id>]
              [--map <file>] [--strategy <s>] [--topk <k>] [--n <entries>]
              [--map-seed <n>]
eval:         --checkpoint <file> --dataset <file> [--sweeps]
              [--sweep-frames <list>] [--sweep-features <list>]
              [--raw-checkpoint <file> --scaled-dataset <file>]
              [--results <csv>]

exit codes: 0 success, 1 usage error, 2 internal error
)";

struct Cli {
  std::string command;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;
  std::set<std::string> switches;
};

const std::set<std::string> kSwitches = {"--sweeps", "--grad-check", "--help"};

Cli parse_cli(int argc, char** argv) {
  Cli cli;
  if (argc < 2) throw std::invalid_argument("missing command");
  cli.command = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string flag = argv[i];
    if (flag.rfind("--", 0) != 0)
      throw std::invalid_argument("unexpected argument: " + flag);
    if (kSwitches.count(flag)) {
      cli.switches.insert(flag);
      continue;
    }
    if (i + 1 >= argc) throw std::invalid_argument(flag + " needs a value");
    const std::string value = argv[++i];
    if (flag == "--set")
      cli.sets.push_back(value);
    else if (cli.flags.count(flag))
      throw std::invalid_argument("duplicate flag: " + flag);
    else
      cli.flags[flag] = value;
  }
  return cli;
}

std::string take(Cli& cli, const std::string& flag, const std::string& def = "") {
  auto it = cli.flags.find(flag);
  if (it == cli.flags.end()) return def;
  std::string value = it->second;
  cli.flags.erase(it);
  return value;
}

std::string require(Cli& cli, const std::string& flag) {
  std::string value = take(cli, flag);
  if (value.empty()) throw std::invalid_argument(cli.command + " needs " + flag);
  return value;
}

int to_int(const std::string& flag, const std::string& value) {
  try {
    size_t used = 0;
    const int parsed = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad integer for " + flag + ": " + value);
  }
}

uint64_t to_u64(const std::string& flag, const std::string& value) {
  try {
    size_t used = 0;
    const uint64_t parsed = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad integer for " + flag + ": " + value);
  }
}

// File config first, then --set pairs, then the dedicated flags; later
// sources win so the command line always overrides the file.
RunConfig load_config(Cli& cli) {
  KeyValues kv;
  const std::string config_path = take(cli, "--config");
  if (!config_path.empty()) kv = KeyValues::parse(reloc::read_file(config_path));
  for (const std::string& pair : cli.sets) {
    const size_t eq = pair.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("--set expects key=value, got: " + pair);
    std::string key = pair.substr(0, eq);
    std::string value = pair.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!value.empty() && value.front() == ' ') value.erase(value.begin());
    kv.set(key, value);
  }
  const std::string seed = take(cli, "--seed");
  if (!seed.empty()) kv.set("seed", seed);
  const std::string threads = take(cli, "--threads");
  if (!threads.empty()) kv.set("threads", threads);
  const std::string out = take(cli, "--out");
  if (!out.empty()) kv.set("output_dir", out);
  const std::string frames = take(cli, "--sweep-frames");
  if (!frames.empty()) kv.set("eval.sweep_frames", frames);
  const std::string features = take(cli, "--sweep-features");
  if (!features.empty()) kv.set("eval.sweep_features", features);

  RunConfig base;
  const std::string preset = take(cli, "--preset");
  if (!preset.empty()) base.apply_preset(preset);
  return RunConfig::from_keyvalues(kv, base);
}

std::string output_dir(const RunConfig& cfg, const Cli& cli) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return reloc::default_output_root() + "/" + cli.command;
}

void finish_flags(const Cli& cli) {
  if (!cli.flags.empty())
    throw std::invalid_argument("unknown flag: " + cli.flags.begin()->first);
}

int cmd_synth_gen(Cli& cli) {
  RunConfig cfg = load_config(cli);
  cfg.output_dir = output_dir(cfg, cli);
  finish_flags(cli);
  reloc::SynthGenResult r = reloc::run_synth_gen(cfg, cfg.output_dir);
  std::cout << "wrote " << r.dataset_path << "\n"
            << "scenes " << r.scene_count << " (train " << r.train_scenes
            << ", test " << r.test_scenes << "), frames per scene "
            << r.mapping_frames << " mapping + " << r.query_frames << " query\n";
  return 0;
}

int cmd_train(Cli& cli) {
  if (cli.switches.count("--grad-check")) {
    finish_flags(cli);
    return reloc::run_grad_check(std::cout) ? 0 : 2;
  }
  RunConfig cfg = load_config(cli);
  const std::string dataset = require(cli, "--dataset");
  const std::string resume = take(cli, "--resume");
  cfg.output_dir = output_dir(cfg, cli);
  finish_flags(cli);
  reloc::TrainRunResult r =
      reloc::run_train(cfg, dataset, cfg.output_dir, resume, &std::cout);
  std::cout << "trained " << r.iterations << " iterations, final loss "
            << r.final_loss << "\nwrote " << r.checkpoint_path << "\n";
  return 0;
}

int cmd_build_map(Cli& cli) {
  RunConfig cfg = load_config(cli);
  const std::string checkpoint = require(cli, "--checkpoint");
  const std::string dataset = require(cli, "--dataset");
  reloc::BuildMapArgs args;
  args.scene_id = to_int("--scene", require(cli, "--scene"));
  args.strategy = reloc::selection_strategy_from_string(
      take(cli, "--strategy", to_string(args.strategy)));
  args.topk = to_int("--topk", take(cli, "--topk", std::to_string(args.topk)));
  args.entries = to_int("--n", take(cli, "--n", std::to_string(args.entries)));
  args.seed = to_u64("--map-seed", take(cli, "--map-seed", "0"));
  const std::string query = take(cli, "--query");
  if (!query.empty()) args.query_frame_id = to_int("--query", query);
  cfg.output_dir = output_dir(cfg, cli);
  finish_flags(cli);
  const std::string path =
      reloc::run_build_map(cfg, checkpoint, dataset, args, cfg.output_dir);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_localize(Cli& cli) {
  RunConfig cfg = load_config(cli);
  const std::string checkpoint = require(cli, "--checkpoint");
  const std::string dataset = require(cli, "--dataset");
  reloc::LocalizeArgs args;
  const std::string scene = take(cli, "--scene");
  if (!scene.empty()) args.scene_id = to_int("--scene", scene);
  args.map_path = take(cli, "--map");
  args.strategy = reloc::selection_strategy_from_string(
      take(cli, "--strategy", to_string(args.strategy)));
  args.topk = to_int("--topk", take(cli, "--topk", std::to_string(args.topk)));
  args.entries = to_int("--n", take(cli, "--n", std::to_string(args.entries)));
  args.map_seed = to_u64("--map-seed", take(cli, "--map-seed", "0"));
  cfg.output_dir = output_dir(cfg, cli);
  finish_flags(cli);
  reloc::LocalizeRunResult r =
      reloc::run_localize(cfg, checkpoint, dataset, args, cfg.output_dir);
  int failures = 0;
  for (const reloc::LocalizeRecord& rec : r.records)
    if (!rec.ok) ++failures;
  std::cout << "wrote " << r.csv_path << " (" << r.records.size() << " queries, "
            << failures << " failures)\n";
  return 0;
}

int cmd_eval(Cli& cli) {
  RunConfig cfg = load_config(cli);
  reloc::EvalRunArgs args;
  args.results_path = take(cli, "--results");
  std::string checkpoint, dataset;
  if (args.results_path.empty()) {
    checkpoint = require(cli, "--checkpoint");
    dataset = require(cli, "--dataset");
  }
  args.sweeps = cli.switches.count("--sweeps") > 0;
  args.raw_checkpoint_path = take(cli, "--raw-checkpoint");
  args.scaled_dataset_path = take(cli, "--scaled-dataset");
  cfg.output_dir = output_dir(cfg, cli);
  finish_flags(cli);
  reloc::EvalRunResult r =
      reloc::run_eval(cfg, checkpoint, dataset, args, cfg.output_dir, &std::cout);
  std::cout << "queries " << r.report.results.size() << ", failures "
            << r.report.failure_count << ", median_t " << r.report.median_t
            << ", median_r " << r.report.median_r << " deg\n";
  for (size_t i = 0; i < r.report.thresholds.size(); ++i)
    std::cout << "rate (" << r.report.thresholds[i].translation << ", "
              << r.report.thresholds[i].rotation_deg << " deg): "
              << r.report.rates[i] << "\n";
  for (const std::string& f : r.files) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  try {
    cli = parse_cli(argc, argv);
    if (cli.command == "--help" || cli.command == "help" ||
        cli.switches.count("--help")) {
      std::cout << kUsage;
      return 0;
    }
    if (cli.command == "synth-gen") return cmd_synth_gen(cli);
    if (cli.command == "train") return cmd_train(cli);
    if (cli.command == "build-map") return cmd_build_map(cli);
    if (cli.command == "localize") return cmd_localize(cli);
    if (cli.command == "eval") return cmd_eval(cli);
    if (cli.command == "grad-check") {
      finish_flags(cli);
      return reloc::run_grad_check(std::cout) ? 0 : 2;
    }
    throw std::invalid_argument("unknown command: " + cli.command);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n\n" << kUsage;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
