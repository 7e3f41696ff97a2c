// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

// muse: generate synthetic pairs, train, evaluate, benchmark and run the
// ablation grids. Every contract error exits nonzero.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "muse/bench.hpp"
#include "muse/error.hpp"
#include "muse/reproduce.hpp"
#include "muse/trainer.hpp"

namespace fs = std::filesystem;
using namespace muse;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kContract = 2, kDiverged = 3 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "flat key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--set", c.overrides, "extra key=value overrides, applied after --config");
}

Config resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : Config::load(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SyntheticPairSet data_for(const Config& cfg, const std::string& data_dir) {
  if (data_dir.empty()) return gen_data(cfg);
  SyntheticPairSet data = load_dataset(data_dir);
  if (data.size() == 0 || data.videos.front().shape() != Shape{cfg.frames, cfg.grid, cfg.grid, cfg.channels}) {
    throw ConfigError("dataset in " + data_dir + " does not match the config's frame/grid/channel shape");
  }
  return data;
}

int cmd_gen_data(const Common& c) {
  const Config cfg = resolve(c);
  fs::create_directories(c.out);
  const SyntheticPairSet data = gen_data(cfg);
  save_dataset(c.out, data);
  cfg.save(fs::path(c.out) / "config.txt");
  std::cout << "wrote " << data.size() << " pairs (" << data.train.size() << " train, " << data.test.size()
            << " test) to " << c.out << '\n';
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_dir, bool quiet) {
  const Config cfg = resolve(c);
  fs::create_directories(c.out);
  const SyntheticPairSet data = data_for(cfg, data_dir);
  TrainOptions options;
  options.dump_dir = fs::path(c.out) / "divergence";
  if (!quiet) {
    options.on_step = [&](std::size_t step, double loss) {
      if (step % 50 == 0 || step + 1 == cfg.steps) {
        std::cout << "step " << std::setw(5) << step << "  loss " << std::fixed << std::setprecision(6) << loss
                  << '\n';
      }
    };
  }
  const TrainResult result = train(cfg, data, options);
  result.model.save(fs::path(c.out) / "checkpoint.bin");
  cfg.save(fs::path(c.out) / "config.txt");
  std::ofstream curve(fs::path(c.out) / "loss_curve.csv");
  curve << "step,loss,temperature\n" << std::setprecision(17);
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    curve << i << ',' << result.loss_curve[i] << ',' << result.temperature_curve[i] << '\n';
  }
  const RetrievalReport report = evaluate(result.model, data);
  write_json(fs::path(c.out) / "report.json", report.to_json());
  std::cout << "test R@1 " << report.recall_at.at(1) << "  R@5 " << report.recall_at.at(5) << "  MdR "
            << report.median_rank << '\n';
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& data_dir) {
  const Config cfg = resolve(c);
  fs::create_directories(c.out);
  const SyntheticPairSet data = data_for(cfg, data_dir);
  const MuseModel model = checkpoint.empty() ? MuseModel::create(cfg) : MuseModel::load(checkpoint, cfg);
  const RetrievalReport report = evaluate(model, data);
  write_json(fs::path(c.out) / "report.json", report.to_json());
  std::cout << report.to_json().dump() << '\n';
  return kOk;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("expected a comma-separated list of sizes, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty size list");
  return out;
}

int cmd_bench(const Common& c, const std::string& frames, std::size_t channels, std::size_t d_state) {
  bench::SweepOptions options;
  options.frames = parse_sizes(frames);
  options.channels = channels;
  options.d_state = d_state;
  options.seed = c.seed.value_or(0);
  fs::create_directories(c.out);
  const bench::SweepResult result = bench::sweep(options);
  std::ofstream csv(fs::path(c.out) / "bench.csv");
  bench::write_csv(csv, result);
  const nlohmann::json summary = bench::summary_json(result);
  write_json(fs::path(c.out) / "bench_summary.json", summary);
  bench::write_csv(std::cout, result);
  for (const auto& n : result.notices) std::cerr << "note: " << n << '\n';
  return kOk;
}

int cmd_reproduce(const Common& c, const std::string& axis, std::size_t seeds) {
  const Config cfg = resolve(c);
  if (seeds == 0) throw ConfigError("--seeds must be positive");
  ablation_grid(axis, cfg);  // reject an unknown axis before any work
  std::vector<std::uint64_t> seed_list;
  for (std::size_t i = 0; i < seeds; ++i) seed_list.push_back(cfg.seed + i);
  fs::create_directories(c.out);
  const auto rows = run_ablation(axis, cfg, seed_list, [](const AblationRow& r) {
    std::cout << r.axis << " " << r.label << " seed " << r.seed << ": R@1 " << r.report.recall_at.at(1)
              << "  loss " << r.first_loss << " -> " << r.final_loss << "  (" << std::fixed << std::setprecision(1)
              << r.seconds << " s)\n"
              << std::defaultfloat;
  });
  std::ofstream csv(fs::path(c.out) / ("ablation_" + axis + ".csv"));
  write_ablation_csv(csv, rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"muse: multi-scale Mamba text-video retrieval at desk scale"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts, bench_opts, repro_opts;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic planted-pattern pairs");
  add_common(gen, gen_opts);

  auto* tr = app.add_subcommand("train", "train on generated (or freshly generated) pairs");
  add_common(tr, train_opts);
  std::string train_data;
  bool quiet = false;
  tr->add_option("--data", train_data, "dataset directory from gen-data");
  tr->add_flag("--quiet", quiet, "suppress per-step logging");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(ev, eval_opts);
  std::string eval_data, checkpoint;
  ev->add_option("--data", eval_data, "dataset directory from gen-data");
  ev->add_option("--checkpoint", checkpoint, "checkpoint from train (omit for an untrained model)");

  auto* be = app.add_subcommand("bench", "instrumented cost sweep: mamba vs mambaout vs attention");
  add_common(be, bench_opts);
  std::string bench_frames = "4,8,12,16";
  std::size_t bench_channels = 64, bench_state = 16;
  be->add_option("--frames", bench_frames, "comma-separated frame counts");
  be->add_option("--channels", bench_channels, "model width C");
  be->add_option("--d-state", bench_state, "state size N");

  auto* re = app.add_subcommand("reproduce", "run one ablation grid");
  add_common(re, repro_opts);
  std::string axis;
  std::size_t seeds = 1;
  re->add_option("axis", axis, "block|scan|aggregation|scales|layers|residual")->required();
  re->add_option("--seeds", seeds, "number of consecutive seeds to average over");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(gen_opts);
    if (*tr) return cmd_train(train_opts, train_data, quiet);
    if (*ev) return cmd_eval(eval_opts, checkpoint, eval_data);
    if (*be) return cmd_bench(bench_opts, bench_frames, bench_channels, bench_state);
    if (*re) return cmd_reproduce(repro_opts, axis, seeds);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n' << e.diagnostic();
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kContract;
  } catch (const DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return kContract;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kContract;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << '\n';
    return kContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
