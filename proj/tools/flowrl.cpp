// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line driver: gen-data, sft, grpo, eval, scale, plot.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowrl/error.hpp"
#include "flowrl/eval.hpp"
#include "flowrl/experiment.hpp"
#include "flowrl/grpo.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

flowrl::ExperimentConfig load(const Common& c) {
  std::ifstream in(c.config);
  if (!in) flowrl::fail(flowrl::ErrorKind::IoError, "cannot open config " + c.config);
  flowrl::ExperimentConfig cfg = flowrl::load_config(c.config);
  if (c.seed) {
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = flowrl::with_seed(nlohmann::json::parse(buf.str()), *c.seed);
  }
  if (c.workers) {
    if (*c.workers < 1) flowrl::fail(flowrl::ErrorKind::ConfigError, "--workers must be positive");
    cfg.workers = cfg.grpo.workers = cfg.eval.workers = *c.workers;
  }
  return cfg;
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path)) flowrl::fail(flowrl::ErrorKind::IoError, std::string(what) + " not found: " + path);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) flowrl::fail(flowrl::ErrorKind::IoError, "cannot write " + path.string());
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) flowrl::fail(flowrl::ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

flowrl::Policy load_policy(const std::string& path, const flowrl::ExperimentConfig& cfg) {
  require_exists(path, "checkpoint");
  flowrl::Policy p = flowrl::load_checkpoint(path);
  if (!(p.config == cfg.policy_config())) {
    flowrl::fail(flowrl::ErrorKind::ConfigError, "checkpoint " + path + " does not match the model config");
  }
  return p;
}

std::vector<flowrl::Task> suite_tasks(const flowrl::Dataset& d, const std::string& suite,
                                      const flowrl::PolicyConfig& pc) {
  const bool maze = pc.task == flowrl::TaskKind::Maze;
  if (suite == "train") return maze ? flowrl::make_tasks(d.train, pc) : flowrl::make_tasks(d.nav_train, pc);
  if (suite == "heldout") return maze ? flowrl::make_tasks(d.heldout, pc) : flowrl::make_tasks(d.nav_heldout, pc);
  flowrl::fail(flowrl::ErrorKind::InvalidArgument, "unknown suite '" + suite + "'");
}

int cmd_gen_data(const Common& c) {
  const auto cfg = load(c);
  const flowrl::Dataset d = flowrl::generate_dataset(cfg.data, cfg.task);
  ordered_json extra;
  extra["config_name"] = cfg.name;
  extra["data_seed"] = cfg.data.seed;
  extra["task"] = cfg.task == flowrl::TaskKind::Maze ? "maze" : "nav";
  flowrl::write_dataset(d, extra, c.out);
  flowrl::write_run_json(c.out, "gen-data", cfg, ordered_json::object());
  std::cout << "wrote dataset to " << c.out << '\n';
  return 0;
}

int cmd_sft(const Common& c, const std::string& data) {
  const auto cfg = load(c);
  require_exists(data, "dataset");
  const flowrl::Dataset d = flowrl::read_dataset(data);
  const auto pc = cfg.policy_config();
  make_dir(c.out);
  auto log = open_out(fs::path(c.out) / "sft_log.jsonl");
  const auto result = flowrl::sft_train(flowrl::init_policy(pc, cfg.model.init_seed),
                                        flowrl::demo_batch(d, pc), cfg.sft, &log);
  flowrl::save_checkpoint(result.policy, fs::path(c.out) / "policy.ckpt");
  flowrl::write_run_json(c.out, "sft", cfg, {{"data", data}});
  std::cout << "final loss " << (result.losses.empty() ? 0.0 : result.losses.back()) << '\n';
  return 0;
}

int cmd_grpo(const Common& c, const std::string& data, const std::string& checkpoint) {
  const auto cfg = load(c);
  require_exists(data, "dataset");
  const flowrl::Policy init = load_policy(checkpoint, cfg);
  const flowrl::Dataset d = flowrl::read_dataset(data);
  const auto tasks = suite_tasks(d, "train", init.config);
  make_dir(c.out);
  auto log = open_out(fs::path(c.out) / "train_log.jsonl");
  auto timing = open_out(fs::path(c.out) / "timing.jsonl");
  flowrl::TrainOptions opts;
  opts.log = &log;
  opts.timing = &timing;
  opts.checkpoint = [&](int it, const flowrl::Policy& p) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%05d.ckpt", it);
    flowrl::save_checkpoint(p, fs::path(c.out) / name);
  };
  const auto result = flowrl::train(cfg.grpo, tasks, init, opts);
  flowrl::save_checkpoint(result.policy, fs::path(c.out) / "policy.ckpt");
  flowrl::write_run_json(c.out, "grpo", cfg, {{"data", data}, {"checkpoint", checkpoint}});
  std::cout << "trained " << cfg.grpo.iterations << " iterations\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& data, const std::string& checkpoint,
             const std::string& suite) {
  const auto cfg = load(c);
  require_exists(data, "dataset");
  const flowrl::Policy policy = load_policy(checkpoint, cfg);
  const auto tasks = suite_tasks(flowrl::read_dataset(data), suite, policy.config);
  make_dir(c.out);
  ordered_json report;
  if (cfg.task == flowrl::TaskKind::Maze) {
    const auto r = flowrl::evaluate_vr(policy, tasks, cfg.eval);
    report = flowrl::to_json(r, cfg.eval);
    auto csv = open_out(fs::path(c.out) / "report.csv");
    flowrl::write_vr_csv(csv, r);
    std::cout << "EM " << r.em << "  SR " << r.sr << "  PR " << r.pr << "  MF " << r.mf << '\n';
  } else {
    const auto r = flowrl::evaluate_nav(policy, tasks, cfg.eval, cfg.nav);
    report = flowrl::to_json(r, cfg.eval, cfg.nav);
    std::cout << "ADE " << r.ade << "  FDE " << r.fde << "  WO " << r.wo << '\n';
  }
  report["suite"] = suite;
  open_out(fs::path(c.out) / "report.json") << report.dump(2) << '\n';
  flowrl::write_run_json(c.out, "eval", cfg, {{"data", data}, {"checkpoint", checkpoint}, {"suite", suite}});
  return 0;
}

int cmd_scale(const Common& c, const std::string& data, const std::string& checkpoint,
              const std::string& suite, std::vector<int> ks) {
  auto cfg = load(c);
  if (!ks.empty()) cfg.scale_ks = ks;
  require_exists(data, "dataset");
  const flowrl::Policy policy = load_policy(checkpoint, cfg);
  const auto tasks = suite_tasks(flowrl::read_dataset(data), suite, policy.config);
  const auto reward = flowrl::make_reward(cfg.grpo.reward);
  std::vector<flowrl::BestOfK> runs(tasks.size());
  flowrl::parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
    runs[i] = flowrl::best_of_k(policy, tasks[i], i, cfg.scale_ks, *reward, cfg.eval);
  });
  std::vector<double> mean(cfg.scale_ks.size(), 0.0);
  ordered_json per_task = ordered_json::array();
  for (const auto& r : runs) {
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += r.curve[k] / static_cast<double>(runs.size());
    per_task.push_back({{"curve", r.curve}, {"best_index", r.best_index}});
  }
  make_dir(c.out);
  ordered_json out;
  out["ks"] = cfg.scale_ks;
  out["mean_best_reward"] = mean;
  out["reward"] = cfg.grpo.reward.name;
  out["tasks"] = per_task;
  open_out(fs::path(c.out) / "scaling.json") << out.dump(2) << '\n';
  flowrl::Series s{"mean best reward", {}, mean};
  for (int k : cfg.scale_ks) s.x.push_back(k);
  open_out(fs::path(c.out) / "scaling.svg") << flowrl::svg_line_plot({s}, "Best-of-K reward", "K");
  flowrl::write_run_json(c.out, "scale", cfg, {{"data", data}, {"checkpoint", checkpoint}, {"suite", suite}});
  for (std::size_t k = 0; k < mean.size(); ++k) std::cout << "K=" << cfg.scale_ks[k] << "  " << mean[k] << '\n';
  return 0;
}

int cmd_plot(const std::string& log, const std::string& out, const std::vector<std::string>& metrics) {
  require_exists(log, "log");
  const auto rows = flowrl::read_jsonl(log);
  auto all = flowrl::log_series(rows);
  std::vector<flowrl::Series> chosen;
  std::vector<std::string> wanted = metrics;
  if (wanted.empty()) {
    for (const char* name : {"mean_reward", "max_reward", "loss"}) {
      for (const auto& s : all) {
        if (s.name == name) wanted.push_back(name);
      }
    }
  }
  for (const auto& w : wanted) {
    bool found = false;
    for (const auto& s : all) {
      if (s.name == w) {
        chosen.push_back(s);
        found = true;
      }
    }
    if (!found) flowrl::fail(flowrl::ErrorKind::InvalidArgument, "metric '" + w + "' not in " + log);
  }
  const bool epochs = !rows.empty() && rows.front().contains("epoch");
  open_out(out) << flowrl::svg_line_plot(chosen, fs::path(log).filename().string(),
                                         epochs ? "epoch" : "iteration");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowrl: flow-matching policies fine-tuned with group relative policy optimization"};
  app.require_subcommand(1);
  Common common;
  std::string data, checkpoint, suite = "heldout", log;
  std::vector<int> ks;
  std::vector<std::string> metrics;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", common.config, "experiment config (JSON)");
    if (needs_config) opt->required();
    sub->add_option("--out", common.out, "output directory")->required();
    sub->add_option("--seed", common.seed, "override the top-level seed");
    sub->add_option("--workers", common.workers, "worker threads");
  };

  auto* gen = app.add_subcommand("gen-data", "generate maze suites, demonstrations and scenes");
  add_common(gen);
  auto* sft = app.add_subcommand("sft", "supervised flow-matching warm start");
  add_common(sft);
  sft->add_option("--data", data, "dataset directory")->required();
  auto* grpo = app.add_subcommand("grpo", "group relative policy optimization");
  add_common(grpo);
  grpo->add_option("--data", data, "dataset directory")->required();
  grpo->add_option("--checkpoint", checkpoint, "initial (and reference) checkpoint")->required();
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a suite");
  add_common(eval);
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  eval->add_option("--suite", suite, "train or heldout");
  auto* scale = app.add_subcommand("scale", "best-of-K test-time scaling sweep");
  add_common(scale);
  scale->add_option("--data", data, "dataset directory")->required();
  scale->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  scale->add_option("--suite", suite, "train or heldout");
  scale->add_option("--ks", ks, "K values")->delimiter(',');
  auto* plot = app.add_subcommand("plot", "plot a JSONL log as SVG");
  plot->add_option("--log", log, "JSONL log")->required();
  plot->add_option("--out", common.out, "output SVG path")->required();
  plot->add_option("--metric", metrics, "metric to plot (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : flowrl::exit_code(flowrl::ErrorKind::InvalidArgument);
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*sft) return cmd_sft(common, data);
    if (*grpo) return cmd_grpo(common, data, checkpoint);
    if (*eval) return cmd_eval(common, data, checkpoint, suite);
    if (*scale) return cmd_scale(common, data, checkpoint, suite, ks);
    if (*plot) return cmd_plot(log, common.out, metrics);
  } catch (const flowrl::Error& e) {
    std::cerr << "error (" << flowrl::to_string(e.kind()) << "): " << e.what() << '\n';
    return flowrl::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
