// Copyright 2026 The flowrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowrl/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flowrl/error.hpp"
#include "flowrl/random.hpp"

#ifndef FLOWRL_GIT_DESCRIBE
#define FLOWRL_GIT_DESCRIBE "unknown"
#endif

namespace flowrl {

// ---------------------------------------------------------------------------
// Configuration

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void config_error(const std::string& what) { fail(ErrorKind::ConfigError, what); }

// Reads keys of one JSON object, remembering which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(where("") + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void read(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) config_error(where(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void read(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        config_error(where(key) + " must be a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void read(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) config_error(where(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) config_error(where(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void read(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) config_error(where(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<int>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) config_error(where(key) + " must be an array of integers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_integer()) config_error(where(key) + " must be an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void require_key(const char* key) const {
    if (!j_.contains(key)) config_error("missing required field '" + where(key) + "'");
  }

  Section child(const char* key) {
    static const json empty = json::object();
    const json* v = take(key);
    return Section(v ? *v : empty, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) config_error("unknown field '" + where(key.c_str()) + "'");
    }
  }

 private:
  const json* take(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }
  std::string where(const char* key) const {
    if (path_.empty()) return key;
    return *key ? path_ + "." + key : path_;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

TaskKind task_from_string(const std::string& s) {
  if (s == "maze") return TaskKind::Maze;
  if (s == "nav") return TaskKind::Nav;
  config_error("task must be 'maze' or 'nav', got '" + s + "'");
}

const char* to_string(TaskKind k) { return k == TaskKind::Maze ? "maze" : "nav"; }

}  // namespace

PolicyConfig ExperimentConfig::policy_config() const {
  return task == TaskKind::Maze ? maze_policy_config(model.frames, model.grid, model.hidden)
                                : nav_policy_config(model.frames, model.hidden);
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.require_key("name");
  root.read("name", c.name);
  root.read("seed", c.seed);
  std::string task = "maze";
  root.read("task", task);
  c.task = task_from_string(task);
  root.read("workers", c.workers);

  c.data.seed = derive_seed(c.seed, 1);
  c.model.init_seed = derive_seed(c.seed, 2);
  c.sft.seed = derive_seed(c.seed, 3);
  c.grpo.seed = derive_seed(c.seed, 4);
  c.eval.seed = derive_seed(c.seed, 5);

  Section data = root.child("data");
  data.read("seed", c.data.seed);
  data.read("train", c.data.train);
  data.read("heldout", c.data.heldout);
  data.read("demos", c.data.demos);
  data.read("min_size", c.data.min_size);
  data.read("max_size", c.data.max_size);
  std::string kind = to_string(c.data.maze_kind);
  data.read("maze_kind", kind);
  try {
    c.data.maze_kind = maze_kind_from_string(kind);
  } catch (const Error& e) {
    config_error("data.maze_kind: " + std::string(e.what()));
  }
  data.read("trap_fraction", c.data.trap_fraction);
  data.finish();

  Section model = root.child("model");
  model.read("frames", c.model.frames);
  model.read("grid", c.model.grid);
  model.read("hidden", c.model.hidden);
  model.read("init_seed", c.model.init_seed);
  model.finish();

  Section sft = root.child("sft");
  sft.read("epochs", c.sft.epochs);
  sft.read("batch_size", c.sft.batch_size);
  sft.read("learning_rate", c.sft.learning_rate);
  sft.read("cosine_decay", c.sft.cosine_decay);
  sft.read("seed", c.sft.seed);
  sft.finish();

  Section grpo = root.child("grpo");
  grpo.read("group_size", c.grpo.group_size);
  grpo.read("s_train", c.grpo.s_train);
  grpo.read("s_infer", c.grpo.s_infer);
  grpo.read("noise_scale", c.grpo.noise_scale);
  grpo.read("clip_eps", c.grpo.clip_eps);
  grpo.read("beta_kl", c.grpo.beta_kl);
  grpo.read("learning_rate", c.grpo.learning_rate);
  grpo.read("iterations", c.grpo.iterations);
  grpo.read("batch_size", c.grpo.batch_size);
  grpo.read("seed", c.grpo.seed);
  grpo.read("eps_adv", c.grpo.eps_adv);
  grpo.read("adam_beta1", c.grpo.adam_beta1);
  grpo.read("adam_beta2", c.grpo.adam_beta2);
  grpo.read("adam_eps", c.grpo.adam_eps);
  grpo.read("checkpoint_every", c.grpo.checkpoint_every);
  grpo.finish();

  RewardSpec& r = c.grpo.reward;
  Section reward = root.child("reward");
  reward.read("name", r.name);
  reward.read("alpha", r.game.alpha);
  reward.read("beta", r.game.beta);
  reward.read("gamma", r.game.gamma);
  reward.read("mf_samples", r.fidelity.samples);
  reward.read("mf_tau", r.fidelity.tau);
  reward.read("alpha_emb", r.embed.alpha_emb);
  reward.read("beta_emb", r.embed.beta_emb);
  reward.read("gamma_emb", r.embed.gamma_emb);
  reward.read("epsilon", r.embed.epsilon);
  reward.read("embed_seed", r.embed_seed);
  reward.finish();

  c.eval.steps = c.grpo.s_infer;
  c.eval.noise_scale = c.grpo.noise_scale;
  Section eval = root.child("eval");
  eval.read("noise_scale", c.eval.noise_scale);
  eval.read("seed", c.eval.seed);
  eval.finish();
  c.eval.fidelity = r.fidelity;

  Section scale = root.child("scale");
  scale.read("ks", c.scale_ks);
  scale.finish();

  Section nav = root.child("nav_metrics");
  nav.read("miss_threshold", c.nav.miss_threshold);
  nav.read("soft_sigma", c.nav.soft_sigma);
  nav.read("corridor_base", c.nav.corridor.base);
  nav.read("corridor_growth", c.nav.corridor.growth);
  nav.read("w_ac", c.nav.weights.ac);
  nav.read("w_se", c.nav.weights.se);
  nav.read("w_mr", c.nav.weights.mr);
  nav.read("w_ade", c.nav.weights.ade);
  nav.read("w_fde", c.nav.weights.fde);
  nav.read("distance_scale", c.nav.weights.scale);
  nav.finish();
  root.finish();

  c.grpo.workers = c.eval.workers = c.workers;
  if (c.workers < 1) config_error("workers must be positive");
  if (c.data.train < 1 || c.data.heldout < 1 || c.data.demos < 1) {
    config_error("data.train, data.heldout and data.demos must be positive");
  }
  if (c.data.min_size < 3 || c.data.max_size < c.data.min_size) {
    config_error("data.min_size must be at least 3 and not above data.max_size");
  }
  if (c.task == TaskKind::Maze && c.data.max_size > c.model.grid) {
    config_error("data.max_size must not exceed model.grid");
  }
  if (c.task == TaskKind::Maze && c.model.frames < c.data.max_size * c.data.max_size) {
    config_error("model.frames must cover the longest possible path (data.max_size squared)");
  }
  if (c.model.frames < 2 || c.model.hidden < 1) config_error("model.frames and model.hidden are too small");
  if (c.scale_ks.empty()) config_error("scale.ks must not be empty");
  for (int k : c.scale_ks) {
    if (k < 1) config_error("scale.ks entries must be at least 1");
  }
  c.grpo.validate();
  try {
    validate(r.game);
    validate(r.embed);
    (void)make_reward(r);
  } catch (const Error& e) {
    config_error("reward: " + std::string(e.what()));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = text.substr(0, std::min<std::size_t>(e.byte, text.size()));
    const auto line = 1 + std::count(upto.begin(), upto.end(), '\n');
    config_error(path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  return parse_config(j);
}

ExperimentConfig with_seed(const nlohmann::json& source, std::uint64_t seed) {
  json j = source;
  j["seed"] = seed;
  return parse_config(j);
}

nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["task"] = to_string(c.task);
  j["workers"] = c.workers;
  j["data"] = {{"seed", c.data.seed},           {"train", c.data.train},
               {"heldout", c.data.heldout},     {"demos", c.data.demos},
               {"min_size", c.data.min_size},   {"max_size", c.data.max_size},
               {"maze_kind", to_string(c.data.maze_kind)}, {"trap_fraction", c.data.trap_fraction}};
  j["model"] = {{"frames", c.model.frames}, {"grid", c.model.grid}, {"hidden", c.model.hidden},
                {"init_seed", c.model.init_seed}};
  j["sft"] = {{"epochs", c.sft.epochs}, {"batch_size", c.sft.batch_size},
              {"learning_rate", c.sft.learning_rate}, {"cosine_decay", c.sft.cosine_decay},
              {"seed", c.sft.seed}};
  const GrpoConfig& g = c.grpo;
  j["grpo"] = {{"group_size", g.group_size}, {"s_train", g.s_train}, {"s_infer", g.s_infer},
               {"noise_scale", g.noise_scale}, {"clip_eps", g.clip_eps}, {"beta_kl", g.beta_kl},
               {"learning_rate", g.learning_rate}, {"iterations", g.iterations},
               {"batch_size", g.batch_size}, {"seed", g.seed}, {"eps_adv", g.eps_adv},
               {"adam_beta1", g.adam_beta1}, {"adam_beta2", g.adam_beta2}, {"adam_eps", g.adam_eps},
               {"checkpoint_every", g.checkpoint_every}};
  const RewardSpec& r = g.reward;
  j["reward"] = {{"name", r.name}, {"alpha", r.game.alpha}, {"beta", r.game.beta},
                 {"gamma", r.game.gamma}, {"mf_samples", r.fidelity.samples},
                 {"mf_tau", r.fidelity.tau}, {"alpha_emb", r.embed.alpha_emb},
                 {"beta_emb", r.embed.beta_emb}, {"gamma_emb", r.embed.gamma_emb},
                 {"epsilon", r.embed.epsilon}, {"embed_seed", r.embed_seed}};
  j["eval"] = {{"noise_scale", c.eval.noise_scale}, {"seed", c.eval.seed}};
  j["scale"] = {{"ks", c.scale_ks}};
  j["nav_metrics"] = {{"miss_threshold", c.nav.miss_threshold}, {"soft_sigma", c.nav.soft_sigma},
                      {"corridor_base", c.nav.corridor.base},
                      {"corridor_growth", c.nav.corridor.growth}, {"w_ac", c.nav.weights.ac},
                      {"w_se", c.nav.weights.se}, {"w_mr", c.nav.weights.mr},
                      {"w_ade", c.nav.weights.ade}, {"w_fde", c.nav.weights.fde},
                      {"distance_scale", c.nav.weights.scale}};
  return j;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

std::string layout_key(const Maze& m) {
  std::string key = std::to_string(m.width()) + "x" + std::to_string(m.height()) + ":";
  for (int r = 0; r < m.height(); ++r) {
    for (int c = 0; c < m.width(); ++c) {
      const Cell here{r, c};
      key += m.wall(here, {r, c + 1}) ? '1' : '0';
      key += m.wall(here, {r + 1, c}) ? '1' : '0';
      key += m.trap(here) ? '1' : '0';
    }
  }
  return key;
}

std::vector<Maze> maze_set(const DataConfig& cfg, std::uint64_t set_id, int count,
                           std::set<std::string>& seen) {
  std::vector<Maze> out;
  const std::uint64_t set_seed = derive_seed(cfg.seed, set_id);
  for (int i = 0; i < count; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      require(attempt < 10000, "generate_dataset: cannot find enough distinct layouts");
      const std::uint64_t seed = derive_seed(derive_seed(set_seed, static_cast<std::uint64_t>(i)), attempt);
      Rng rng(seed);
      const int side = std::uniform_int_distribution<int>(cfg.min_size, cfg.max_size)(rng);
      Maze m = cfg.maze_kind == MazeKind::Regular ? gen_regular_maze(seed, side, side)
                                                  : gen_trapfield(seed, side, side, cfg.trap_fraction);
      if (seen.insert(layout_key(m)).second) {
        out.push_back(std::move(m));
        break;
      }
    }
  }
  return out;
}

std::vector<NavScene> nav_set(const DataConfig& cfg, std::uint64_t set_id, int count) {
  std::vector<NavScene> out;
  const std::uint64_t set_seed = derive_seed(cfg.seed, set_id);
  for (int i = 0; i < count; ++i) out.push_back(gen_nav_scene(derive_seed(set_seed, static_cast<std::uint64_t>(i))));
  return out;
}

const char* const kSetNames[] = {"train", "heldout", "demos"};

std::filesystem::path entry_path(const char* set, std::size_t i, const char* ext) {
  char name[32];
  std::snprintf(name, sizeof name, "%04zu.%s", i, ext);
  return std::filesystem::path(set) / name;
}

}  // namespace

Dataset generate_dataset(const DataConfig& cfg, TaskKind task) {
  Dataset d;
  if (task == TaskKind::Maze) {
    std::set<std::string> seen;
    d.heldout = maze_set(cfg, 2, cfg.heldout, seen);
    d.train = maze_set(cfg, 1, cfg.train, seen);
    d.demos = maze_set(cfg, 3, cfg.demos, seen);
  } else {
    d.nav_train = nav_set(cfg, 1, cfg.train);
    d.nav_heldout = nav_set(cfg, 2, cfg.heldout);
    d.nav_demos = nav_set(cfg, 3, cfg.demos);
  }
  return d;
}

void write_dataset(const Dataset& data, const nlohmann::ordered_json& manifest_extra,
                   const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  ordered_json manifest = manifest_extra;
  const std::vector<Maze>* mazes[] = {&data.train, &data.heldout, &data.demos};
  const std::vector<NavScene>* scenes[] = {&data.nav_train, &data.nav_heldout, &data.nav_demos};
  ordered_json sets = ordered_json::object();
  for (int s = 0; s < 3; ++s) {
    ordered_json entries = ordered_json::array();
    fs::create_directories(dir / kSetNames[s], ec);
    for (std::size_t i = 0; i < mazes[s]->size(); ++i) {
      const Maze& m = (*mazes[s])[i];
      const fs::path rel = entry_path(kSetNames[s], i, "maze");
      save_maze((dir / rel).string(), m);
      entries.push_back({{"file", rel.generic_string()}, {"seed", m.seed()}, {"width", m.width()},
                         {"height", m.height()}});
    }
    for (std::size_t i = 0; i < scenes[s]->size(); ++i) {
      const NavScene& n = (*scenes[s])[i];
      const fs::path rel = entry_path(kSetNames[s], i, "nav");
      std::ofstream out(dir / rel);
      if (!out) fail(ErrorKind::IoError, "cannot write " + (dir / rel).string());
      write_nav_scene(out, n);
      entries.push_back({{"file", rel.generic_string()}, {"seed", n.seed}});
    }
    sets[kSetNames[s]] = entries;
  }
  manifest["sets"] = sets;
  std::ofstream out(dir / "manifest.json");
  if (!out) fail(ErrorKind::IoError, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open dataset manifest " + path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
  if (!manifest.contains("sets")) fail(ErrorKind::FormatError, path.string() + ": no 'sets' entry");
  Dataset d;
  std::vector<Maze>* mazes[] = {&d.train, &d.heldout, &d.demos};
  std::vector<NavScene>* scenes[] = {&d.nav_train, &d.nav_heldout, &d.nav_demos};
  for (int s = 0; s < 3; ++s) {
    if (!manifest["sets"].contains(kSetNames[s])) continue;
    for (const json& e : manifest["sets"][kSetNames[s]]) {
      const std::string file = e.at("file").get<std::string>();
      if (file.ends_with(".maze")) {
        mazes[s]->push_back(load_maze((dir / file).string()));
      } else {
        std::ifstream nin(dir / file);
        if (!nin) fail(ErrorKind::IoError, "cannot open " + (dir / file).string());
        scenes[s]->push_back(read_nav_scene(nin));
      }
    }
  }
  return d;
}

TrajectoryLatent nav_demo(const NavScene& scene, int frames) {
  const Path2<double> ref = scene.reference;
  const Path2<double> pts = resample_path(ref, frames);
  TrajectoryLatent latent(frames);
  latent.waypoints = pts;
  return latent;
}

FmBatch demo_batch(const Dataset& data, const PolicyConfig& config) {
  const bool maze = config.task == TaskKind::Maze;
  const Eigen::Index n = static_cast<Eigen::Index>(maze ? data.demos.size() : data.nav_demos.size());
  require(n > 0, "demo_batch: the dataset has no demonstrations");
  FmBatch b{Eigen::MatrixXd(config.state_dim(), n), Eigen::MatrixXd(config.cond_dim(), n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (maze) {
      const Maze& m = data.demos[idx];
      b.data.col(i) = encode_latent(config, make_demo(m, solve_optimal(m), config.frames));
      b.conds.col(i) = encode_condition(m, config.grid);
    } else {
      const NavScene& s = data.nav_demos[idx];
      b.data.col(i) = encode_latent(config, nav_demo(s, config.frames));
      b.conds.col(i) = encode_condition(s);
    }
  }
  return b;
}

std::vector<Task> make_tasks(const std::vector<Maze>& mazes, const PolicyConfig& config) {
  std::vector<Task> out;
  for (const Maze& m : mazes) out.push_back(make_task(m, config));
  return out;
}

std::vector<Task> make_tasks(const std::vector<NavScene>& scenes, const PolicyConfig& config) {
  std::vector<Task> out;
  for (const NavScene& s : scenes) out.push_back(make_task(s, config));
  return out;
}

// ---------------------------------------------------------------------------
// Artifacts

const char* git_describe() { return FLOWRL_GIT_DESCRIBE; }

void write_run_json(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& cfg, const nlohmann::ordered_json& inputs) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  ordered_json j;
  j["command"] = command;
  j["git_describe"] = git_describe();
  j["config"] = to_json(cfg);
  j["seeds"] = {{"master", cfg.seed}, {"data", cfg.data.seed}, {"init", cfg.model.init_seed},
                {"sft", cfg.sft.seed}, {"grpo", cfg.grpo.seed}, {"eval", cfg.eval.seed}};
  j["inputs"] = inputs;
  std::ofstream out(dir / "run.json");
  if (!out) fail(ErrorKind::IoError, "cannot write " + (dir / "run.json").string());
  out << j.dump(2) << '\n';
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::FormatError, path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<Series> log_series(const std::vector<nlohmann::json>& rows) {
  std::map<std::string, Series> by_name;
  std::vector<std::string> order;
  auto add = [&](const std::string& name, double x, double y) {
    auto [it, fresh] = by_name.try_emplace(name, Series{name, {}, {}});
    if (fresh) order.push_back(name);
    it->second.x.push_back(x);
    it->second.y.push_back(y);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const json& r = rows[i];
    if (!r.is_object() || r.contains("error")) continue;
    double x = static_cast<double>(i);
    if (r.contains("iteration") && r["iteration"].is_number()) x = r["iteration"].get<double>();
    else if (r.contains("epoch") && r["epoch"].is_number()) x = r["epoch"].get<double>();
    for (const auto& [key, value] : r.items()) {
      if (key == "iteration" || key == "epoch" || key == "seed") continue;
      if (value.is_number()) add(key, x, value.get<double>());
      if (key == "components" && value.is_object()) {
        for (const auto& [ck, cv] : value.items()) {
          if (cv.is_number()) add(ck, x, cv.get<double>());
        }
      }
    }
  }
  std::vector<Series> out;
  for (const auto& name : order) out.push_back(by_name[name]);
  return out;
}

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
  constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return std::string(b);
  };
  auto fx = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  auto escape = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  svg << "<g stroke=\"#444\" fill=\"none\"><line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\""
      << kLeft + pw << "\" y2=\"" << kTop + ph << "\"/><line x1=\"" << kLeft << "\" y1=\"" << kTop
      << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph << "\"/></g>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    svg << "<text x=\"" << fx(px(xv)) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << num(xv) << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fx(py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
        << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    const Series& sr = series[s];
    svg << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < sr.x.size(); ++i) svg << (i ? " " : "") << fx(px(sr.x[i])) << ',' << fx(py(sr.y[i]));
    svg << "\"/>\n";
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      svg << "<circle class=\"point\" cx=\"" << fx(px(sr.x[i])) << "\" cy=\"" << fx(py(sr.y[i]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 32 << "\" y2=\""
        << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << kLeft + pw + 36
        << "\" y=\"" << ly + 4 << "\">" << escape(sr.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace flowrl
