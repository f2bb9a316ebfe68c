// Command-line front end: train, eval, ablate, attention.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hrl/harness.hpp"

namespace fs = std::filesystem;
using namespace hrl;

namespace {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_run(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return RunConfig::from_file(KeyValueFile::load(path));
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

std::ifstream open_in(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read '" + p + "'");
  return in;
}

// One summary row: per-level returns, penalties, outcome rates.
void print_header(std::ostream& out) {
  out << "policy,episodes,mean_ro,mean_ra,mean_steps,unsmoothness,unsafe,collision,not_stop,timeout,success\n";
}

void print_row(std::ostream& out, std::string_view name, const EvalSummary& s) {
  out << name << ',' << s.episodes << ',' << format_number(s.mean_r_option) << ','
      << format_number(s.mean_r_action) << ',' << format_number(s.mean_steps) << ','
      << format_number(s.mean_unsmoothness) << ',' << format_number(s.mean_unsafe) << ','
      << format_number(s.collision()) << ',' << format_number(s.not_stop()) << ',' << format_number(s.timeout())
      << ',' << format_number(s.success()) << '\n';
}

void log_progress(const LogRow& r) {
  std::fprintf(stderr, "epoch %d success %.3f collision %.3f not_stop %.3f timeout %.3f\n", r.epoch, r.success,
               r.collision, r.not_stop, r.timeout);
}

int cmd_train(const std::string& config, const std::string& out_dir, bool quiet) {
  const RunConfig run = load_run(config);
  if (is_rule(run.policy)) throw ConfigError("policy '" + std::string(to_string(run.policy)) + "' has nothing to train");
  fs::create_directories(out_dir);
  const auto on_log = quiet ? std::function<void(const LogRow&)>{} : log_progress;
  std::vector<LogRow> log;
  {
    auto ck = open_out(fs::path(out_dir) / "checkpoint.bin", true);
    if (run.policy == PolicyKind::FLAT_DDQN) {
      auto res = train_flat(run, on_log);
      res.agent.write(ck);
      log = std::move(res.log);
    } else {
      auto res = train_hrl(run, on_log);
      res.agent.write(ck);
      log = std::move(res.log);
    }
    if (!ck) throw IoError("failed writing checkpoint");
  }
  auto log_out = open_out(fs::path(out_dir) / "log.csv");
  write_log_csv(log_out, log);
  return 0;
}

int cmd_eval(const std::string& config, const std::string& checkpoint, const std::string& policy_name, int episodes,
             std::uint64_t seed) {
  const RunConfig run = load_run(config);
  const PolicyKind kind = parse_policy(policy_name);
  if (episodes < 1) throw ConfigError("--episodes must be at least 1");
  EvalSummary s;
  if (is_rule(kind)) {
    RulePolicy p(rule_of(kind), run.env, run.agent.action_table);
    s = evaluate(as_policy(p), episodes, seed, run.env, run.mix, run.reward, true);
  } else {
    if (checkpoint.empty()) throw ConfigError("policy '" + policy_name + "' needs --checkpoint");
    auto in = open_in(checkpoint);
    if (kind == PolicyKind::FLAT_DDQN) {
      const FlatDdqnAgent agent = FlatDdqnAgent::read(in);
      s = evaluate(as_policy(agent), episodes, seed, run.env, run.mix, run.reward, false);
    } else {
      const HrlAgent agent = HrlAgent::read(in);
      s = evaluate(as_policy(agent), episodes, seed, run.env, run.mix, run.reward, true);
    }
  }
  print_header(std::cout);
  print_row(std::cout, policy_name, s);
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& variants, int seeds, int episodes,
               const std::string& out_dir) {
  const RunConfig base = load_run(config);
  std::vector<PolicyKind> kinds;
  std::stringstream ss(variants);
  for (std::string name; std::getline(ss, name, ',');) {
    const PolicyKind k = parse_policy(name);
    if (!is_hierarchical(k)) throw ConfigError("ablate takes hierarchical variants only, got '" + name + "'");
    kinds.push_back(k);
  }
  if (kinds.empty()) throw ConfigError("--variants is empty");
  if (seeds < 1 || episodes < 1) throw ConfigError("--seeds and --episodes must be positive");
  std::ostringstream table;
  table << "variant,seed,success,collision,not_stop,timeout\n";
  std::cout << "variant,mean_success,mean_collision\n";
  for (PolicyKind k : kinds) {
    double succ = 0, coll = 0;
    for (int i = 0; i < seeds; ++i) {
      RunConfig run = base;
      run.policy = k;
      run.run_seed = base.run_seed + static_cast<std::uint64_t>(i);
      std::fprintf(stderr, "training %s seed %llu\n", std::string(to_string(k)).c_str(),
                   static_cast<unsigned long long>(run.run_seed));
      const auto res = train_hrl(run);
      const auto s = evaluate(as_policy(res.agent), episodes, run.eval_seed_base, run.env, run.mix, run.reward, true);
      table << to_string(k) << ',' << run.run_seed << ',' << format_number(s.success()) << ','
            << format_number(s.collision()) << ',' << format_number(s.not_stop()) << ','
            << format_number(s.timeout()) << '\n';
      succ += s.success();
      coll += s.collision();
    }
    std::cout << to_string(k) << ',' << format_number(succ / seeds) << ',' << format_number(coll / seeds) << '\n';
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    auto out = open_out(fs::path(out_dir) / "ablation.csv");
    out << table.str();
  }
  return 0;
}

int cmd_attention(const std::string& config, const std::string& checkpoint, std::uint64_t seed,
                  const std::string& out_file) {
  const RunConfig run = load_run(config);
  auto in = open_in(checkpoint);
  const HrlAgent agent = HrlAgent::read(in);
  const auto rows = attention_trace(agent, run.env, run.mix, seed);
  if (out_file.empty()) {
    write_attention_csv(std::cout, rows);
  } else {
    auto out = open_out(out_file);
    write_attention_csv(out, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical DQN stop-line planner"};
  app.require_subcommand(1);

  std::string config, out_dir, checkpoint, policy = "hybrid-hrl", variants = "hrl0,hrl1,hrl2,hrl3,hybrid-hrl", out_file;
  int episodes = 100, seeds = 3;
  std::uint64_t seed = 1'000'000'000;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train a learned policy");
  train->add_option("--config", config, "flat key = value run config")->required();
  train->add_option("--out", out_dir, "output directory for log.csv and checkpoint.bin")->required();
  train->add_flag("--quiet", quiet, "no progress lines on stderr");

  auto* eval = app.add_subcommand("eval", "greedy evaluation");
  eval->add_option("--checkpoint", checkpoint, "checkpoint of a learned policy");
  eval->add_option("--policy", policy, "rule1..rule4, flat-ddqn, hrl0..hrl3, hybrid-hrl");
  eval->add_option("--episodes", episodes, "episode count");
  eval->add_option("--seed", seed, "first episode seed");
  eval->add_option("--config", config, "env / reward config");

  auto* ablate = app.add_subcommand("ablate", "train and compare hierarchical variants");
  ablate->add_option("--variants", variants, "comma-separated variant list");
  ablate->add_option("--config", config, "base run config");
  ablate->add_option("--seeds", seeds, "run seeds per variant");
  ablate->add_option("--episodes", episodes, "evaluation episodes per run");
  ablate->add_option("--out", out_dir, "directory for ablation.csv");

  auto* attention = app.add_subcommand("attention", "export per-step attention weights");
  attention->add_option("--checkpoint", checkpoint, "hierarchical checkpoint")->required();
  attention->add_option("--seed", seed, "episode seed");
  attention->add_option("--config", config, "env config");
  attention->add_option("--out", out_file, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, out_dir, quiet);
    if (*eval) return cmd_eval(config, checkpoint, policy, episodes, seed);
    if (*ablate) return cmd_ablate(config, variants, seeds, episodes, out_dir);
    if (*attention) return cmd_attention(config, checkpoint, seed, out_file);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
