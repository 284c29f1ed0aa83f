#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdqn/scenario.hpp"
#include "cdqn/trainer.hpp"
#include "cdqn/util.hpp"
#include "cdqn/verify.hpp"

namespace {

using namespace cdqn;

std::vector<Offer> read_offers_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open offers file: " + path);
  std::vector<Offer> offers;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.find("supplier_id") != std::string::npos) continue;  // header
    std::istringstream ls(line);
    std::string field;
    Offer o;
    try {
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("missing supplier_id");
      o.supplier_id = std::stoi(field);
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("missing quantity_kwh");
      o.quantity_kwh = std::stod(field);
      if (!std::getline(ls, field, ',')) throw std::invalid_argument("missing bid");
      o.bid = std::stod(field);
    } catch (const std::exception& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad offer row (" + e.what() + ")");
    }
    offers.push_back(o);
  }
  return offers;
}

int cmd_train(const std::string& config_path, std::int64_t seed_flag, const std::string& out_dir,
              const std::string& mode_str) {
  ScenarioConfig cfg = config_path.empty() ? default_scenario() : load_config(config_path);
  const std::uint64_t seed = seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : cfg.hyper.seed;
  TrainOptions opts;
  opts.mode = mode_str == "independent" ? TrainMode::Independent : TrainMode::Cdqn;
  const int total = cfg.hyper.episodes;
  opts.on_episode = [&](int ep) {
    if (ep % 200 == 0 || ep == total)
      std::cerr << "episode " << ep << "/" << total << "\n";
  };

  const TrainResult result = run_training(cfg, seed, opts);
  write_training_outputs(out_dir, cfg, seed, result);

  std::cout << "mode " << mode_name(opts.mode) << "\n";
  std::cout << "episodes " << total << "\n";
  for (int i = 0; i < 3; ++i) {
    std::cout << "final_moving_avg " << agent_name(static_cast<AgentKind>(i)) << " "
              << format_double(result.metrics.moving_avg[i].back()) << "\n";
  }
  std::cout << "outputs " << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_dir, const std::string& config_path,
                 const std::string& out_dir) {
  ScenarioConfig cfg = config_path.empty() ? default_scenario() : load_config(config_path);

  TrainMode mode = TrainMode::Cdqn;
  {
    std::ifstream mf(checkpoint_dir + "/run_manifest.json");
    if (mf) {
      nlohmann::json j;
      mf >> j;
      if (j.contains("mode") && j["mode"] == "independent") mode = TrainMode::Independent;
    }
  }
  Policy policy = load_checkpoints(checkpoint_dir, cfg, mode);
  const EvalTrace trace = evaluate(policy, cfg);

  std::filesystem::create_directories(out_dir);
  write_trace_csv(out_dir + "/trace.csv", trace, cfg);
  for (int i = 0; i < 3; ++i)
    std::cout << "total_reward " << agent_name(static_cast<AgentKind>(i)) << " "
              << format_double(trace.totals[i]) << "\n";
  std::cout << "trace " << out_dir << "/trace.csv\n";
  return 0;
}

int cmd_clear_market(const std::string& offers_path, double demand, double buy, double sell) {
  const auto offers = read_offers_csv(offers_path);
  const ClearingResult res = clear_market(offers, demand, buy, sell);
  std::cout << "clearing_price " << format_double(res.clearing_price) << "\n";
  std::cout << "consumer_price " << format_double(res.consumer_price) << "\n";
  std::cout << "grid_import_kwh " << format_double(res.grid_import_kwh) << "\n";
  for (const auto& d : res.dispatch)
    std::cout << "supplier " << d.supplier_id << " in_mg_kwh " << format_double(d.in_mg_kwh)
              << " to_grid_kwh " << format_double(d.to_grid_kwh) << " avg_sell_price "
              << format_double(d.avg_sell_price) << "\n";
  return 0;
}

int cmd_selfcheck(const std::string& suite) {
  std::vector<verify::SuiteResult> results;
  if (suite == "gradients" || suite == "all")
    results.push_back(verify::run_gradient_suite(50, 20240));
  if (suite == "ce" || suite == "all") results.push_back(verify::run_ce_suite(200, 20241));
  if (suite == "market" || suite == "all") results.push_back(verify::run_market_suite(1000, 20242));

  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << r.name << ": " << (r.pass ? "PASS" : "FAIL") << " (" << r.summary << ")\n";
    for (const auto& f : r.failures) std::cout << "  " << f << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microgrid energy trading with correlated deep Q-learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", mode = "cdqn", checkpoint_dir, offers_path;
  std::string suite = "all";
  std::int64_t seed = -1;
  double demand = 0, buy = 0, sell = 0;

  auto* train = app.add_subcommand("train", "Train agents and write metrics + checkpoints");
  train->add_option("--config", config_path, "Scenario TOML (bundled defaults when omitted)");
  train->add_option("--seed", seed, "Run seed (defaults to the config's hyper.seed)");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--mode", mode, "cdqn | independent")
      ->check(CLI::IsMember({"cdqn", "independent"}));

  auto* eval = app.add_subcommand("evaluate", "Greedy episode from trained checkpoints");
  eval->add_option("--checkpoint-dir", checkpoint_dir, "Directory holding *.ckpt")->required();
  eval->add_option("--config", config_path, "Scenario TOML (bundled defaults when omitted)");
  eval->add_option("--out", out_dir, "Output directory");

  auto* clear = app.add_subcommand("clear-market", "Clear one hour of offers against a demand");
  clear->add_option("--offers", offers_path, "CSV with supplier_id,quantity_kwh,bid")->required();
  clear->add_option("--demand", demand, "Total demand, kWh")->required();
  clear->add_option("--buy", buy, "Grid buy price, $/kWh")->required();
  clear->add_option("--sell", sell, "Grid sell price, $/kWh")->required();

  auto* selfcheck = app.add_subcommand("selfcheck", "Run the built-in oracle suites");
  selfcheck->add_option("--suite", suite, "gradients | ce | market | all")
      ->check(CLI::IsMember({"gradients", "ce", "market", "all"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(train)) return cmd_train(config_path, seed, out_dir, mode);
    if (app.got_subcommand(eval)) return cmd_evaluate(checkpoint_dir, config_path, out_dir);
    if (app.got_subcommand(clear)) return cmd_clear_market(offers_path, demand, buy, sell);
    if (app.got_subcommand(selfcheck)) return cmd_selfcheck(suite);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
