#include "cdqn/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cdqn/toml.hpp"

namespace cdqn {

double TariffSchedule::min_sell() const {
  double m = sell_ratio * buy_price[0];
  for (double b : buy_price) m = std::min(m, sell_ratio * b);
  return m;
}

double TariffSchedule::max_buy() const {
  return *std::max_element(buy_price.begin(), buy_price.end());
}

ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.devices = {
      {1, 17.0, 1, 8, 1},
      {2, 15.0, 7, 13, 1},
      {3, 15.0, 10, 17, 1},
      {4, 16.0, 15, 22, 1},
      {5, 20.0, 20, 28, 1},
  };
  cfg.ess = {100.0, 20.0, 0.2, 0.1, 1.0};

  // Solar-era two-level tariff: the grid is cheap exactly while PV floods
  // the system and expensive otherwise. Deferrable load migrates into the
  // solar window, the evening-constrained device buys from storage, and
  // storage charges from the plant at midday to sell into the peak.
  for (int h = 0; h < 24; ++h) cfg.tariff.buy_price[h] = (h >= 7 && h <= 16) ? 0.12 : 0.22;
  cfg.tariff.sell_ratio = 0.5;

  // Ramp up from sunrise to a flat 60 kW peak over hours 12-13, then down
  // to a dusk cutoff when the evening peak window starts. Narrow shoulders
  // mean only the peak hours carry real surplus, so storage meets the plant
  // there, and no solar is left to sell into peak-priced evening hours.
  const std::array<double, 12> pv = {10, 15, 20, 30, 45, 60, 60, 45, 30, 20, 0, 0};
  for (int h = 0; h < 24; ++h) cfg.pv.power_kw[h] = 0;
  for (int i = 0; i < 12; ++i) cfg.pv.power_kw[7 + i] = pv[i];
  cfg.pv.cost_per_active_hour = 1.14;

  cfg.hyper.bid_grid = {0.06, 0.09, 0.12, 0.15, 0.18, 0.21};
  return cfg;
}

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw ConfigError("invalid config: " + msg); }

void check(bool ok, const std::string& msg) {
  if (!ok) invalid(msg);
}

int to_int(const toml::Value& v, const std::string& what) {
  if (v.kind != toml::Value::Kind::Integer)
    invalid(what + " must be an integer (line " + std::to_string(v.line) + ")");
  return static_cast<int>(v.integer);
}

double to_double(const toml::Value& v, const std::string& what) {
  if (v.kind != toml::Value::Kind::Integer && v.kind != toml::Value::Kind::Float)
    invalid(what + " must be a number (line " + std::to_string(v.line) + ")");
  return v.as_number();
}

bool to_bool(const toml::Value& v, const std::string& what) {
  if (v.kind != toml::Value::Kind::Boolean)
    invalid(what + " must be a boolean (line " + std::to_string(v.line) + ")");
  return v.boolean;
}

std::uint64_t to_u64(const toml::Value& v, const std::string& what) {
  if (v.kind != toml::Value::Kind::Integer || v.integer < 0)
    invalid(what + " must be a non-negative integer (line " + std::to_string(v.line) + ")");
  return static_cast<std::uint64_t>(v.integer);
}

std::vector<double> to_double_list(const toml::Value& v, const std::string& what) {
  if (v.kind != toml::Value::Kind::Array)
    invalid(what + " must be an array (line " + std::to_string(v.line) + ")");
  std::vector<double> out;
  out.reserve(v.array.size());
  for (const auto& e : v.array) out.push_back(to_double(e, what + " element"));
  return out;
}

std::array<double, 24> to_hourly(const toml::Value& v, const std::string& what) {
  auto list = to_double_list(v, what);
  if (list.size() != 24) invalid(what + " must have exactly 24 entries, got " + std::to_string(list.size()));
  std::array<double, 24> out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

}  // namespace

void validate_config(const ScenarioConfig& cfg) {
  check(!cfg.devices.empty(), "at least one device is required");
  for (const auto& d : cfg.devices) {
    const std::string tag = "device " + std::to_string(d.id) + ": ";
    check(d.power_kw > 0, tag + "power_kw must be > 0");
    check(d.window_start < d.window_end, tag + "window_start must be < window_end");
    check(d.duration_h >= 1, tag + "duration_h must be >= 1");
    check(d.window_end - d.window_start >= d.duration_h, tag + "window shorter than duration_h");
    check(d.window_start >= 1, tag + "window_start must be >= 1");
    check(d.window_end <= cfg.hyper.horizon_h, tag + "window_end exceeds horizon_h");
  }

  check(cfg.ess.capacity_kwh > 0, "ess: capacity_kwh must be > 0");
  check(cfg.ess.charge_rate_kw > 0, "ess: charge_rate_kw must be > 0");
  check(cfg.ess.soc_min >= 0 && cfg.ess.soc_max <= 1, "ess: SOC bounds must lie in [0, 1]");
  check(cfg.ess.soc_min <= cfg.ess.soc_max, "ess: soc_min must be <= soc_max");
  if (cfg.ess.soc_init < cfg.ess.soc_min || cfg.ess.soc_init > cfg.ess.soc_max)
    invalid("ess: soc_init out of [soc_min, soc_max]");

  for (double b : cfg.tariff.buy_price) check(b > 0, "tariff: all buy prices must be > 0");
  check(cfg.tariff.sell_ratio > 0 && cfg.tariff.sell_ratio <= 1, "tariff: sell_ratio must be in (0, 1]");

  for (double p : cfg.pv.power_kw) check(p >= 0, "pv: power must be >= 0");
  check(cfg.pv.cost_per_active_hour >= 0, "pv: cost_per_active_hour must be >= 0");

  const auto& hp = cfg.hyper;
  check(!hp.bid_grid.empty(), "hyper: bid_grid must be nonempty");
  for (std::size_t i = 1; i < hp.bid_grid.size(); ++i)
    check(hp.bid_grid[i - 1] < hp.bid_grid[i], "hyper: bid_grid must be strictly increasing");
  check(hp.bid_grid.front() >= cfg.tariff.min_sell() && hp.bid_grid.back() <= cfg.tariff.max_buy(),
        "hyper: bid_grid must lie within [min grid sell, max grid buy]");
  // Every trading hour needs at least one biddable price, or a supplier with
  // energy on hand would have no legal offer.
  for (int h = 0; h < 24; ++h) {
    const double lo = cfg.tariff.sell_ratio * cfg.tariff.buy_price[h];
    const double hi = cfg.tariff.buy_price[h];
    bool any = std::any_of(hp.bid_grid.begin(), hp.bid_grid.end(),
                           [&](double b) { return b >= lo && b <= hi; });
    check(any, "hyper: no bid in bid_grid lies within [grid sell, grid buy] at hour " + std::to_string(h));
  }
  check(hp.horizon_h >= 1, "hyper: horizon_h must be >= 1");
  check(hp.episodes >= 1, "hyper: episodes must be >= 1");
  check(hp.alpha_lr > 0, "hyper: alpha_lr must be > 0");
  check(hp.gamma > 0 && hp.gamma < 1, "hyper: gamma must be in (0, 1)");
  check(hp.epsilon_start >= 0 && hp.epsilon_start <= 1, "hyper: epsilon_start must be in [0, 1]");
  check(hp.epsilon_end >= 0 && hp.epsilon_end <= 1, "hyper: epsilon_end must be in [0, 1]");
  check(hp.epsilon_decay_episodes >= 1, "hyper: epsilon_decay_episodes must be >= 1");
  check(hp.replay_capacity >= 1, "hyper: replay_capacity must be >= 1");
  check(hp.batch_size >= 1 && hp.batch_size <= hp.replay_capacity,
        "hyper: batch_size must be in [1, replay_capacity]");
  check(hp.train_every_episodes >= 1, "hyper: train_every_episodes must be >= 1");
  check(hp.target_sync_multiple >= 1, "hyper: target_sync_multiple must be >= 1");
  check(hp.train_steps_per_event >= 1, "hyper: train_steps_per_event must be >= 1");
  check(hp.seq_len >= 1, "hyper: seq_len must be >= 1");
  check(hp.value_scale > 0, "hyper: value_scale must be > 0");
  check(hp.hidden_size >= 1, "hyper: hidden_size must be >= 1");
  check(hp.num_lstm_layers >= 1, "hyper: num_lstm_layers must be >= 1");
  check(hp.dsm_penalty >= 0, "hyper: dsm_penalty must be >= 0");
  check(cfg.devices.size() <= 20, "at most 20 devices are supported (joint space is 2^D wide)");
}

ScenarioConfig parse_config(const std::string& text, const std::string& origin) {
  const toml::Document doc = toml::parse(text, origin);
  ScenarioConfig cfg;

  auto devices_it = doc.table_arrays.find("devices");
  if (devices_it == doc.table_arrays.end())
    throw ConfigError(origin + ": missing [[devices]] sections");
  for (const auto& t : devices_it->second) {
    DeviceSpec d;
    d.id = to_int(t.at("id", origin), "devices.id");
    d.power_kw = to_double(t.at("power_kw", origin), "devices.power_kw");
    d.window_start = to_int(t.at("window_start", origin), "devices.window_start");
    d.window_end = to_int(t.at("window_end", origin), "devices.window_end");
    d.duration_h = to_int(t.at("duration_h", origin), "devices.duration_h");
    cfg.devices.push_back(d);
  }

  auto table = [&](const char* name) -> const toml::Table& {
    auto it = doc.tables.find(name);
    if (it == doc.tables.end()) throw ConfigError(origin + ": missing [" + name + "] section");
    return it->second;
  };

  {
    const auto& t = table("ess");
    cfg.ess.capacity_kwh = to_double(t.at("capacity_kwh", origin), "ess.capacity_kwh");
    cfg.ess.charge_rate_kw = to_double(t.at("charge_rate_kw", origin), "ess.charge_rate_kw");
    cfg.ess.soc_init = to_double(t.at("soc_init", origin), "ess.soc_init");
    cfg.ess.soc_min = to_double(t.at("soc_min", origin), "ess.soc_min");
    cfg.ess.soc_max = to_double(t.at("soc_max", origin), "ess.soc_max");
  }
  {
    const auto& t = table("tariff");
    cfg.tariff.buy_price = to_hourly(t.at("buy_price", origin), "tariff.buy_price");
    cfg.tariff.sell_ratio = to_double(t.at("sell_ratio", origin), "tariff.sell_ratio");
  }
  {
    const auto& t = table("pv");
    cfg.pv.power_kw = to_hourly(t.at("power_kw", origin), "pv.power_kw");
    cfg.pv.cost_per_active_hour = to_double(t.at("cost_per_active_hour", origin), "pv.cost_per_active_hour");
  }
  {
    const auto& t = table("hyper");
    auto& hp = cfg.hyper;
    hp.bid_grid = to_double_list(t.at("bid_grid", origin), "hyper.bid_grid");
    hp.horizon_h = to_int(t.at("horizon_h", origin), "hyper.horizon_h");
    hp.episodes = to_int(t.at("episodes", origin), "hyper.episodes");
    hp.alpha_lr = to_double(t.at("alpha_lr", origin), "hyper.alpha_lr");
    hp.gamma = to_double(t.at("gamma", origin), "hyper.gamma");
    hp.epsilon_start = to_double(t.at("epsilon_start", origin), "hyper.epsilon_start");
    hp.epsilon_end = to_double(t.at("epsilon_end", origin), "hyper.epsilon_end");
    hp.epsilon_decay_episodes = to_int(t.at("epsilon_decay_episodes", origin), "hyper.epsilon_decay_episodes");
    hp.replay_capacity = to_int(t.at("replay_capacity", origin), "hyper.replay_capacity");
    hp.batch_size = to_int(t.at("batch_size", origin), "hyper.batch_size");
    hp.train_every_episodes = to_int(t.at("train_every_episodes", origin), "hyper.train_every_episodes");
    hp.target_sync_multiple = to_int(t.at("target_sync_multiple", origin), "hyper.target_sync_multiple");
    hp.seq_len = to_int(t.at("seq_len", origin), "hyper.seq_len");
    hp.hidden_size = to_int(t.at("hidden_size", origin), "hyper.hidden_size");
    hp.num_lstm_layers = to_int(t.at("num_lstm_layers", origin), "hyper.num_lstm_layers");
    hp.seed = to_u64(t.at("seed", origin), "hyper.seed");
    // Optional switches with built-in defaults.
    if (t.has("value_scale"))
      hp.value_scale = to_double(t.values.at("value_scale"), "hyper.value_scale");
    if (t.has("train_steps_per_event"))
      hp.train_steps_per_event = to_int(t.values.at("train_steps_per_event"), "hyper.train_steps_per_event");
    if (t.has("force_run")) hp.force_run = to_bool(t.values.at("force_run"), "hyper.force_run");
    if (t.has("dsm_penalty")) hp.dsm_penalty = to_double(t.values.at("dsm_penalty"), "hyper.dsm_penalty");
    if (t.has("ce_value")) hp.ce_value = to_bool(t.values.at("ce_value"), "hyper.ce_value");
    if (t.has("ce_sample")) hp.ce_sample = to_bool(t.values.at("ce_sample"), "hyper.ce_sample");
  }

  validate_config(cfg);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

namespace {

void emit_hourly(std::ostream& os, const char* key, const std::array<double, 24>& a) {
  os << key << " = [";
  for (int i = 0; i < 24; ++i) os << (i ? ", " : "") << format_double(a[i]);
  os << "]\n";
}

}  // namespace

std::string serialize_config(const ScenarioConfig& cfg) {
  std::ostringstream os;
  for (const auto& d : cfg.devices) {
    os << "[[devices]]\n"
       << "id = " << d.id << "\n"
       << "power_kw = " << format_double(d.power_kw) << "\n"
       << "window_start = " << d.window_start << "\n"
       << "window_end = " << d.window_end << "\n"
       << "duration_h = " << d.duration_h << "\n\n";
  }
  os << "[ess]\n"
     << "capacity_kwh = " << format_double(cfg.ess.capacity_kwh) << "\n"
     << "charge_rate_kw = " << format_double(cfg.ess.charge_rate_kw) << "\n"
     << "soc_init = " << format_double(cfg.ess.soc_init) << "\n"
     << "soc_min = " << format_double(cfg.ess.soc_min) << "\n"
     << "soc_max = " << format_double(cfg.ess.soc_max) << "\n\n";
  os << "[tariff]\n";
  emit_hourly(os, "buy_price", cfg.tariff.buy_price);
  os << "sell_ratio = " << format_double(cfg.tariff.sell_ratio) << "\n\n";
  os << "[pv]\n";
  emit_hourly(os, "power_kw", cfg.pv.power_kw);
  os << "cost_per_active_hour = " << format_double(cfg.pv.cost_per_active_hour) << "\n\n";
  const auto& hp = cfg.hyper;
  os << "[hyper]\n"
     << "bid_grid = [";
  for (std::size_t i = 0; i < hp.bid_grid.size(); ++i)
    os << (i ? ", " : "") << format_double(hp.bid_grid[i]);
  os << "]\n"
     << "horizon_h = " << hp.horizon_h << "\n"
     << "episodes = " << hp.episodes << "\n"
     << "alpha_lr = " << format_double(hp.alpha_lr) << "\n"
     << "gamma = " << format_double(hp.gamma) << "\n"
     << "epsilon_start = " << format_double(hp.epsilon_start) << "\n"
     << "epsilon_end = " << format_double(hp.epsilon_end) << "\n"
     << "epsilon_decay_episodes = " << hp.epsilon_decay_episodes << "\n"
     << "replay_capacity = " << hp.replay_capacity << "\n"
     << "batch_size = " << hp.batch_size << "\n"
     << "train_every_episodes = " << hp.train_every_episodes << "\n"
     << "target_sync_multiple = " << hp.target_sync_multiple << "\n"
     << "train_steps_per_event = " << hp.train_steps_per_event << "\n"
     << "value_scale = " << format_double(hp.value_scale) << "\n"
     << "seq_len = " << hp.seq_len << "\n"
     << "hidden_size = " << hp.hidden_size << "\n"
     << "num_lstm_layers = " << hp.num_lstm_layers << "\n"
     << "seed = " << hp.seed << "\n"
     << "force_run = " << (hp.force_run ? "true" : "false") << "\n"
     << "dsm_penalty = " << format_double(hp.dsm_penalty) << "\n"
     << "ce_value = " << (hp.ce_value ? "true" : "false") << "\n"
     << "ce_sample = " << (hp.ce_sample ? "true" : "false") << "\n";
  return os.str();
}

std::string config_hash(const ScenarioConfig& cfg) {
  return to_hex(fnv1a64(serialize_config(cfg)));
}

}  // namespace cdqn
