#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cdqn/agents.hpp"
#include "cdqn/env.hpp"
#include "cdqn/equilibrium.hpp"
#include "cdqn/market.hpp"
#include "cdqn/scenario.hpp"
#include "cdqn/trainer.hpp"
#include "cdqn/verify.hpp"

namespace py = pybind11;
using namespace cdqn;

PYBIND11_MODULE(cdqn, m) {
  m.doc() = "Microgrid energy trading with correlated deep Q-learning";

  // ---- scenario ----------------------------------------------------------
  py::class_<DeviceSpec>(m, "DeviceSpec")
      .def(py::init<>())
      .def_readwrite("id", &DeviceSpec::id)
      .def_readwrite("power_kw", &DeviceSpec::power_kw)
      .def_readwrite("window_start", &DeviceSpec::window_start)
      .def_readwrite("window_end", &DeviceSpec::window_end)
      .def_readwrite("duration_h", &DeviceSpec::duration_h);

  py::class_<EssSpec>(m, "EssSpec")
      .def(py::init<>())
      .def_readwrite("capacity_kwh", &EssSpec::capacity_kwh)
      .def_readwrite("charge_rate_kw", &EssSpec::charge_rate_kw)
      .def_readwrite("soc_init", &EssSpec::soc_init)
      .def_readwrite("soc_min", &EssSpec::soc_min)
      .def_readwrite("soc_max", &EssSpec::soc_max);

  py::class_<TariffSchedule>(m, "TariffSchedule")
      .def(py::init<>())
      .def_readwrite("buy_price", &TariffSchedule::buy_price)
      .def_readwrite("sell_ratio", &TariffSchedule::sell_ratio)
      .def("buy_at", &TariffSchedule::buy_at)
      .def("sell_at", &TariffSchedule::sell_at);

  py::class_<PvProfile>(m, "PvProfile")
      .def(py::init<>())
      .def_readwrite("power_kw", &PvProfile::power_kw)
      .def_readwrite("cost_per_active_hour", &PvProfile::cost_per_active_hour)
      .def("power_at", &PvProfile::power_at);

  py::class_<Hyperparams>(m, "Hyperparams")
      .def(py::init<>())
      .def_readwrite("bid_grid", &Hyperparams::bid_grid)
      .def_readwrite("horizon_h", &Hyperparams::horizon_h)
      .def_readwrite("episodes", &Hyperparams::episodes)
      .def_readwrite("alpha_lr", &Hyperparams::alpha_lr)
      .def_readwrite("gamma", &Hyperparams::gamma)
      .def_readwrite("epsilon_start", &Hyperparams::epsilon_start)
      .def_readwrite("epsilon_end", &Hyperparams::epsilon_end)
      .def_readwrite("epsilon_decay_episodes", &Hyperparams::epsilon_decay_episodes)
      .def_readwrite("replay_capacity", &Hyperparams::replay_capacity)
      .def_readwrite("batch_size", &Hyperparams::batch_size)
      .def_readwrite("train_every_episodes", &Hyperparams::train_every_episodes)
      .def_readwrite("target_sync_multiple", &Hyperparams::target_sync_multiple)
      .def_readwrite("train_steps_per_event", &Hyperparams::train_steps_per_event)
      .def_readwrite("seq_len", &Hyperparams::seq_len)
      .def_readwrite("hidden_size", &Hyperparams::hidden_size)
      .def_readwrite("num_lstm_layers", &Hyperparams::num_lstm_layers)
      .def_readwrite("seed", &Hyperparams::seed)
      .def_readwrite("force_run", &Hyperparams::force_run)
      .def_readwrite("dsm_penalty", &Hyperparams::dsm_penalty)
      .def_readwrite("ce_value", &Hyperparams::ce_value)
      .def_readwrite("ce_sample", &Hyperparams::ce_sample);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init<>())
      .def_readwrite("devices", &ScenarioConfig::devices)
      .def_readwrite("ess", &ScenarioConfig::ess)
      .def_readwrite("tariff", &ScenarioConfig::tariff)
      .def_readwrite("pv", &ScenarioConfig::pv)
      .def_readwrite("hyper", &ScenarioConfig::hyper);

  m.def("default_scenario", &default_scenario);
  m.def("load_config", &load_config, py::arg("path"));
  m.def("parse_config", &parse_config, py::arg("text"), py::arg("origin") = "<string>");
  m.def("serialize_config", &serialize_config);
  m.def("validate_config", &validate_config);
  m.def("config_hash", &config_hash);

  // ---- market --------------------------------------------------------
  py::class_<Offer>(m, "Offer")
      .def(py::init<int, double, double>(), py::arg("supplier_id"), py::arg("quantity_kwh"),
           py::arg("bid"))
      .def_readwrite("supplier_id", &Offer::supplier_id)
      .def_readwrite("quantity_kwh", &Offer::quantity_kwh)
      .def_readwrite("bid", &Offer::bid);

  py::class_<SupplierDispatch>(m, "SupplierDispatch")
      .def_readonly("supplier_id", &SupplierDispatch::supplier_id)
      .def_readonly("in_mg_kwh", &SupplierDispatch::in_mg_kwh)
      .def_readonly("to_grid_kwh", &SupplierDispatch::to_grid_kwh)
      .def_readonly("avg_sell_price", &SupplierDispatch::avg_sell_price);

  py::class_<ClearingResult>(m, "ClearingResult")
      .def_readonly("clearing_price", &ClearingResult::clearing_price)
      .def_readonly("dispatch", &ClearingResult::dispatch)
      .def_readonly("grid_import_kwh", &ClearingResult::grid_import_kwh)
      .def_readonly("consumer_price", &ClearingResult::consumer_price)
      .def("total_export_kwh", &ClearingResult::total_export_kwh);

  m.def("clear_market", &clear_market, py::arg("offers"), py::arg("total_demand_kwh"),
        py::arg("grid_buy"), py::arg("grid_sell"));

  // ---- environment -----------------------------------------------------
  py::enum_<EssMode>(m, "EssMode")
      .value("Idle", EssMode::Idle)
      .value("Charge", EssMode::Charge)
      .value("Discharge", EssMode::Discharge);

  py::enum_<AgentKind>(m, "AgentKind")
      .value("Dsm", AgentKind::Dsm)
      .value("Ess", AgentKind::Ess)
      .value("Pv", AgentKind::Pv);

  py::class_<EnvState>(m, "EnvState")
      .def(py::init<>())
      .def_readwrite("hour", &EnvState::hour)
      .def_readwrite("waiting", &EnvState::waiting)
      .def_readwrite("service_left", &EnvState::service_left)
      .def_readwrite("soc", &EnvState::soc)
      .def("serviced", &EnvState::serviced);

  py::class_<JointAction>(m, "JointAction")
      .def(py::init<>())
      .def_readwrite("dsm_on", &JointAction::dsm_on)
      .def_readwrite("ess_mode", &JointAction::ess_mode)
      .def_readwrite("ess_bid_idx", &JointAction::ess_bid_idx)
      .def_readwrite("pv_bid_idx", &JointAction::pv_bid_idx);

  py::class_<FeasibleMasks>(m, "FeasibleMasks")
      .def_readonly("dsm_eligible", &FeasibleMasks::dsm_eligible)
      .def_readonly("dsm_forced", &FeasibleMasks::dsm_forced)
      .def_readonly("charge_ok", &FeasibleMasks::charge_ok)
      .def_readonly("discharge_ok", &FeasibleMasks::discharge_ok)
      .def_readonly("bid_ok", &FeasibleMasks::bid_ok)
      .def_readonly("pv_active", &FeasibleMasks::pv_active);

  py::class_<StepOutcome>(m, "StepOutcome")
      .def_readonly("rewards", &StepOutcome::rewards)
      .def_readonly("next_state", &StepOutcome::next_state)
      .def_readonly("clearing", &StepOutcome::clearing)
      .def_readonly("forced_devices", &StepOutcome::forced_devices)
      .def_readonly("dsm_kwh", &StepOutcome::dsm_kwh)
      .def_readonly("ess_charge_kwh", &StepOutcome::ess_charge_kwh)
      .def_readonly("pv_kwh", &StepOutcome::pv_kwh);

  m.def("reset", &reset);
  m.def("dsm_power", &dsm_power);
  m.def("soc_update", &soc_update);
  m.def("feasible_masks", &feasible_masks);
  m.def("step", &step, py::arg("state"), py::arg("action"), py::arg("cfg"));

  // ---- agents / joint space ---------------------------------------------
  py::class_<JointActionSpace>(m, "JointActionSpace")
      .def(py::init<int, int>(), py::arg("num_devices"), py::arg("num_bids"))
      .def_static("from_config", &JointActionSpace::from_config)
      .def("size", &JointActionSpace::size)
      .def("dsm_count", &JointActionSpace::dsm_count)
      .def("ess_count", &JointActionSpace::ess_count)
      .def("pv_count", &JointActionSpace::pv_count)
      .def("encode", &JointActionSpace::encode)
      .def("action", &JointActionSpace::action)
      .def("index_of", &JointActionSpace::index_of);

  m.def("joint_feasible_mask", &joint_feasible_mask);
  m.def("encode_state", &encode_state);
  m.def("scenario_fingerprint", &scenario_fingerprint);

  // ---- correlated equilibrium --------------------------------------------
  py::class_<GameMatrix>(m, "GameMatrix")
      .def(py::init<>())
      .def_readwrite("num_agents", &GameMatrix::num_agents)
      .def_readwrite("local_counts", &GameMatrix::local_counts)
      .def_readwrite("feasible", &GameMatrix::feasible)
      .def_readwrite("q", &GameMatrix::q)
      .def("joint_size", &GameMatrix::joint_size);

  py::class_<CeDistribution>(m, "CeDistribution")
      .def_readonly("prob", &CeDistribution::prob)
      .def_readonly("objective", &CeDistribution::objective);

  m.def("solve_ce", &solve_ce);
  m.def("select_joint_action", &select_joint_action);
  m.def("ce_residual", &ce_residual);

  // ---- training ----------------------------------------------------------
  py::enum_<TrainMode>(m, "TrainMode")
      .value("Cdqn", TrainMode::Cdqn)
      .value("Independent", TrainMode::Independent);

  py::class_<RunMetrics>(m, "RunMetrics")
      .def_readonly("episodes", &RunMetrics::episodes)
      .def_readonly("reward", &RunMetrics::reward)
      .def_readonly("moving_avg", &RunMetrics::moving_avg)
      .def_readonly("ce_solves", &RunMetrics::ce_solves)
      .def_readonly("mean_residual", &RunMetrics::mean_residual)
      .def_readonly("train_events", &RunMetrics::train_events)
      .def_readonly("target_syncs", &RunMetrics::target_syncs)
      .def_readonly("transitions_per_agent", &RunMetrics::transitions_per_agent)
      .def_readonly("wall_seconds", &RunMetrics::wall_seconds)
      .def_readonly("actions", &RunMetrics::actions);

  py::class_<Policy>(m, "Policy")
      .def_readonly("mode", &Policy::mode)
      .def_readonly("fingerprint", &Policy::fingerprint);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("metrics", &TrainResult::metrics)
      .def_readonly("policy", &TrainResult::policy);

  py::class_<HourTrace>(m, "HourTrace")
      .def_readonly("hour", &HourTrace::hour)
      .def_readonly("joint_idx", &HourTrace::joint_idx)
      .def_readonly("dsm_on", &HourTrace::dsm_on)
      .def_readonly("ess_mode", &HourTrace::ess_mode)
      .def_readonly("ess_bid", &HourTrace::ess_bid)
      .def_readonly("pv_bid", &HourTrace::pv_bid)
      .def_readonly("clearing_price", &HourTrace::clearing_price)
      .def_readonly("grid_import_kwh", &HourTrace::grid_import_kwh)
      .def_readonly("grid_export_kwh", &HourTrace::grid_export_kwh)
      .def_readonly("rewards", &HourTrace::rewards)
      .def_readonly("soc", &HourTrace::soc);

  py::class_<EvalTrace>(m, "EvalTrace")
      .def_readonly("hours", &EvalTrace::hours)
      .def_readonly("totals", &EvalTrace::totals);

  m.def(
      "train",
      [](const ScenarioConfig& cfg, std::uint64_t seed, const std::string& mode,
         bool record_actions) {
        TrainOptions opts;
        opts.mode = mode == "independent" ? TrainMode::Independent : TrainMode::Cdqn;
        opts.record_actions = record_actions;
        return run_training(cfg, seed, opts);
      },
      py::arg("cfg"), py::arg("seed"), py::arg("mode") = "cdqn",
      py::arg("record_actions") = false,
      py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", &evaluate, py::arg("policy"), py::arg("cfg"),
        py::call_guard<py::gil_scoped_release>());
  m.def("write_training_outputs", &write_training_outputs, py::arg("out_dir"), py::arg("cfg"),
        py::arg("seed"), py::arg("result"));
  m.def("load_checkpoints", &load_checkpoints, py::arg("dir"), py::arg("cfg"), py::arg("mode"));
  m.def("run_tabular_cdqn", &run_tabular_cdqn, py::arg("cfg"), py::arg("seed"),
        py::arg("tabular_alpha") = 0.1, py::call_guard<py::gil_scoped_release>());

  py::class_<TabularRunResult>(m, "TabularRunResult")
      .def_readonly("greedy_totals", &TabularRunResult::greedy_totals)
      .def_readonly("greedy_joint_total", &TabularRunResult::greedy_joint_total)
      .def_readonly("greedy_actions", &TabularRunResult::greedy_actions);

  // ---- selfcheck -----------------------------------------------------
  py::class_<verify::SuiteResult>(m, "SuiteResult")
      .def_readonly("name", &verify::SuiteResult::name)
      .def_readonly("pass_", &verify::SuiteResult::pass)
      .def_readonly("summary", &verify::SuiteResult::summary)
      .def_readonly("failures", &verify::SuiteResult::failures);

  m.def("run_market_suite", &verify::run_market_suite);
  m.def("run_ce_suite", &verify::run_ce_suite);
  m.def("run_gradient_suite", &verify::run_gradient_suite);
}
