#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ems/netmodel.hpp"
#include "ems/neural.hpp"
#include "ems/powerflow.hpp"

namespace ems {

struct IrrEvent {
    double t_s = 0.0;
    std::vector<double> irr; // W/m^2 per DG
};

struct LoadEvent {
    double t_s = 0.0;
    int bus = 0;
    double dp_kw = 0.0;
    double dq_kvar = 0.0;
};

struct Scenario {
    std::vector<double> initial_soc; // %
    double fixed_f_n_hz = 50.0;      // baseline droop setpoint
    std::vector<IrrEvent> irr_events;
    std::vector<LoadEvent> load_events;
    double load_mult = 1.0;          // p.u. of rated total
    double control_period_s = 0.1;
    double duration_s = 40.0;
    double ems_enable_time_s = 6.0;
    double soc_time_scale = 900.0;   // accelerates SoC motion to figure scale
};

// One sample per control step.
struct SimSample {
    double t_s = 0.0;
    double f = 1.0; // p.u.
    std::vector<double> f_n;     // p.u.
    std::vector<double> p_pv;    // kW
    std::vector<double> p_inv;   // kW
    std::vector<double> p_bat;   // kW
    std::vector<double> soc;     // %
    double soc_avg = 0.0;
    std::vector<double> soc_dif; // %
    double v_min = 1.0;          // p.u.
    bool fn_clamped = false;
};

struct SimTrace {
    std::vector<SimSample> samples;
    std::string diagnostic; // nonempty if the run truncated
};

// Controllers: fixed droop, one central model over (p_pv..., f), or one
// 2-input model per DG.
struct FixedController {
    double f_n_pu = 1.0;
};
using Controller = std::variant<FixedController, NnModel, std::vector<NnModel>>;

// Per-DG deviation from the fleet-mean SoC; deviations sum to zero.
std::vector<double> soc_dif(const std::vector<double>& soc);

// Quasi-static closed loop: per control step the scheduled events are
// applied, the controller maps (p_pv, previous solved f) to f_n, the droop
// power flow is solved and the batteries integrate p_inv - p_pv. Before
// ems_enable_time_s model controllers fall back to the scenario's fixed
// setpoint. Controller outputs are clamped to [0.99, 1.01] and flagged.
SimTrace run(const Microgrid& mg, const Scenario& scenario, const Controller& controller);

struct CompareReport {
    double a_final_max_soc_dif = 0.0;
    double b_final_max_soc_dif = 0.0;
    double a_pbat_spread_pct = 0.0; // post-settling max |p_bat_i - mean| / mean|p_bat|
    double b_pbat_spread_pct = 0.0;
    double max_abs_f_delta = 0.0;
    double max_abs_soc_delta = 0.0;
};

// Side-by-side metrics for two traces of the same scenario timeline.
CompareReport compare(const SimTrace& a, const SimTrace& b);

// Battery-power spread over the tail of a trace (from t_from_s on).
double pbat_spread_pct(const SimTrace& trace, double t_from_s);

Scenario load_scenario(const std::string& json_text);
std::string trace_to_csv(const SimTrace& trace);
SimTrace trace_from_csv(const std::string& csv_text);

} // namespace ems
