#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ems/netmodel.hpp"

namespace ems {

// Irradiance and load time series driving dataset generation. Irradiance is
// per DG; the load multiplier scales every rated bus load uniformly.
struct Profile {
    double dt_minutes = 5.0;
    std::vector<std::vector<double>> irr; // [dg][t], W/m^2
    std::vector<double> load_mult;        // [t], p.u. of rated_load_total

    std::size_t n_steps() const { return load_mult.size(); }
};

struct PanelCurve {
    std::vector<std::pair<double, double>> samples; // (irr W/m^2, p_panel W)
};

// Least-squares line through the panel datasheet curve.
std::pair<double, double> fit_panel(const PanelCurve& curve);

// Single-panel output, clamped so zero irradiance gives exactly zero power.
double panel_power(double irr, double c1, double c2);

// Whole-array output in kW.
double array_power(double irr, const PvArray& pv);

// Piecewise-linear resample of an hourly series to dt-minute resolution.
// Endpoints are preserved; interior knots are hit exactly.
std::vector<double> interpolate_hourly(const std::vector<double>& hourly, double dt_minutes);

// Deterministic synthetic month: half-sine daylight irradiance with per-day
// cloudiness, per-DG smoothed random gains in [1, 1.14], and a diurnal load
// multiplier in [0.85, 1.5].
Profile synthesize_profile(int days, double dt_minutes, std::uint64_t seed, int n_dgs = 3);

// CSV with header t_iso,irr_dg1,...,load_mult.
Profile load_profile(const std::string& csv_text);
std::string profile_to_csv(const Profile& p);

PanelCurve load_panel_curve(const std::string& csv_text);

} // namespace ems
