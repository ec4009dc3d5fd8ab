#pragma once

#include <string>
#include <vector>

namespace ems {

// Base quantities of the per-unit system. Powers are carried in kW/kvar at
// the interfaces and converted through these bases inside the solvers.
struct Bases {
    double s_kva = 100.0;   // three-phase apparent power base
    double v_ph_ph = 400.0; // line-to-line voltage base, V
    double f_hz = 50.0;

    double z_ohm() const { return v_ph_ph * v_ph_ph / (s_kva * 1000.0); }
    double p_to_pu(double kw) const { return kw / s_kva; }
    double p_from_pu(double pu) const { return pu * s_kva; }
    double f_to_pu(double hz) const { return hz / f_hz; }
    double f_from_pu(double pu) const { return pu * f_hz; }
};

struct Bus {
    int id = 0;             // 1-based, contiguous
    double p_load_rated = 0.0; // kW
    double q_load_rated = 0.0; // kvar
};

struct Line {
    int from_bus = 0;
    int to_bus = 0;
    double r_ohm = 0.0;
    double x_ohm = 0.0;
};

// P-f and Q-V droop parameters. m_p is stored in Hz/kW; config files give
// it in rad/s/kW and it is divided by 2*pi at load time.
struct DroopParams {
    double m_p = 0.0;  // Hz/kW
    double n_q = 0.0;  // V/kvar
    double f_n = 1.0;  // p.u. of f_hz
    double v_n = 1.0;  // p.u. of v_ph_ph
};

struct PvArray {
    int n_panels = 0;
    double c1 = 0.0; // W per (W/m^2)
    double c2 = 0.0; // W
};

struct BatteryPack {
    double v_bat = 0.0;       // V
    double c_rating = 0.0;    // Ah
    double soc = 50.0;        // %
    double soc_min = 10.0;
    double soc_max = 90.0;
};

struct Dg {
    int bus = 0;
    DroopParams droop;
    PvArray pv;
    BatteryPack battery;
    double p_inv_max = 0.0; // kW
};

struct Microgrid {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Dg> dgs;
    Bases bases;
    double rated_load_total = 0.0; // kW, sum of bus ratings

    int n_buses() const { return static_cast<int>(buses.size()); }
    int n_dgs() const { return static_cast<int>(dgs.size()); }
};

// Parses the JSON network document and checks all structural invariants.
// Throws std::runtime_error naming the offending element on failure.
Microgrid load_network(const std::string& config_text);

// Re-checks every model invariant; returns human-readable violations.
// An empty result means the model is consistent.
std::vector<std::string> validate(const Microgrid& mg);

} // namespace ems
