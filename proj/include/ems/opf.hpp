#pragma once

#include <vector>

#include "ems/netmodel.hpp"
#include "ems/powerflow.hpp"

namespace ems {

struct SocState {
    std::vector<double> soc; // %
};

struct OpfLimits {
    double err_max_pct = 60.0;     // sharing error bound
    double loss_frac = 0.1;        // p_loss <= loss_frac * rated_load_total
    double v_min = 0.95;           // p.u.
    double v_max = 1.0;
    double f_min = 0.99;
    double f_max = 1.01;
    double dsoc_pair_max = 10.0;   // % pairwise bound
    double p_bat_max_kw = 70.0;    // per-DG converter envelope
};

struct FnBand {
    double lower = 0.0;  // p.u.
    double upper = 0.0;
    double f_pref = 0.0; // preferred common f_n level, strictly inside the band
};

// Load-dependent f_n box. The load argument is normalized to the horizon
// peak, so it lives in (0, 1]. Heavier load maps to a lower band, which
// keeps the solved frequency drooping against total power in the dataset.
// The six-step floor offset leaves clamp headroom for controllers asked
// to extrapolate past the training peak.
FnBand fn_band(double load_mult_pu);

struct OpfStepInput {
    const Microgrid* mg = nullptr;
    SocState soc_state;
    std::vector<double> irr;   // W/m^2 per DG
    double load_mult = 1.0;    // p.u. of rated total
    double dt_hours = 1.0 / 12.0;
    OpfLimits limits;
};

struct OpfStepResult {
    std::vector<double> f_n;     // p.u.
    OperatingPoint op;
    std::vector<double> p_pv;    // kW
    std::vector<double> p_bat;   // kW
    SocState soc_next;
    double dsoc_sum = 0.0;       // %SoC, objective value
    double err_max = 0.0;        // %
    double p_loss = 0.0;         // kW
    bool feasible = false;
    std::vector<std::string> violations;
};

// Battery charge integration; positive p_bat discharges. A result outside
// [0, 100] is a hard fault (throws); outside the pack's [soc_min, soc_max]
// is a constraint matter the caller flags.
SocState soc_update(const SocState& state,
                    const std::vector<double>& p_bat_kw,
                    double dt_hours,
                    const std::vector<Dg>& dgs);

// Sum over all ordered pairs of |SoC_i - SoC_j|; zero iff all equal.
double dsoc_sum(const std::vector<double>& soc);
std::vector<std::vector<double>> dsoc_matrix(const std::vector<double>& soc);

// One SoC-balancing step: choose f_n inside the band to minimize the
// pairwise SoC spread after this step's charge update, subject to the
// sharing, loss, voltage, frequency and SoC limits. Infeasible instants
// return the least-violating point with feasible=false.
OpfStepResult solve_step(const OpfStepInput& input, const FnBand& band);

// Exhaustive grid evaluation over the same band; the correctness oracle
// for solve_step. Throws when every grid point violates a constraint.
OpfStepResult brute_force_step(const OpfStepInput& input, const FnBand& band,
                               double resolution_pu);

// Evaluates one f_n candidate: power flow, DG power split, SoC update and
// every constraint. Shared by the solver, the oracle and the tests.
OpfStepResult evaluate_candidate(const OpfStepInput& input,
                                 const std::vector<double>& f_n);

} // namespace ems
