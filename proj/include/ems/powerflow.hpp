#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ems/netmodel.hpp"

namespace ems {

// Per-bus loads at one instant, kW/kvar.
struct LoadSnapshot {
    std::vector<double> p_kw;
    std::vector<double> q_kvar;

    static LoadSnapshot scaled(const Microgrid& mg, double load_mult);
    double total_p() const;
};

// Converged steady state of the droop-controlled island.
struct OperatingPoint {
    Eigen::VectorXd v;      // p.u., per bus
    Eigen::VectorXd theta;  // rad, per bus (reference bus = 0)
    double f = 1.0;         // p.u., shared system frequency
    std::vector<double> p_inv; // kW, per DG
    std::vector<double> q_inv; // kvar, per DG
    double p_loss = 0.0;    // kW
    double residual = 0.0;  // final mismatch inf-norm, p.u.
    int iterations = 0;
};

struct PowerFlowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Newton solve of the full droop power flow. Unknowns are the bus angles
// (minus the reference), all voltage magnitudes, and the system frequency;
// DG injections are tied to f and V through the droop laws. The frequency
// acts as a distributed slack: no single bus absorbs the imbalance.
OperatingPoint solve_droop_pf(const Microgrid& mg,
                              const std::vector<double>& f_n_pu,
                              const LoadSnapshot& loads,
                              double tol = 1e-10,
                              int max_iter = 50);

// Residual of the full mismatch system at a given state; used by tests to
// re-check convergence independently of the Newton loop.
Eigen::VectorXd droop_pf_residual(const Microgrid& mg,
                                  const std::vector<double>& f_n_pu,
                                  const LoadSnapshot& loads,
                                  const Eigen::VectorXd& v,
                                  const Eigen::VectorXd& theta,
                                  double f_pu);

struct SharingError {
    std::vector<double> err_per_dg; // %
    double err_max = 0.0;           // %
};

// Active power sharing error of each DG against the fleet average.
// Throws std::invalid_argument when the average power is zero.
SharingError power_sharing_error(const std::vector<double>& p_inv_kw);

} // namespace ems
