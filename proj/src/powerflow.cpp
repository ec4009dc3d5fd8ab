#include "ems/powerflow.hpp"

#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

namespace ems {

LoadSnapshot LoadSnapshot::scaled(const Microgrid& mg, double load_mult) {
    LoadSnapshot s;
    s.p_kw.reserve(mg.n_buses());
    s.q_kvar.reserve(mg.n_buses());
    for (const auto& b : mg.buses) {
        s.p_kw.push_back(b.p_load_rated * load_mult);
        s.q_kvar.push_back(b.q_load_rated * load_mult);
    }
    return s;
}

double LoadSnapshot::total_p() const {
    return std::accumulate(p_kw.begin(), p_kw.end(), 0.0);
}

namespace {

struct PfContext {
    int n = 0;
    int ref = 0; // reference-angle bus index
    Eigen::MatrixXd g, b; // bus admittance, p.u.
    std::vector<int> dg_at_bus; // -1 or DG index
    std::vector<double> p_load_pu, q_load_pu;
    std::vector<double> m_p_pu, n_q_pu, v_n_pu; // per DG
};

PfContext build_context(const Microgrid& mg, const LoadSnapshot& loads) {
    PfContext c;
    c.n = mg.n_buses();
    c.ref = 0;
    c.g = Eigen::MatrixXd::Zero(c.n, c.n);
    c.b = Eigen::MatrixXd::Zero(c.n, c.n);
    const double z_base = mg.bases.z_ohm();
    for (const auto& l : mg.lines) {
        const std::complex<double> z(l.r_ohm / z_base, l.x_ohm / z_base);
        const std::complex<double> y = 1.0 / z;
        const int i = l.from_bus - 1, j = l.to_bus - 1;
        c.g(i, i) += y.real();
        c.b(i, i) += y.imag();
        c.g(j, j) += y.real();
        c.b(j, j) += y.imag();
        c.g(i, j) -= y.real();
        c.b(i, j) -= y.imag();
        c.g(j, i) -= y.real();
        c.b(j, i) -= y.imag();
    }
    c.dg_at_bus.assign(c.n, -1);
    for (int d = 0; d < mg.n_dgs(); ++d) {
        c.dg_at_bus[mg.dgs[d].bus - 1] = d;
        const auto& dr = mg.dgs[d].droop;
        c.m_p_pu.push_back(dr.m_p * mg.bases.s_kva / mg.bases.f_hz);
        c.n_q_pu.push_back(dr.n_q * mg.bases.s_kva / mg.bases.v_ph_ph);
        c.v_n_pu.push_back(dr.v_n);
    }
    c.p_load_pu.resize(c.n);
    c.q_load_pu.resize(c.n);
    for (int i = 0; i < c.n; ++i) {
        c.p_load_pu[i] = mg.bases.p_to_pu(loads.p_kw[i]);
        c.q_load_pu[i] = mg.bases.p_to_pu(loads.q_kvar[i]);
    }
    return c;
}

// Calculated injections from the network state.
void calc_injections(const PfContext& c, const Eigen::VectorXd& v, const Eigen::VectorXd& th,
                     Eigen::VectorXd& p_calc, Eigen::VectorXd& q_calc) {
    p_calc.setZero(c.n);
    q_calc.setZero(c.n);
    for (int i = 0; i < c.n; ++i) {
        double p = 0.0, q = 0.0;
        for (int j = 0; j < c.n; ++j) {
            if (c.g(i, j) == 0.0 && c.b(i, j) == 0.0) continue;
            const double d = th(i) - th(j);
            const double cs = std::cos(d), sn = std::sin(d);
            p += v(j) * (c.g(i, j) * cs + c.b(i, j) * sn);
            q += v(j) * (c.g(i, j) * sn - c.b(i, j) * cs);
        }
        p_calc(i) = v(i) * p;
        q_calc(i) = v(i) * q;
    }
}

// Mismatch layout: [P rows for all buses, Q rows for all buses].
Eigen::VectorXd residual(const PfContext& c, const std::vector<double>& f_n,
                         const Eigen::VectorXd& v, const Eigen::VectorXd& th, double f) {
    Eigen::VectorXd p_calc, q_calc;
    calc_injections(c, v, th, p_calc, q_calc);
    Eigen::VectorXd g(2 * c.n);
    for (int i = 0; i < c.n; ++i) {
        double p_spec = -c.p_load_pu[i];
        double q_spec = -c.q_load_pu[i];
        const int d = c.dg_at_bus[i];
        if (d >= 0) {
            p_spec += (f_n[d] - f) / c.m_p_pu[d];
            if (c.n_q_pu[d] > 0.0)
                q_spec += (c.v_n_pu[d] - v(i)) / c.n_q_pu[d];
        }
        g(i) = p_calc(i) - p_spec;
        if (d >= 0 && c.n_q_pu[d] == 0.0)
            g(c.n + i) = v(i) - c.v_n_pu[d]; // stiff Q-V droop pins the voltage
        else
            g(c.n + i) = q_calc(i) - q_spec;
    }
    return g;
}

Eigen::MatrixXd jacobian(const PfContext& c, const Eigen::VectorXd& v, const Eigen::VectorXd& th) {
    const int n = c.n;
    Eigen::VectorXd p_calc, q_calc;
    calc_injections(c, v, th, p_calc, q_calc);

    // Unknown order: theta (all but ref), v (all), f.
    const int nth = n - 1;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    auto th_col = [&](int j) { return j < c.ref ? j : j - 1; };

    for (int i = 0; i < n; ++i) {
        const int d = c.dg_at_bus[i];
        const bool pinned_v = d >= 0 && c.n_q_pu[d] == 0.0;
        for (int j = 0; j < n; ++j) {
            const double dth = th(i) - th(j);
            const double cs = std::cos(dth), sn = std::sin(dth);
            double dp_dth, dp_dv, dq_dth, dq_dv;
            if (i == j) {
                dp_dth = -q_calc(i) - c.b(i, i) * v(i) * v(i);
                dp_dv = p_calc(i) / v(i) + c.g(i, i) * v(i);
                dq_dth = p_calc(i) - c.g(i, i) * v(i) * v(i);
                dq_dv = q_calc(i) / v(i) - c.b(i, i) * v(i);
            } else {
                if (c.g(i, j) == 0.0 && c.b(i, j) == 0.0) continue;
                dp_dth = v(i) * v(j) * (c.g(i, j) * sn - c.b(i, j) * cs);
                dp_dv = v(i) * (c.g(i, j) * cs + c.b(i, j) * sn);
                dq_dth = -v(i) * v(j) * (c.g(i, j) * cs + c.b(i, j) * sn);
                dq_dv = v(i) * (c.g(i, j) * sn - c.b(i, j) * cs);
            }
            if (j != c.ref) {
                jac(i, th_col(j)) = dp_dth;
                if (!pinned_v) jac(n + i, th_col(j)) = dq_dth;
            }
            jac(i, nth + j) = dp_dv;
            if (!pinned_v) jac(n + i, nth + j) = dq_dv;
        }
        if (d >= 0) {
            jac(i, 2 * n - 1) = 1.0 / c.m_p_pu[d]; // d(P_calc - P_spec)/df
            if (pinned_v)
                jac(n + i, nth + i) = 1.0;
            else
                jac(n + i, nth + i) += 1.0 / c.n_q_pu[d];
        }
    }
    return jac;
}

} // namespace

Eigen::VectorXd droop_pf_residual(const Microgrid& mg, const std::vector<double>& f_n_pu,
                                  const LoadSnapshot& loads, const Eigen::VectorXd& v,
                                  const Eigen::VectorXd& theta, double f_pu) {
    const auto c = build_context(mg, loads);
    return residual(c, f_n_pu, v, theta, f_pu);
}

OperatingPoint solve_droop_pf(const Microgrid& mg, const std::vector<double>& f_n_pu,
                              const LoadSnapshot& loads, double tol, int max_iter) {
    if (static_cast<int>(f_n_pu.size()) != mg.n_dgs())
        throw std::invalid_argument("one f_n per DG required");
    for (double fn : f_n_pu)
        if (fn < 0.9 || fn > 1.1) throw std::invalid_argument("f_n outside [0.9, 1.1] p.u.");

    const auto c = build_context(mg, loads);
    const int n = c.n;

    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd th = Eigen::VectorXd::Zero(n);
    double f = std::accumulate(f_n_pu.begin(), f_n_pu.end(), 0.0) / f_n_pu.size();

    Eigen::VectorXd g = residual(c, f_n_pu, v, th, f);
    double gnorm = g.lpNorm<Eigen::Infinity>();
    int it = 0;
    while (gnorm > tol && it < max_iter) {
        const Eigen::MatrixXd jac = jacobian(c, v, th);
        const Eigen::VectorXd dx = jac.partialPivLu().solve(g);
        double step = 1.0;
        for (int backtrack = 0; backtrack < 8; ++backtrack) {
            Eigen::VectorXd v2 = v, th2 = th;
            double f2 = f;
            int k = 0;
            for (int i = 0; i < n; ++i)
                if (i != c.ref) th2(i) -= step * dx(k++);
            for (int i = 0; i < n; ++i) v2(i) -= step * dx(k++);
            f2 -= step * dx(k);
            const Eigen::VectorXd g2 = residual(c, f_n_pu, v2, th2, f2);
            const double g2norm = g2.lpNorm<Eigen::Infinity>();
            if (g2norm < gnorm || backtrack == 7) {
                v = v2;
                th = th2;
                f = f2;
                g = g2;
                gnorm = g2norm;
                break;
            }
            step *= 0.5;
        }
        if (v.minCoeff() < 0.5)
            throw PowerFlowError("voltage collapse: |V| dropped below 0.5 p.u.");
        ++it;
    }
    if (gnorm > tol)
        throw PowerFlowError("power flow did not converge: residual " + std::to_string(gnorm) +
                             " after " + std::to_string(it) + " iterations");

    OperatingPoint op;
    op.v = v;
    op.theta = th;
    op.f = f;
    op.residual = gnorm;
    op.iterations = it;
    Eigen::VectorXd p_calc, q_calc;
    calc_injections(c, v, th, p_calc, q_calc);
    for (int d = 0; d < mg.n_dgs(); ++d) {
        const int bus = mg.dgs[d].bus - 1;
        op.p_inv.push_back(mg.bases.p_from_pu((f_n_pu[d] - f) / c.m_p_pu[d]));
        op.q_inv.push_back(mg.bases.p_from_pu(q_calc(bus) + c.q_load_pu[bus]));
    }
    op.p_loss = std::accumulate(op.p_inv.begin(), op.p_inv.end(), 0.0) - loads.total_p();
    return op;
}

SharingError power_sharing_error(const std::vector<double>& p_inv_kw) {
    if (p_inv_kw.empty()) throw std::invalid_argument("no DG powers given");
    const double avg = std::accumulate(p_inv_kw.begin(), p_inv_kw.end(), 0.0) / p_inv_kw.size();
    if (avg == 0.0) throw std::invalid_argument("zero average power: sharing error undefined");
    SharingError se;
    for (double p : p_inv_kw) {
        se.err_per_dg.push_back(std::abs(p - avg) / std::abs(avg) * 100.0);
        se.err_max = std::max(se.err_max, se.err_per_dg.back());
    }
    return se;
}

} // namespace ems
