#include "ems/opf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ems/profiles.hpp"

namespace ems {

SocState soc_update(const SocState& state, const std::vector<double>& p_bat_kw,
                    double dt_hours, const std::vector<Dg>& dgs) {
    if (dt_hours <= 0.0) throw std::invalid_argument("dt must be positive");
    if (state.soc.size() != p_bat_kw.size() || state.soc.size() != dgs.size())
        throw std::invalid_argument("soc/p_bat/dg arity mismatch");
    SocState next;
    next.soc.resize(state.soc.size());
    for (std::size_t i = 0; i < state.soc.size(); ++i) {
        const auto& bat = dgs[i].battery;
        const double c_prev = state.soc[i] / 100.0 * bat.c_rating; // Ah
        const double c_next = c_prev - (p_bat_kw[i] * 1000.0 / bat.v_bat) * dt_hours;
        next.soc[i] = c_next / bat.c_rating * 100.0;
        if (next.soc[i] < 0.0 || next.soc[i] > 100.0)
            throw std::domain_error("SoC left the physical [0, 100] range on dg " +
                                    std::to_string(i + 1));
    }
    return next;
}

std::vector<std::vector<double>> dsoc_matrix(const std::vector<double>& soc) {
    const std::size_t n = soc.size();
    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i][j] = std::abs(soc[i] - soc[j]);
    return m;
}

double dsoc_sum(const std::vector<double>& soc) {
    if (soc.size() < 2) throw std::invalid_argument("dsoc needs at least two DGs");
    double s = 0.0;
    for (double a : soc)
        for (double b : soc) s += std::abs(a - b);
    return s;
}

FnBand fn_band(double load_mult_pu) {
    if (load_mult_pu <= 0.0) throw std::invalid_argument("load multiplier must be positive");
    // Heavier load -> lower band, so the dataset frequency droops against
    // total power. Six steps of floor offset keep the heaviest band away
    // from the 0.99 controller clamp, leaving extrapolation headroom for
    // loads beyond the training peak.
    const double u = std::clamp((1.0 - load_mult_pu) / 0.05, 0.0, 20.0);
    const int k = std::min(static_cast<int>(u), 19);
    const int j = std::clamp(k + 6, 0, 19);
    FnBand band;
    band.lower = 0.990 + 0.001 * j;
    band.upper = band.lower + 0.001;
    // Preferred common f_n level: traverses the band edge-to-edge so the
    // level is a globally linear function of the load across all bands,
    // which keeps the solved f a smooth monotone image of the load.
    band.f_pref = band.lower + 0.001 * std::clamp(u - k, 0.0, 1.0);
    return band;
}

OpfStepResult evaluate_candidate(const OpfStepInput& input, const std::vector<double>& f_n) {
    const Microgrid& mg = *input.mg;
    const auto& lim = input.limits;
    OpfStepResult res;
    res.f_n = f_n;

    const LoadSnapshot loads = LoadSnapshot::scaled(mg, input.load_mult);
    res.op = solve_droop_pf(mg, f_n, loads);
    res.p_loss = res.op.p_loss;

    for (int d = 0; d < mg.n_dgs(); ++d) {
        res.p_pv.push_back(array_power(input.irr[d], mg.dgs[d].pv));
        res.p_bat.push_back(res.op.p_inv[d] - res.p_pv.back()); // DG-internal power balance
    }

    bool soc_physical = true;
    try {
        res.soc_next = soc_update(input.soc_state, res.p_bat, input.dt_hours, mg.dgs);
    } catch (const std::domain_error&) {
        soc_physical = false;
        res.soc_next = input.soc_state;
        for (std::size_t i = 0; i < res.soc_next.soc.size(); ++i) {
            const double k = 1000.0 * input.dt_hours /
                             (mg.dgs[i].battery.v_bat * mg.dgs[i].battery.c_rating) * 100.0;
            res.soc_next.soc[i] = std::clamp(input.soc_state.soc[i] - k * res.p_bat[i], 0.0, 100.0);
        }
        res.violations.push_back("soc left physical range");
    }
    res.dsoc_sum = dsoc_sum(res.soc_next.soc);

    try {
        res.err_max = power_sharing_error(res.op.p_inv).err_max;
    } catch (const std::invalid_argument&) {
        res.err_max = 0.0;
        res.violations.push_back("zero average power");
    }

    if (res.err_max > lim.err_max_pct) res.violations.push_back("sharing error above limit");
    if (res.p_loss > lim.loss_frac * mg.rated_load_total) res.violations.push_back("losses above limit");
    if (res.op.v.minCoeff() < lim.v_min || res.op.v.maxCoeff() > lim.v_max)
        res.violations.push_back("voltage outside limits");
    if (res.op.f < lim.f_min || res.op.f > lim.f_max) res.violations.push_back("frequency outside limits");
    for (int d = 0; d < mg.n_dgs(); ++d) {
        if (std::abs(res.p_bat[d]) > lim.p_bat_max_kw) {
            res.violations.push_back("battery converter limit exceeded");
            break;
        }
        if (std::abs(res.op.p_inv[d]) > mg.dgs[d].p_inv_max) {
            res.violations.push_back("inverter rating exceeded");
            break;
        }
    }
    if (soc_physical)
        for (std::size_t i = 0; i < res.soc_next.soc.size(); ++i)
            if (res.soc_next.soc[i] < mg.dgs[i].battery.soc_min ||
                res.soc_next.soc[i] > mg.dgs[i].battery.soc_max) {
                res.violations.push_back("soc outside operating window");
                break;
            }
    double pair_max = 0.0;
    for (double a : res.soc_next.soc)
        for (double b : res.soc_next.soc) pair_max = std::max(pair_max, std::abs(a - b));
    if (pair_max > lim.dsoc_pair_max) res.violations.push_back("pairwise soc spread above limit");

    res.feasible = res.violations.empty();
    return res;
}

namespace {

// Shift the whole candidate so every component fits the band, preserving
// the differentials whenever the spread allows it.
void project_into_band(std::vector<double>& f_n, const FnBand& band) {
    const auto [mn, mx] = std::minmax_element(f_n.begin(), f_n.end());
    if (*mx - *mn > band.upper - band.lower) {
        for (auto& v : f_n) v = std::clamp(v, band.lower, band.upper);
        return;
    }
    double shift = 0.0;
    if (*mn < band.lower) shift = band.lower - *mn;
    if (*mx + shift > band.upper) shift = band.upper - *mx;
    for (auto& v : f_n) v += shift;
}

// Candidate that equalizes next-step SoC assuming the current frequency and
// total battery power, expressed through the droop law.
std::vector<double> balancing_candidate(const OpfStepInput& input, const OpfStepResult& at,
                                        double blend, double target_f) {
    const Microgrid& mg = *input.mg;
    const int n = mg.n_dgs();
    std::vector<double> k(n), p_star(n);
    double sum_soc_over_k = 0.0, sum_inv_k = 0.0, p_tot = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& bat = mg.dgs[i].battery;
        k[i] = 1000.0 * input.dt_hours / (bat.v_bat * bat.c_rating) * 100.0; // %SoC per kW
        sum_soc_over_k += input.soc_state.soc[i] / k[i];
        sum_inv_k += 1.0 / k[i];
        p_tot += at.p_bat[i];
    }
    const double s_target = (sum_soc_over_k - p_tot) / sum_inv_k;
    const double p_avg = p_tot / n;
    std::vector<double> f_n(n);
    for (int i = 0; i < n; ++i) {
        p_star[i] = (input.soc_state.soc[i] - s_target) / k[i];
        // blend=1 is full balancing, blend=0 keeps equal battery powers
        const double p_bat_i = p_avg + blend * (p_star[i] - p_avg);
        const double p_inv_pu = mg.bases.p_to_pu(p_bat_i + at.p_pv[i]);
        const double m_p_pu = mg.dgs[i].droop.m_p * mg.bases.s_kva / mg.bases.f_hz;
        f_n[i] = at.op.f + m_p_pu * p_inv_pu;
    }
    // Re-anchor the common level on the band's preferred f_n level; the
    // differentials carry the balancing action.
    const double mean = std::accumulate(f_n.begin(), f_n.end(), 0.0) / n;
    for (auto& v : f_n) v += target_f - mean;
    return f_n;
}

} // namespace

OpfStepResult solve_step(const OpfStepInput& input, const FnBand& band) {
    const Microgrid& mg = *input.mg;
    const int n = mg.n_dgs();
    if (static_cast<int>(input.irr.size()) != n) throw std::invalid_argument("one irradiance per DG");

    // Start at the band's frequency target with equal setpoints.
    std::vector<double> f_n(n, std::clamp(band.f_pref, band.lower, band.upper));
    OpfStepResult best = evaluate_candidate(input, f_n);

    // Fixed-point refinement of the SoC-equalizing candidate; two passes
    // absorb the loss/frequency coupling.
    OpfStepResult probe = best;
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<double> cand = balancing_candidate(input, probe, 1.0, band.f_pref);
        project_into_band(cand, band);
        probe = evaluate_candidate(input, cand);
        const bool better = (probe.feasible && !best.feasible) ||
                            (probe.feasible == best.feasible && probe.dsoc_sum < best.dsoc_sum);
        if (better) best = probe;
    }

    // If full balancing violates a constraint, back off along the blend
    // between equal battery powers and full equalization.
    if (!best.feasible) {
        double lo = 0.0, hi = 1.0;
        OpfStepResult anchor = probe;
        for (int it = 0; it < 12; ++it) {
            const double mid = 0.5 * (lo + hi);
            std::vector<double> cand = balancing_candidate(input, anchor, mid, band.f_pref);
            project_into_band(cand, band);
            OpfStepResult r = evaluate_candidate(input, cand);
            if (r.feasible) {
                lo = mid;
                if (!best.feasible || r.dsoc_sum < best.dsoc_sum) best = std::move(r);
            } else {
                hi = mid;
            }
        }
    }

    // Coordinate polish: small per-DG moves, accepted when they reduce the
    // objective without losing feasibility.
    if (best.dsoc_sum > 1e-6) {
        for (double step = 5e-5; step >= 1e-6; step *= 0.2) {
            bool improved = true;
            int guard = 0;
            while (improved && guard++ < 6) {
                improved = false;
                for (int d = 0; d < n; ++d) {
                    for (double sgn : {+1.0, -1.0}) {
                        std::vector<double> cand = best.f_n;
                        cand[d] = std::clamp(cand[d] + sgn * step, band.lower, band.upper);
                        if (cand == best.f_n) continue;
                        OpfStepResult r = evaluate_candidate(input, cand);
                        const bool better = (r.feasible && !best.feasible) ||
                                            (r.feasible == best.feasible && r.dsoc_sum < best.dsoc_sum - 1e-12);
                        if (better) {
                            best = std::move(r);
                            improved = true;
                        }
                    }
                }
            }
        }
    }
    return best;
}

OpfStepResult brute_force_step(const OpfStepInput& input, const FnBand& band, double resolution_pu) {
    const int n = input.mg->n_dgs();
    const int steps = static_cast<int>(std::llround((band.upper - band.lower) / resolution_pu));
    const double total = std::pow(steps + 1.0, n);
    if (total > 2e5) throw std::invalid_argument("brute-force grid too large");

    std::vector<int> idx(n, 0);
    bool have_best = false;
    OpfStepResult best;
    while (true) {
        std::vector<double> f_n(n);
        for (int d = 0; d < n; ++d) f_n[d] = band.lower + idx[d] * resolution_pu;
        OpfStepResult r = evaluate_candidate(input, f_n);
        if (r.feasible && (!have_best || r.dsoc_sum < best.dsoc_sum)) {
            best = std::move(r);
            have_best = true;
        }
        int d = 0;
        while (d < n && ++idx[d] > steps) idx[d++] = 0;
        if (d == n) break;
    }
    if (!have_best) throw std::runtime_error("all grid points infeasible");
    return best;
}

} // namespace ems
