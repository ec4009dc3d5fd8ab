#include "ems/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ems {

Dataset generate(const Microgrid& mg, const Profile& profile,
                 const std::vector<double>& initial_soc, bool banded, const OpfLimits& limits) {
    if (profile.n_steps() == 0) throw std::invalid_argument("empty profile");
    if (static_cast<int>(profile.irr.size()) != mg.n_dgs())
        throw std::invalid_argument("profile irradiance arity does not match DG count");
    if (static_cast<int>(initial_soc.size()) != mg.n_dgs())
        throw std::invalid_argument("one initial SoC per DG required");

    const double peak = *std::max_element(profile.load_mult.begin(), profile.load_mult.end());

    Dataset ds;
    ds.meta.banded = banded;
    ds.meta.n_dgs = mg.n_dgs();
    ds.meta.n_steps = profile.n_steps();
    ds.meta.peak_load_mult = peak;

    SocState state{initial_soc};
    for (std::size_t t = 0; t < profile.n_steps(); ++t) {
        OpfStepInput in;
        in.mg = &mg;
        in.soc_state = state;
        for (int d = 0; d < mg.n_dgs(); ++d) in.irr.push_back(profile.irr[d][t]);
        in.load_mult = profile.load_mult[t];
        in.dt_hours = profile.dt_minutes / 60.0;
        in.limits = limits;

        FnBand band;
        if (banded) {
            band = fn_band(profile.load_mult[t] / peak);
        } else {
            // Fixed bounds leave the common frequency level free; the solver
            // parks it just above the lower limit, which is where the LP-style
            // reference lands and where the droop relation degenerates.
            band.lower = 0.99;
            band.upper = 1.01;
            band.f_pref = 0.9901;
        }

        OpfStepResult step;
        try {
            step = solve_step(in, band);
        } catch (const PowerFlowError& e) {
            throw PowerFlowError("timestep " + std::to_string(t) + ": " + e.what());
        }

        DatasetRow row;
        row.t = static_cast<int>(t);
        row.p_pv = step.p_pv;
        row.f = step.op.f;
        row.f_n = step.f_n;
        row.soc = step.soc_next.soc;
        row.p_bat = step.p_bat;
        row.err_max = step.err_max;
        row.feasible = step.feasible;
        ds.rows.push_back(std::move(row));
        if (step.feasible) ++ds.meta.n_feasible;
        state = step.soc_next;
    }
    return ds;
}

DatasetSummary summarize(const Dataset& ds) {
    if (ds.rows.empty()) throw std::invalid_argument("empty dataset");
    DatasetSummary s;
    s.p_bat_min = ds.rows.front().p_bat.front();
    s.p_bat_max = s.p_bat_min;

    std::size_t charging = 0, near_low = 0, feasible = 0;
    double err_sum = 0.0;
    double sf = 0, sp = 0, sff = 0, spp = 0, sfp = 0;
    for (const auto& r : ds.rows) {
        for (double p : r.p_pv) s.p_pv_max = std::max(s.p_pv_max, p);
        double bat_sum = 0.0;
        for (double p : r.p_bat) {
            s.p_bat_min = std::min(s.p_bat_min, p);
            s.p_bat_max = std::max(s.p_bat_max, p);
            bat_sum += p;
        }
        if (bat_sum < 0.0) ++charging;
        if (r.feasible) {
            err_sum += r.err_max;
            s.err_max = std::max(s.err_max, r.err_max);
            ++feasible;
            for (double a : r.soc)
                for (double b : r.soc)
                    s.soc_pair_diff_max = std::max(s.soc_pair_diff_max, std::abs(a - b));
        }
        if (std::abs(r.f - 0.99) <= 0.002) ++near_low;

        const double p_inv_tot =
            std::accumulate(r.p_bat.begin(), r.p_bat.end(), 0.0) +
            std::accumulate(r.p_pv.begin(), r.p_pv.end(), 0.0);
        sf += r.f;
        sp += p_inv_tot;
        sff += r.f * r.f;
        spp += p_inv_tot * p_inv_tot;
        sfp += r.f * p_inv_tot;
    }
    const double n = static_cast<double>(ds.rows.size());
    s.err_mean = feasible ? err_sum / feasible : 0.0;
    s.charging_fraction = charging / n;
    s.f_near_low_fraction = near_low / n;
    const double cov = sfp / n - (sf / n) * (sp / n);
    const double var_f = sff / n - (sf / n) * (sf / n);
    const double var_p = spp / n - (sp / n) * (sp / n);
    s.corr_f_pinv = (var_f > 0 && var_p > 0) ? cov / std::sqrt(var_f * var_p) : 0.0;
    return s;
}

SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test,
                  std::uint64_t seed) {
    if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.rows.size(); ++i)
        if (ds.rows[i].feasible) idx.push_back(i);
    if (idx.empty()) throw std::invalid_argument("no feasible rows to split");

    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);

    const std::size_t n = idx.size();
    std::size_t sizes[3] = {static_cast<std::size_t>(n * f_train),
                            static_cast<std::size_t>(n * f_val),
                            static_cast<std::size_t>(n * f_test)};
    std::size_t assigned = sizes[0] + sizes[1] + sizes[2];
    for (int k = 0; assigned < n; k = (k + 1) % 3) {
        // hand the remainder out in train/val/test order, skipping empty fractions
        const double f[3] = {f_train, f_val, f_test};
        if (f[k] > 0.0) {
            ++sizes[k];
            ++assigned;
        }
    }
    if ((f_train > 0 && sizes[0] == 0) || (f_val > 0 && sizes[1] == 0) || (f_test > 0 && sizes[2] == 0))
        throw std::invalid_argument("a requested partition came out empty");

    SplitResult out;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(ds.rows[idx[pos++]]);
    for (std::size_t i = 0; i < sizes[1]; ++i) out.val.push_back(ds.rows[idx[pos++]]);
    for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(ds.rows[idx[pos++]]);
    return out;
}

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream os;
    const int n = ds.meta.n_dgs;
    os << "t";
    for (int i = 1; i <= n; ++i) os << ",p_pv_" << i;
    os << ",f";
    for (int i = 1; i <= n; ++i) os << ",f_n_" << i;
    for (int i = 1; i <= n; ++i) os << ",soc_" << i;
    for (int i = 1; i <= n; ++i) os << ",p_bat_" << i;
    os << ",err_max,feasible\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), ",%.12g", v);
        os << buf;
    };
    for (const auto& r : ds.rows) {
        os << r.t;
        for (double v : r.p_pv) put(v);
        put(r.f);
        for (double v : r.f_n) put(v);
        for (double v : r.soc) put(v);
        for (double v : r.p_bat) put(v);
        put(r.err_max);
        os << ',' << (r.feasible ? 1 : 0) << '\n';
    }
    return os.str();
}

Dataset dataset_from_csv(const std::string& csv_text) {
    std::istringstream is(csv_text);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty dataset csv");
    // infer the DG count from the header arity: 4n + 4 columns
    std::size_t cols = 1 + std::count(line.begin(), line.end(), ',');
    if (cols < 8 || (cols - 4) % 4 != 0) throw std::runtime_error("unrecognized dataset header");
    const int n = static_cast<int>((cols - 4) / 4);

    Dataset ds;
    ds.meta.n_dgs = n;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() != cols) throw std::runtime_error("dataset row arity mismatch: " + line);
        DatasetRow r;
        std::size_t k = 0;
        r.t = static_cast<int>(vals[k++]);
        for (int i = 0; i < n; ++i) r.p_pv.push_back(vals[k++]);
        r.f = vals[k++];
        for (int i = 0; i < n; ++i) r.f_n.push_back(vals[k++]);
        for (int i = 0; i < n; ++i) r.soc.push_back(vals[k++]);
        for (int i = 0; i < n; ++i) r.p_bat.push_back(vals[k++]);
        r.err_max = vals[k++];
        r.feasible = vals[k++] != 0.0;
        ds.rows.push_back(std::move(r));
        if (ds.rows.back().feasible) ++ds.meta.n_feasible;
    }
    ds.meta.n_steps = ds.rows.size();
    return ds;
}

Eigen::MatrixXd inputs_centralized(const std::vector<DatasetRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("no rows");
    const int n = static_cast<int>(rows.front().p_pv.size());
    Eigen::MatrixXd x(rows.size(), n + 1);
    for (std::size_t s = 0; s < rows.size(); ++s) {
        for (int i = 0; i < n; ++i) x(s, i) = rows[s].p_pv[i];
        x(s, n) = rows[s].f;
    }
    return x;
}

Eigen::MatrixXd targets_centralized(const std::vector<DatasetRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("no rows");
    const int n = static_cast<int>(rows.front().f_n.size());
    Eigen::MatrixXd y(rows.size(), n);
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (int i = 0; i < n; ++i) y(s, i) = rows[s].f_n[i];
    return y;
}

Eigen::MatrixXd inputs_decentralized(const std::vector<DatasetRow>& rows, int dg_index) {
    if (rows.empty()) throw std::invalid_argument("no rows");
    Eigen::MatrixXd x(rows.size(), 2);
    for (std::size_t s = 0; s < rows.size(); ++s) {
        x(s, 0) = rows[s].p_pv.at(dg_index);
        x(s, 1) = rows[s].f;
    }
    return x;
}

Eigen::MatrixXd targets_decentralized(const std::vector<DatasetRow>& rows, int dg_index) {
    if (rows.empty()) throw std::invalid_argument("no rows");
    Eigen::MatrixXd y(rows.size(), 1);
    for (std::size_t s = 0; s < rows.size(); ++s) y(s, 0) = rows[s].f_n.at(dg_index);
    return y;
}

} // namespace ems
