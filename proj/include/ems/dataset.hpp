#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ems/netmodel.hpp"
#include "ems/opf.hpp"
#include "ems/profiles.hpp"

namespace ems {

struct DatasetRow {
    int t = 0;
    std::vector<double> p_pv;  // kW
    double f = 0.0;            // p.u.
    std::vector<double> f_n;   // p.u.
    std::vector<double> soc;   // %
    std::vector<double> p_bat; // kW
    double err_max = 0.0;      // %
    bool feasible = true;
};

struct DatasetMeta {
    std::uint64_t seed = 0;
    bool banded = true;
    int n_dgs = 0;
    std::size_t n_steps = 0;
    std::size_t n_feasible = 0;
    double peak_load_mult = 0.0;
};

struct Dataset {
    std::vector<DatasetRow> rows;
    DatasetMeta meta;
};

// Runs the per-step OPF sequentially over the profile, chaining SoC state.
// banded=true constrains f_n by fn_band of the peak-normalized load;
// banded=false uses the fixed [0.99, 1.01] box, which reproduces the
// degenerate dataset where the droop relation disappears.
Dataset generate(const Microgrid& mg, const Profile& profile,
                 const std::vector<double>& initial_soc, bool banded,
                 const OpfLimits& limits = {});

struct DatasetSummary {
    double p_pv_max = 0.0;
    double p_bat_min = 0.0, p_bat_max = 0.0;
    double err_mean = 0.0, err_max = 0.0;
    double soc_pair_diff_max = 0.0;   // max over rows of pairwise |dSoC|
    double charging_fraction = 0.0;   // rows with mean p_bat < 0
    double corr_f_pinv = 0.0;         // Pearson corr of f vs total inverter power
    double f_near_low_fraction = 0.0; // rows with |f - 0.99| <= 0.002
};

DatasetSummary summarize(const Dataset& ds);

struct SplitResult {
    std::vector<DatasetRow> train, val, test;
};

// Deterministic random split of the feasible rows. Sizes are floors of the
// fractions with the remainder handed out in train/val/test order.
SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test,
                  std::uint64_t seed);

std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(const std::string& csv_text);

// Training matrices, one sample per row. The centralized mapping is
// (p_pv_1..N, f) -> (f_n_1..N); the per-DG variant is (p_pv_i, f) -> f_n_i.
Eigen::MatrixXd inputs_centralized(const std::vector<DatasetRow>& rows);
Eigen::MatrixXd targets_centralized(const std::vector<DatasetRow>& rows);
Eigen::MatrixXd inputs_decentralized(const std::vector<DatasetRow>& rows, int dg_index);
Eigen::MatrixXd targets_decentralized(const std::vector<DatasetRow>& rows, int dg_index);

} // namespace ems
