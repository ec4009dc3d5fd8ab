#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ems {

// Two-layer tanh/linear fitting network with min-max [-1, 1] normalization
// folded into the model so forward() works in raw units.
struct NnModel {
    Eigen::MatrixXd w_h; // n_hidden x n_in
    Eigen::VectorXd b_h; // n_hidden
    Eigen::MatrixXd w_o; // n_out x n_hidden
    Eigen::VectorXd b_o; // n_out
    Eigen::VectorXd in_min, in_max;   // n_in
    Eigen::VectorXd out_min, out_max; // n_out

    int n_in() const { return static_cast<int>(w_h.cols()); }
    int n_hidden() const { return static_cast<int>(w_h.rows()); }
    int n_out() const { return static_cast<int>(w_o.rows()); }

    Eigen::VectorXd normalize_in(const Eigen::VectorXd& x) const;
    Eigen::VectorXd denormalize_out(const Eigen::VectorXd& y) const;
    Eigen::VectorXd normalize_out(const Eigen::VectorXd& y) const;
};

Eigen::VectorXd forward(const NnModel& model, const Eigen::VectorXd& x);

struct TrainReport {
    double mse_train = 0.0; // normalized units
    double mse_val = 0.0;
    double mse_test = 0.0;
    std::vector<double> r_per_output; // on the test split
    int epochs = 0;
    std::string stop_reason;
};

struct TrainOptions {
    int n_hidden = 10;
    int max_epochs = 1000;
    int patience = 6;
    double mu_init = 1e-3;
    double mu_min = 1e-10;
    double mu_max = 1e10;
    double grad_tol = 1e-10;
    std::uint64_t seed = 1;
};

// Levenberg-Marquardt on the full residual vector: (J^T J + mu I) dp = J^T e,
// mu shrinking on accepted steps and growing on rejections. Returns the
// best-validation checkpoint.
std::pair<NnModel, TrainReport> train_lm(const Eigen::MatrixXd& x_train,
                                         const Eigen::MatrixXd& y_train,
                                         const Eigen::MatrixXd& x_val,
                                         const Eigen::MatrixXd& y_val,
                                         const TrainOptions& opt = {});

// Pearson correlation between prediction and target, one value per output.
std::vector<double> regression_r(const Eigen::MatrixXd& pred,
                                 const Eigen::MatrixXd& target);

Eigen::MatrixXd predict(const NnModel& model, const Eigen::MatrixXd& x);

// Jacobian of the normalized residuals with respect to all parameters,
// ordered (w_h, b_h, w_o, b_o) row-major. Exposed for the finite-difference
// cross-check.
Eigen::MatrixXd lm_jacobian(const NnModel& model, const Eigen::MatrixXd& x_norm);

std::string save_model(const NnModel& model);
NnModel load_model(const std::string& text);

} // namespace ems
