#include "ems/neural.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace ems {

Eigen::VectorXd NnModel::normalize_in(const Eigen::VectorXd& x) const {
    return (2.0 * (x - in_min).array() / (in_max - in_min).array() - 1.0).matrix();
}

Eigen::VectorXd NnModel::denormalize_out(const Eigen::VectorXd& y) const {
    return ((y.array() + 1.0) / 2.0 * (out_max - out_min).array() + out_min.array()).matrix();
}

Eigen::VectorXd NnModel::normalize_out(const Eigen::VectorXd& y) const {
    return (2.0 * (y - out_min).array() / (out_max - out_min).array() - 1.0).matrix();
}

Eigen::VectorXd forward(const NnModel& m, const Eigen::VectorXd& x) {
    if (x.size() != m.n_in()) throw std::invalid_argument("input arity mismatch");
    if (!x.allFinite()) throw std::invalid_argument("non-finite input");
    const Eigen::VectorXd a = ((m.w_h * m.normalize_in(x) + m.b_h).array().tanh()).matrix();
    return m.denormalize_out(m.w_o * a + m.b_o);
}

Eigen::MatrixXd predict(const NnModel& m, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), m.n_out());
    for (Eigen::Index s = 0; s < x.rows(); ++s)
        out.row(s) = forward(m, x.row(s).transpose()).transpose();
    return out;
}

namespace {

int param_count(const NnModel& m) {
    return m.n_hidden() * m.n_in() + m.n_hidden() + m.n_out() * m.n_hidden() + m.n_out();
}

Eigen::VectorXd pack(const NnModel& m) {
    Eigen::VectorXd p(param_count(m));
    int k = 0;
    for (int h = 0; h < m.n_hidden(); ++h)
        for (int i = 0; i < m.n_in(); ++i) p(k++) = m.w_h(h, i);
    for (int h = 0; h < m.n_hidden(); ++h) p(k++) = m.b_h(h);
    for (int o = 0; o < m.n_out(); ++o)
        for (int h = 0; h < m.n_hidden(); ++h) p(k++) = m.w_o(o, h);
    for (int o = 0; o < m.n_out(); ++o) p(k++) = m.b_o(o);
    return p;
}

void unpack(NnModel& m, const Eigen::VectorXd& p) {
    int k = 0;
    for (int h = 0; h < m.n_hidden(); ++h)
        for (int i = 0; i < m.n_in(); ++i) m.w_h(h, i) = p(k++);
    for (int h = 0; h < m.n_hidden(); ++h) m.b_h(h) = p(k++);
    for (int o = 0; o < m.n_out(); ++o)
        for (int h = 0; h < m.n_hidden(); ++h) m.w_o(o, h) = p(k++);
    for (int o = 0; o < m.n_out(); ++o) m.b_o(o) = p(k++);
}

// Residuals target - prediction in normalized units, samples major.
Eigen::VectorXd residuals(const NnModel& m, const Eigen::MatrixXd& xn, const Eigen::MatrixXd& yn) {
    const Eigen::MatrixXd a = ((xn * m.w_h.transpose()).rowwise() + m.b_h.transpose()).array().tanh();
    const Eigen::MatrixXd pred = (a * m.w_o.transpose()).rowwise() + m.b_o.transpose();
    Eigen::MatrixXd e = yn - pred;
    return Eigen::Map<Eigen::VectorXd>(e.data(), e.size());
}

double mse_of(const NnModel& m, const Eigen::MatrixXd& xn, const Eigen::MatrixXd& yn) {
    const Eigen::VectorXd e = residuals(m, xn, yn);
    return e.squaredNorm() / e.size();
}

Eigen::MatrixXd normalize_rows_in(const NnModel& m, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd xn(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        xn.col(c) = 2.0 * (x.col(c).array() - m.in_min(c)) / (m.in_max(c) - m.in_min(c)) - 1.0;
    return xn;
}

Eigen::MatrixXd normalize_rows_out(const NnModel& m, const Eigen::MatrixXd& y) {
    Eigen::MatrixXd yn(y.rows(), y.cols());
    for (Eigen::Index c = 0; c < y.cols(); ++c)
        yn.col(c) = 2.0 * (y.col(c).array() - m.out_min(c)) / (m.out_max(c) - m.out_min(c)) - 1.0;
    return yn;
}

// Nguyen-Widrow style layer scaling over seeded uniform weights.
void init_weights(NnModel& m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    for (int h = 0; h < m.n_hidden(); ++h)
        for (int i = 0; i < m.n_in(); ++i) m.w_h(h, i) = uni(rng);
    const double beta = 0.7 * std::pow(m.n_hidden(), 1.0 / m.n_in());
    for (int h = 0; h < m.n_hidden(); ++h) {
        const double norm = m.w_h.row(h).norm();
        if (norm > 0) m.w_h.row(h) *= beta / norm;
        m.b_h(h) = beta * (2.0 * h / std::max(1, m.n_hidden() - 1) - 1.0);
    }
    for (int o = 0; o < m.n_out(); ++o) {
        for (int h = 0; h < m.n_hidden(); ++h) m.w_o(o, h) = uni(rng);
        m.b_o(o) = 0.0;
    }
}

} // namespace

Eigen::MatrixXd lm_jacobian(const NnModel& m, const Eigen::MatrixXd& xn) {
    const int S = static_cast<int>(xn.rows());
    const int H = m.n_hidden(), I = m.n_in(), O = m.n_out();
    const int P = param_count(m);
    // residual ordering matches Eigen::Map of the (S x O) error matrix:
    // column-major, so residual index = o * S + s
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(S * O, P);
    const int off_bh = H * I;
    const int off_wo = off_bh + H;
    const int off_bo = off_wo + O * H;
    for (int s = 0; s < S; ++s) {
        const Eigen::VectorXd z = m.w_h * xn.row(s).transpose() + m.b_h;
        const Eigen::VectorXd a = z.array().tanh();
        const Eigen::VectorXd da = 1.0 - a.array().square();
        for (int o = 0; o < O; ++o) {
            const int r = o * S + s;
            // d(pred)/d(param); residual = y - pred, hence the minus signs
            for (int h = 0; h < H; ++h) {
                const double w_da = m.w_o(o, h) * da(h);
                for (int i = 0; i < I; ++i) jac(r, h * I + i) = -w_da * xn(s, i);
                jac(r, off_bh + h) = -w_da;
                jac(r, off_wo + o * H + h) = -a(h);
            }
            jac(r, off_bo + o) = -1.0;
        }
    }
    return jac;
}

std::pair<NnModel, TrainReport> train_lm(const Eigen::MatrixXd& x_train,
                                         const Eigen::MatrixXd& y_train,
                                         const Eigen::MatrixXd& x_val,
                                         const Eigen::MatrixXd& y_val,
                                         const TrainOptions& opt) {
    if (x_train.rows() == 0) throw std::invalid_argument("empty training set");
    if (!x_train.allFinite() || !y_train.allFinite())
        throw std::invalid_argument("non-finite training data");

    NnModel m;
    const int I = static_cast<int>(x_train.cols());
    const int O = static_cast<int>(y_train.cols());
    m.w_h.resize(opt.n_hidden, I);
    m.b_h.resize(opt.n_hidden);
    m.w_o.resize(O, opt.n_hidden);
    m.b_o.resize(O);
    m.in_min = x_train.colwise().minCoeff();
    m.in_max = x_train.colwise().maxCoeff();
    m.out_min = y_train.colwise().minCoeff();
    m.out_max = y_train.colwise().maxCoeff();
    for (int c = 0; c < I; ++c)
        if (m.in_max(c) <= m.in_min(c))
            throw std::invalid_argument("degenerate input feature " + std::to_string(c));
    for (int c = 0; c < O; ++c)
        if (m.out_max(c) <= m.out_min(c))
            throw std::invalid_argument("degenerate output feature " + std::to_string(c));
    init_weights(m, opt.seed);

    const Eigen::MatrixXd xn = normalize_rows_in(m, x_train);
    const Eigen::MatrixXd yn = normalize_rows_out(m, y_train);
    const bool have_val = x_val.rows() > 0;
    const Eigen::MatrixXd xvn = have_val ? normalize_rows_in(m, x_val) : Eigen::MatrixXd();
    const Eigen::MatrixXd yvn = have_val ? normalize_rows_out(m, y_val) : Eigen::MatrixXd();

    TrainReport report;
    double mu = opt.mu_init;
    Eigen::VectorXd e = residuals(m, xn, yn);
    double sse = e.squaredNorm();

    NnModel best = m;
    double best_val = have_val ? mse_of(m, xvn, yvn) : sse / e.size();
    int val_fail = 0;
    report.stop_reason = "epoch cap";

    for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
        const Eigen::MatrixXd jac = lm_jacobian(m, xn);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = -jac.transpose() * e; // descent direction on 0.5*||e||^2
        if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
            report.stop_reason = "gradient tolerance";
            break;
        }

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd aug = jtj;
            aug.diagonal().array() += mu;
            const Eigen::VectorXd dp = aug.ldlt().solve(g);
            if (!dp.allFinite())
                throw std::runtime_error("normal equations singular despite damping");
            NnModel trial = m;
            unpack(trial, pack(m) + dp);
            const Eigen::VectorXd e2 = residuals(trial, xn, yn);
            const double sse2 = e2.squaredNorm();
            if (sse2 < sse) {
                m = trial;
                e = e2;
                sse = sse2;
                mu = std::max(mu * 0.1, opt.mu_min);
                accepted = true;
            } else {
                mu *= 10.0;
                if (mu > opt.mu_max) break;
            }
        }
        if (!accepted) {
            report.stop_reason = "mu overflow";
            break;
        }
        ++report.epochs;

        if (have_val) {
            const double val = mse_of(m, xvn, yvn);
            if (val < best_val) {
                best_val = val;
                best = m;
                val_fail = 0;
            } else if (++val_fail >= opt.patience) {
                report.stop_reason = "validation patience";
                break;
            }
        } else {
            best = m;
        }
    }

    report.mse_train = mse_of(best, xn, yn);
    if (have_val) report.mse_val = best_val;
    return {best, report};
}

std::vector<double> regression_r(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("shape mismatch");
    if (pred.rows() < 2) throw std::invalid_argument("need at least two samples");
    std::vector<double> out;
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
        const Eigen::ArrayXd p = pred.col(c).array() - pred.col(c).mean();
        const Eigen::ArrayXd t = target.col(c).array() - target.col(c).mean();
        const double vt = t.square().sum();
        if (vt <= 0.0) throw std::invalid_argument("zero target variance in output " + std::to_string(c));
        const double vp = p.square().sum();
        out.push_back(vp > 0.0 ? (p * t).sum() / std::sqrt(vp * vt) : 0.0);
    }
    return out;
}

std::string save_model(const NnModel& m) {
    nlohmann::json j;
    j["version"] = "ems-nn-1";
    j["n_in"] = m.n_in();
    j["n_hidden"] = m.n_hidden();
    j["n_out"] = m.n_out();
    auto dump = [](const auto& mat) {
        std::vector<double> v;
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) v.push_back(mat(r, c));
        return v;
    };
    j["w_h"] = dump(m.w_h);
    j["b_h"] = dump(m.b_h);
    j["w_o"] = dump(m.w_o);
    j["b_o"] = dump(m.b_o);
    j["in_min"] = dump(m.in_min);
    j["in_max"] = dump(m.in_max);
    j["out_min"] = dump(m.out_min);
    j["out_max"] = dump(m.out_max);
    return j.dump(2);
}

NnModel load_model(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("corrupt model file: ") + e.what());
    }
    if (!j.contains("version") || j["version"] != "ems-nn-1")
        throw std::runtime_error("unsupported model version: " +
                                 (j.contains("version") ? j["version"].dump() : "missing"));
    NnModel m;
    const int I = j.at("n_in"), H = j.at("n_hidden"), O = j.at("n_out");
    auto fill = [&](const char* key, auto& mat, int rows, int cols) {
        const std::vector<double> v = j.at(key).get<std::vector<double>>();
        if (static_cast<int>(v.size()) != rows * cols)
            throw std::runtime_error(std::string("corrupt model file: bad size for ") + key);
        mat.resize(rows, cols);
        int k = 0;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) mat(r, c) = v[k++];
    };
    fill("w_h", m.w_h, H, I);
    Eigen::MatrixXd tmp;
    fill("b_h", tmp, H, 1);
    m.b_h = tmp;
    fill("w_o", m.w_o, O, H);
    fill("b_o", tmp, O, 1);
    m.b_o = tmp;
    fill("in_min", tmp, I, 1);
    m.in_min = tmp;
    fill("in_max", tmp, I, 1);
    m.in_max = tmp;
    fill("out_min", tmp, O, 1);
    m.out_min = tmp;
    fill("out_max", tmp, O, 1);
    m.out_max = tmp;
    return m;
}

} // namespace ems
