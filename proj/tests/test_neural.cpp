#include <doctest.h>

#include <cmath>
#include <random>

#include "ems/neural.hpp"

using namespace ems;

namespace {

NnModel blank_model(int n_in, int n_hidden, int n_out) {
    NnModel m;
    m.w_h = Eigen::MatrixXd::Zero(n_hidden, n_in);
    m.b_h = Eigen::VectorXd::Zero(n_hidden);
    m.w_o = Eigen::MatrixXd::Zero(n_out, n_hidden);
    m.b_o = Eigen::VectorXd::Zero(n_out);
    m.in_min = Eigen::VectorXd::Constant(n_in, -1.0);
    m.in_max = Eigen::VectorXd::Constant(n_in, 1.0);
    m.out_min = Eigen::VectorXd::Constant(n_out, 10.0);
    m.out_max = Eigen::VectorXd::Constant(n_out, 30.0);
    return m;
}

} // namespace

TEST_CASE("zero network outputs the midpoint of the output range") {
    const NnModel m = blank_model(2, 5, 3);
    const Eigen::VectorXd y = forward(m, Eigen::Vector2d(0.3, -0.7));
    for (int o = 0; o < 3; ++o) CHECK(y(o) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("single hidden neuron matches hand-computed tanh composition") {
    NnModel m = blank_model(1, 1, 1);
    m.w_h(0, 0) = 0.25;
    m.b_h(0) = 0.1;
    m.w_o(0, 0) = 0.5;
    m.b_o(0) = -0.2;
    const double x = 0.4; // already in [-1, 1], normalization is the identity
    const double y_norm = 0.5 * std::tanh(0.25 * x + 0.1) - 0.2;
    const double y = 10.0 + (y_norm + 1.0) / 2.0 * 20.0;
    const Eigen::VectorXd out = forward(m, Eigen::VectorXd::Constant(1, x));
    CHECK(out(0) == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("normalization hits the affine endpoints and round-trips") {
    NnModel m = blank_model(2, 3, 1);
    m.in_min << 5.0, -2.0;
    m.in_max << 9.0, 2.0;
    CHECK(m.normalize_in(Eigen::Vector2d(5.0, -2.0))(0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(m.normalize_in(Eigen::Vector2d(9.0, 2.0))(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.normalize_in(Eigen::Vector2d(7.0, 0.0))(0) == doctest::Approx(0.0).scale(1.0));

    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 17.25);
    CHECK(m.denormalize_out(m.normalize_out(y))(0) == doctest::Approx(17.25).epsilon(1e-12));
}

TEST_CASE("LM drives a linear target below 1e-10 normalized MSE") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    const int n = 400;
    Eigen::MatrixXd x(n, 2), y(n, 2);
    for (int i = 0; i < n; ++i) {
        const double a = uni(rng), b = uni(rng);
        x(i, 0) = a;
        x(i, 1) = b;
        y(i, 0) = 0.7 * a - 0.2 * b + 0.1;
        y(i, 1) = -0.4 * a + 0.5 * b - 0.3;
    }
    TrainOptions opt;
    opt.n_hidden = 6;
    opt.seed = 1;
    const auto [model, report] = train_lm(x.topRows(320), y.topRows(320),
                                          x.bottomRows(80), y.bottomRows(80), opt);
    CHECK(report.mse_train < 1e-10);
    for (double r : regression_r(predict(model, x), y)) CHECK(r > 0.999999);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Eigen::MatrixXd x(50, 1), y(50, 1);
    for (int i = 0; i < 50; ++i) {
        x(i, 0) = i / 25.0 - 1.0;
        y(i, 0) = std::sin(2.0 * x(i, 0));
    }
    TrainOptions opt;
    opt.n_hidden = 4;
    opt.max_epochs = 60;
    const auto [ma, ra] = train_lm(x, y, x, y, opt);
    const auto [mb, rb] = train_lm(x, y, x, y, opt);
    CHECK(ra.mse_train == rb.mse_train);
    CHECK(ra.epochs == rb.epochs);
    CHECK((ma.w_h - mb.w_h).norm() == 0.0);
}

TEST_CASE("degenerate features are rejected before training") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(10, 2); // column range collapses
    Eigen::MatrixXd y = Eigen::MatrixXd::Random(10, 1);
    CHECK_THROWS_AS((void)train_lm(x, y, x, y), std::invalid_argument);
}

TEST_CASE("LM Jacobian agrees with central finite differences") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-0.8, 0.8);
    NnModel m = blank_model(2, 3, 2);
    m.out_min << -1.0, -1.0;
    m.out_max << 1.0, 1.0;
    auto fill = [&](Eigen::MatrixXd& mat) {
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = uni(rng);
    };
    fill(m.w_h);
    fill(m.w_o);
    for (int i = 0; i < 3; ++i) m.b_h(i) = uni(rng);
    for (int i = 0; i < 2; ++i) m.b_o(i) = uni(rng);

    Eigen::MatrixXd xn(5, 2);
    fill(xn);
    const Eigen::MatrixXd jac = lm_jacobian(m, xn);

    // Parameter order (w_h, b_h, w_o, b_o), row-major; residual index o*S+s.
    auto pack = [&](const NnModel& mm) {
        Eigen::VectorXd p(jac.cols());
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < mm.w_h.rows(); ++r)
            for (Eigen::Index c = 0; c < mm.w_h.cols(); ++c) p(k++) = mm.w_h(r, c);
        for (Eigen::Index r = 0; r < mm.b_h.size(); ++r) p(k++) = mm.b_h(r);
        for (Eigen::Index r = 0; r < mm.w_o.rows(); ++r)
            for (Eigen::Index c = 0; c < mm.w_o.cols(); ++c) p(k++) = mm.w_o(r, c);
        for (Eigen::Index r = 0; r < mm.b_o.size(); ++r) p(k++) = mm.b_o(r);
        return p;
    };
    auto unpack = [&](Eigen::VectorXd p) {
        NnModel mm = m;
        Eigen::Index k = 0;
        for (Eigen::Index r = 0; r < mm.w_h.rows(); ++r)
            for (Eigen::Index c = 0; c < mm.w_h.cols(); ++c) mm.w_h(r, c) = p(k++);
        for (Eigen::Index r = 0; r < mm.b_h.size(); ++r) mm.b_h(r) = p(k++);
        for (Eigen::Index r = 0; r < mm.w_o.rows(); ++r)
            for (Eigen::Index c = 0; c < mm.w_o.cols(); ++c) mm.w_o(r, c) = p(k++);
        for (Eigen::Index r = 0; r < mm.b_o.size(); ++r) mm.b_o(r) = p(k++);
        return mm;
    };
    auto outputs = [&](const NnModel& mm) {
        Eigen::VectorXd out(2 * xn.rows());
        for (Eigen::Index s = 0; s < xn.rows(); ++s) {
            const Eigen::VectorXd h = (mm.w_h * xn.row(s).transpose() + mm.b_h).array().tanh();
            const Eigen::VectorXd y = mm.w_o * h + mm.b_o;
            for (Eigen::Index o = 0; o < 2; ++o) out(o * xn.rows() + s) = y(o);
        }
        return out;
    };

    const Eigen::VectorXd p0 = pack(m);
    const double eps = 1e-6;
    for (Eigen::Index j = 0; j < p0.size(); ++j) {
        Eigen::VectorXd pp = p0, pm = p0;
        pp(j) += eps;
        pm(j) -= eps;
        const Eigen::VectorXd fd = (outputs(unpack(pp)) - outputs(unpack(pm))) / (2.0 * eps);
        // jac carries d(residual)/dp = -d(pred)/dp
        for (Eigen::Index r = 0; r < fd.size(); ++r) {
            const double scale = std::max(1.0, std::abs(fd(r)));
            CHECK(std::abs(jac(r, j) + fd(r)) / scale < 1e-6);
        }
    }
}

TEST_CASE("regression coefficient matches its defining cases") {
    Eigen::MatrixXd t(4, 1);
    t << -2.0, -1.0, 1.0, 2.0;
    CHECK(regression_r(t, t)[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(regression_r((-t).eval(), t)[0] == doctest::Approx(-1.0).epsilon(1e-12));

    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd a(10000, 1), b(10000, 1);
    for (int i = 0; i < 10000; ++i) {
        a(i, 0) = gauss(rng);
        b(i, 0) = gauss(rng);
    }
    CHECK(std::abs(regression_r(a, b)[0]) < 0.05);

    Eigen::MatrixXd flat = Eigen::MatrixXd::Ones(4, 1);
    CHECK_THROWS_AS((void)regression_r(t, flat), std::invalid_argument);
}

TEST_CASE("model files round-trip bit-for-bit and reject bad versions") {
    NnModel m = blank_model(4, 10, 3);
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (Eigen::Index r = 0; r < m.w_h.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w_h.cols(); ++c) m.w_h(r, c) = uni(rng);
    for (Eigen::Index r = 0; r < m.w_o.rows(); ++r)
        for (Eigen::Index c = 0; c < m.w_o.cols(); ++c) m.w_o(r, c) = uni(rng);

    const std::string text = save_model(m);
    const NnModel rt = load_model(text);
    Eigen::VectorXd x(4);
    x << 0.1, -0.2, 0.3, -0.4;
    CHECK(forward(m, x)(0) == forward(rt, x)(0)); // bit-exact
    CHECK(save_model(rt) == text);

    CHECK_THROWS_AS((void)load_model(text.substr(0, text.size() / 2)), std::runtime_error);
    std::string legacy = text;
    const auto pos = legacy.find("ems-nn-1");
    REQUIRE(pos != std::string::npos);
    legacy.replace(pos, 8, "ems-nn-0");
    CHECK_THROWS_AS((void)load_model(legacy), std::runtime_error);
}
