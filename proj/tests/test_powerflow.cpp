#include <doctest.h>

#include <numeric>

#include "ems/powerflow.hpp"
#include "test_util.hpp"

using namespace ems;
using ems::test::cigre;

namespace {

const char* kSingleBus = R"({
  "bases": {"s_kva": 100, "v_ph_ph": 400, "f_hz": 50},
  "buses": [{"id": 1, "p_kw": 5.0, "q_kvar": 2.0}],
  "lines": [],
  "dgs": [{"bus": 1, "m_p_rad_s_kw": 0.005, "n_q": 0.1, "v_n_pu": 1.0,
           "n_panels": 232, "c1": 0.3072, "c2": -2.1944, "v_bat": 550,
           "c_rating_ah": 200.0, "soc_init": 45.0, "p_inv_max_kw": 100.0}]
})";

const char* kSymmetricPair = R"({
  "bases": {"s_kva": 100, "v_ph_ph": 400, "f_hz": 50},
  "buses": [{"id": 1, "p_kw": 0, "q_kvar": 0},
            {"id": 2, "p_kw": 10.0, "q_kvar": 4.0},
            {"id": 3, "p_kw": 0, "q_kvar": 0}],
  "lines": [{"from": 1, "to": 2, "r_ohm": 0.02, "x_ohm": 0.01},
            {"from": 2, "to": 3, "r_ohm": 0.02, "x_ohm": 0.01}],
  "dgs": [{"bus": 1, "m_p_rad_s_kw": 0.005, "n_q": 0.1, "v_n_pu": 1.0,
           "n_panels": 232, "c1": 0.3072, "c2": -2.1944, "v_bat": 550,
           "c_rating_ah": 200.0, "soc_init": 45.0, "p_inv_max_kw": 100.0},
          {"bus": 3, "m_p_rad_s_kw": 0.005, "n_q": 0.1, "v_n_pu": 1.0,
           "n_panels": 232, "c1": 0.3072, "c2": -2.1944, "v_bat": 550,
           "c_rating_ah": 200.0, "soc_init": 45.0, "p_inv_max_kw": 100.0}]
})";

} // namespace

TEST_CASE("single DG carrying its own bus load obeys the droop law exactly") {
    const Microgrid mg = load_network(kSingleBus);
    const LoadSnapshot loads = LoadSnapshot::scaled(mg, 1.0);
    const auto op = solve_droop_pf(mg, {1.005}, loads);
    CHECK(op.p_inv[0] == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(op.p_loss == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    // f* = f_n - m_p * P_inv with m_p in Hz/kW, expressed in p.u. of 50 Hz
    const double expected_f = 1.005 - mg.dgs[0].droop.m_p * 5.0 / 50.0;
    CHECK(op.f == doctest::Approx(expected_f).epsilon(1e-10));
}

TEST_CASE("symmetric DGs with equal setpoints share the load exactly") {
    const Microgrid mg = load_network(kSymmetricPair);
    const auto op = solve_droop_pf(mg, {1.002, 1.002}, LoadSnapshot::scaled(mg, 1.0));
    CHECK(op.p_inv[0] == doctest::Approx(op.p_inv[1]).epsilon(1e-10));
    CHECK(op.q_inv[0] == doctest::Approx(op.q_inv[1]).epsilon(1e-10));
    CHECK(op.v(0) == doctest::Approx(op.v(2)).epsilon(1e-10));
}

TEST_CASE("CIGRE solution satisfies the residual oracle and power balance") {
    const Microgrid& mg = cigre();
    const std::vector<double> f_n(3, 1.005);
    const LoadSnapshot loads = LoadSnapshot::scaled(mg, 1.0);
    const auto op = solve_droop_pf(mg, f_n, loads);

    // Independent re-evaluation of the full mismatch system.
    const Eigen::VectorXd res = droop_pf_residual(mg, f_n, loads, op.v, op.theta, op.f);
    CHECK(res.lpNorm<Eigen::Infinity>() < 1e-8);

    const double p_inv_sum = std::accumulate(op.p_inv.begin(), op.p_inv.end(), 0.0);
    CHECK(p_inv_sum - loads.total_p() - op.p_loss ==
          doctest::Approx(0.0).scale(1.0).epsilon(1e-4)); // 1e-6 p.u. on a 100 kVA base
    CHECK(op.p_loss >= 0.0);
    CHECK(op.theta(0) == 0.0); // reference bus angle
}

TEST_CASE("droop consistency: every DG reports the same system frequency") {
    const Microgrid& mg = cigre();
    const std::vector<double> f_n = {1.004, 1.0045, 1.005};
    const auto op = solve_droop_pf(mg, f_n, LoadSnapshot::scaled(mg, 1.2));
    for (int d = 0; d < mg.n_dgs(); ++d) {
        const double f_from_dg = f_n[d] - mg.dgs[d].droop.m_p * op.p_inv[d] / mg.bases.f_hz;
        CHECK(f_from_dg == doctest::Approx(op.f).epsilon(1e-9));
    }
}

TEST_CASE("Q-V droop holds at every DG bus") {
    const Microgrid& mg = cigre();
    const auto op = solve_droop_pf(mg, {1.005, 1.005, 1.005}, LoadSnapshot::scaled(mg, 1.0));
    for (int d = 0; d < mg.n_dgs(); ++d) {
        const auto& dg = mg.dgs[d];
        const double v_expected = dg.droop.v_n - dg.droop.n_q * op.q_inv[d] / mg.bases.v_ph_ph;
        CHECK(op.v(dg.bus - 1) == doctest::Approx(v_expected).epsilon(1e-9));
    }
}

TEST_CASE("translation property: shifting all f_n shifts f and nothing else") {
    const Microgrid& mg = cigre();
    const LoadSnapshot loads = LoadSnapshot::scaled(mg, 1.1);
    const auto base = solve_droop_pf(mg, {1.001, 1.002, 1.003}, loads);
    const double delta = 0.004;
    const auto shifted = solve_droop_pf(mg, {1.001 + delta, 1.002 + delta, 1.003 + delta}, loads);
    CHECK(shifted.f - base.f == doctest::Approx(delta).epsilon(1e-9));
    for (int d = 0; d < mg.n_dgs(); ++d)
        CHECK(shifted.p_inv[d] == doctest::Approx(base.p_inv[d]).epsilon(1e-7));
}

TEST_CASE("iteration cap produces a PowerFlowError naming the residual") {
    const Microgrid& mg = cigre();
    CHECK_THROWS_AS((void)solve_droop_pf(mg, {1.005, 1.005, 1.005},
                                         LoadSnapshot::scaled(mg, 1.0), 1e-10, 1),
                    PowerFlowError);
}

TEST_CASE("power sharing error matches the worked examples") {
    SUBCASE("equal sharing is zero error") {
        const auto e = power_sharing_error({10.0, 10.0, 10.0});
        CHECK(e.err_max == 0.0);
        for (double v : e.err_per_dg) CHECK(v == 0.0);
    }
    SUBCASE("worked asymmetric case") {
        const auto e = power_sharing_error({16.0, 10.0, 4.0});
        REQUIRE(e.err_per_dg.size() == 3);
        CHECK(e.err_per_dg[0] == doctest::Approx(60.0).epsilon(1e-12));
        CHECK(e.err_per_dg[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(e.err_per_dg[2] == doctest::Approx(60.0).epsilon(1e-12));
        CHECK(e.err_max == doctest::Approx(60.0).epsilon(1e-12));
    }
    SUBCASE("zero average power is a guarded error") {
        CHECK_THROWS_AS((void)power_sharing_error({0.0, 0.0, 0.0}), std::invalid_argument);
    }
}
