#include <doctest.h>

#include <numeric>

#include "ems/simloop.hpp"
#include "test_util.hpp"

using namespace ems;
using ems::test::cigre;
using ems::test::data_path;
using ems::test::read_file;

namespace {

Scenario short_symmetric_scenario() {
    Scenario sc;
    sc.initial_soc = {40.0, 40.0, 40.0};
    sc.fixed_f_n_hz = 50.25;
    sc.load_mult = 1.0;
    sc.irr_events = {{0.0, {500.0, 500.0, 500.0}}};
    sc.control_period_s = 0.1;
    sc.duration_s = 2.0;
    sc.ems_enable_time_s = 100.0; // never enabled
    sc.soc_time_scale = 900.0;
    return sc;
}

} // namespace

TEST_CASE("soc_dif centers on the fleet mean and sums to zero") {
    const auto zero = soc_dif({30.0, 30.0, 30.0});
    for (double v : zero) CHECK(v == 0.0);

    const auto d = soc_dif({14.0, 15.0, 16.0});
    REQUIRE(d.size() == 3);
    CHECK(d[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(d[1] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(d[2] == doctest::Approx(1.0).epsilon(1e-12));

    const auto r = soc_dif({13.7, 91.2, 40.4});
    CHECK(std::accumulate(r.begin(), r.end(), 0.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("fixed controller under symmetric conditions preserves symmetry") {
    const SimTrace trace = run(cigre(), short_symmetric_scenario(), FixedController{50.25 / 50.0});
    REQUIRE(!trace.samples.empty());
    CHECK(trace.diagnostic.empty());
    for (const auto& s : trace.samples)
        for (double v : s.soc_dif) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("every sample satisfies the DG power-balance and mean-centering identities") {
    const SimTrace trace = run(cigre(), short_symmetric_scenario(), FixedController{50.25 / 50.0});
    for (const auto& s : trace.samples) {
        for (int d = 0; d < 3; ++d)
            CHECK(s.p_bat[d] == s.p_inv[d] - s.p_pv[d]); // exact identity
        CHECK(std::accumulate(s.soc_dif.begin(), s.soc_dif.end(), 0.0) ==
              doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
}

TEST_CASE("the fixed baseline setpoint is applied verbatim even below the model clamp") {
    Scenario sc = short_symmetric_scenario();
    sc.fixed_f_n_hz = 49.38; // 0.9876 p.u., outside the model clamp [0.99, 1.01]
    const SimTrace trace = run(cigre(), sc, FixedController{49.38 / 50.0});
    for (const auto& s : trace.samples) {
        CHECK(s.f_n[0] == doctest::Approx(0.9876).epsilon(1e-12));
        CHECK(!s.fn_clamped);
    }
}

TEST_CASE("scheduled events take effect at their timestamps") {
    Scenario sc = short_symmetric_scenario();
    sc.duration_s = 3.0;
    sc.irr_events = {{0.0, {500.0, 500.0, 500.0}}, {1.0, {600.0, 500.0, 400.0}}};
    const SimTrace trace = run(cigre(), sc, FixedController{50.25 / 50.0});
    bool saw_split = false;
    for (const auto& s : trace.samples) {
        if (s.t_s < 1.0) {
            CHECK(s.p_pv[0] == doctest::Approx(s.p_pv[2]).epsilon(1e-12));
        } else {
            CHECK(s.p_pv[0] > s.p_pv[2]);
            saw_split = true;
        }
    }
    CHECK(saw_split);
}

TEST_CASE("scenario validation rejects unordered events and bad arity") {
    Scenario sc = short_symmetric_scenario();
    sc.irr_events = {{2.0, {500.0, 500.0, 500.0}}, {1.0, {400.0, 400.0, 400.0}}};
    CHECK_THROWS_AS((void)run(cigre(), sc, FixedController{1.0}), std::invalid_argument);

    Scenario bad_arity = short_symmetric_scenario();
    bad_arity.irr_events = {{0.0, {500.0, 500.0}}};
    CHECK_THROWS_AS((void)run(cigre(), bad_arity, FixedController{1.0}), std::invalid_argument);

    Scenario bad_soc = short_symmetric_scenario();
    bad_soc.initial_soc = {40.0};
    CHECK_THROWS_AS((void)run(cigre(), bad_soc, FixedController{1.0}), std::invalid_argument);
}

TEST_CASE("bundled scenarios parse with the documented fields") {
    const Scenario chg = load_scenario(read_file(data_path("scenario_charging.json")));
    CHECK(chg.initial_soc == std::vector<double>{14.0, 14.0, 14.0});
    CHECK(chg.fixed_f_n_hz == 50.25);
    REQUIRE(chg.irr_events.size() == 2);
    CHECK(chg.irr_events[1].t_s == 4.0);
    CHECK(chg.irr_events[1].irr == std::vector<double>{575.0, 600.0, 550.0});
    CHECK(chg.ems_enable_time_s == 6.0);

    const Scenario dis = load_scenario(read_file(data_path("scenario_discharging.json")));
    CHECK(dis.load_mult == 1.66);
    REQUIRE(dis.load_events.size() == 1);
    CHECK(dis.load_events[0].bus == 15);
    CHECK(dis.load_events[0].dp_kw == 5.0);
}

TEST_CASE("trace CSV round-trips and compare is zero on identical traces") {
    const SimTrace trace = run(cigre(), short_symmetric_scenario(), FixedController{50.25 / 50.0});
    const SimTrace rt = trace_from_csv(trace_to_csv(trace));
    REQUIRE(rt.samples.size() == trace.samples.size());
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        CHECK(rt.samples[i].t_s == doctest::Approx(trace.samples[i].t_s).epsilon(1e-12));
        CHECK(rt.samples[i].f == doctest::Approx(trace.samples[i].f).epsilon(1e-10));
        for (int d = 0; d < 3; ++d)
            CHECK(rt.samples[i].p_bat[d] ==
                  doctest::Approx(trace.samples[i].p_bat[d]).epsilon(1e-9));
    }

    const CompareReport rep = compare(trace, trace);
    CHECK(rep.max_abs_f_delta == 0.0);
    CHECK(rep.max_abs_soc_delta == 0.0);
    CHECK(rep.a_final_max_soc_dif == rep.b_final_max_soc_dif);
}

TEST_CASE("compare rejects mismatched timelines") {
    const SimTrace trace = run(cigre(), short_symmetric_scenario(), FixedController{50.25 / 50.0});
    SimTrace shorter = trace;
    shorter.samples.pop_back();
    CHECK_THROWS_AS((void)compare(trace, shorter), std::invalid_argument);
}
