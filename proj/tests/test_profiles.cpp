#include <doctest.h>

#include <algorithm>
#include <random>

#include "ems/profiles.hpp"
#include "test_util.hpp"

using namespace ems;
using ems::test::data_path;
using ems::test::read_file;

TEST_CASE("panel fit on the bundled datasheet recovers the published line") {
    const PanelCurve curve = load_panel_curve(read_file(data_path("panel_table.csv")));
    const auto [c1, c2] = fit_panel(curve);
    CHECK(std::abs(c1 - 0.3072) < 1e-3);
    CHECK(std::abs(c2 - (-2.1944)) < 1e-3);
}

TEST_CASE("two-point curve yields the exact interpolating line") {
    PanelCurve curve;
    curve.samples = {{0.0, 0.0}, {1000.0, 305.0}};
    const auto [c1, c2] = fit_panel(curve);
    CHECK(c1 == doctest::Approx(0.305).epsilon(1e-12));
    CHECK(c2 == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("fit_panel beats a coarse grid search around the returned line") {
    const PanelCurve curve = load_panel_curve(read_file(data_path("panel_table.csv")));
    const auto [c1, c2] = fit_panel(curve);
    auto sse = [&](double a, double b) {
        double s = 0.0;
        for (const auto& [x, y] : curve.samples) {
            const double r = a * x + b - y;
            s += r * r;
        }
        return s;
    };
    const double best = sse(c1, c2);
    for (int i = -5; i <= 5; ++i)
        for (int j = -5; j <= 5; ++j)
            CHECK(best <= sse(c1 + i * 1e-3, c2 + j * 0.1) + 1e-9);
}

TEST_CASE("degenerate panel curve is rejected") {
    PanelCurve curve;
    curve.samples = {{500.0, 100.0}, {500.0, 100.0}};
    CHECK_THROWS_AS((void)fit_panel(curve), std::invalid_argument);
    curve.samples = {{500.0, 100.0}};
    CHECK_THROWS_AS((void)fit_panel(curve), std::invalid_argument);
}

TEST_CASE("panel power clamps at zero irradiance and rejects negatives") {
    CHECK(panel_power(0.0, 0.3072, -2.1944) == 0.0);
    CHECK(panel_power(600.0, 0.3072, -2.1944) == doctest::Approx(182.1256).epsilon(1e-9));
    CHECK(panel_power(1.0, 0.3072, -2.1944) == 0.0); // below the intercept, clamped
    CHECK_THROWS_AS((void)panel_power(-1.0, 0.3072, -2.1944), std::invalid_argument);
}

TEST_CASE("panel power is monotone nondecreasing and nonnegative") {
    double prev = -1.0;
    for (double irr = 0.0; irr <= 1100.0; irr += 10.0) {
        const double p = panel_power(irr, 0.3072, -2.1944);
        CHECK(p >= 0.0);
        CHECK(p >= prev);
        prev = p;
    }
}

TEST_CASE("array power reproduces the 70 kWp sizing") {
    PvArray pv;
    pv.n_panels = 232;
    pv.c1 = 0.3072;
    pv.c2 = -2.1944;
    CHECK(array_power(0.0, pv) == 0.0);
    CHECK(array_power(600.0, pv) == doctest::Approx(42.253).epsilon(1e-4));
    CHECK(array_power(1000.0, pv) == doctest::Approx(70.8).epsilon(0.01));
}

TEST_CASE("hourly interpolation is a linear ramp hitting every knot") {
    const auto ramp = interpolate_hourly({0.0, 12.0}, 5.0);
    REQUIRE(ramp.size() == 13);
    for (int i = 0; i <= 12; ++i) CHECK(ramp[i] == doctest::Approx(i).epsilon(1e-12));

    const auto flat = interpolate_hourly({3.0, 3.0, 3.0}, 15.0);
    for (double v : flat) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("interpolation passes through random knots and preserves bounds") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.0, 1000.0);
    std::vector<double> hourly(25);
    for (auto& v : hourly) v = uni(rng);
    const auto fine = interpolate_hourly(hourly, 5.0);
    REQUIRE(fine.size() == 24 * 12 + 1);
    for (std::size_t h = 0; h < hourly.size(); ++h)
        CHECK(fine[h * 12] == doctest::Approx(hourly[h]).epsilon(1e-12));
    const double lo = *std::min_element(hourly.begin(), hourly.end());
    const double hi = *std::max_element(hourly.begin(), hourly.end());
    for (double v : fine) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }
}

TEST_CASE("synthesized month has the documented shape and bounds") {
    const Profile p = synthesize_profile(31, 5.0, 42);
    REQUIRE(p.irr.size() == 3);
    CHECK(p.n_steps() == 8928);
    for (const auto& series : p.irr) {
        REQUIRE(series.size() == 8928);
        for (double v : series) CHECK(v >= 0.0);
    }
    for (double m : p.load_mult) {
        CHECK(m >= 0.85);
        CHECK(m <= 1.5);
    }
}

TEST_CASE("per-DG gains stay within [1, 1.14] of the shared base curve") {
    const Profile p = synthesize_profile(7, 5.0, 3);
    // Recover the base curve as the minimum across DGs; every series must
    // then sit within the gain envelope of that base.
    for (std::size_t t = 0; t < p.n_steps(); ++t) {
        double base = p.irr[0][t];
        for (const auto& s : p.irr) base = std::min(base, s[t]);
        for (const auto& s : p.irr) {
            if (base == 0.0) {
                CHECK(s[t] == 0.0);
            } else {
                const double g = s[t] / (base / 1.0);
                CHECK(g >= 1.0 - 1e-12);
                CHECK(g <= 1.14 / 1.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("profile synthesis is deterministic per seed") {
    const Profile a = synthesize_profile(3, 5.0, 9);
    const Profile b = synthesize_profile(3, 5.0, 9);
    const Profile c = synthesize_profile(3, 5.0, 10);
    CHECK(profile_to_csv(a) == profile_to_csv(b));
    CHECK(profile_to_csv(a) != profile_to_csv(c));
}

TEST_CASE("profile CSV round-trips through save and load") {
    const Profile p = synthesize_profile(2, 5.0, 11);
    const Profile q = load_profile(profile_to_csv(p));
    REQUIRE(q.irr.size() == p.irr.size());
    REQUIRE(q.n_steps() == p.n_steps());
    for (std::size_t d = 0; d < p.irr.size(); ++d)
        for (std::size_t t = 0; t < p.n_steps(); ++t)
            CHECK(q.irr[d][t] == doctest::Approx(p.irr[d][t]).epsilon(1e-9));
}

TEST_CASE("profile CSV loader rejects malformed input") {
    CHECK_THROWS_AS((void)load_profile(""), std::runtime_error);
    CHECK_THROWS_AS((void)load_profile("bad,header\n1,2\n"), std::runtime_error);
    // non-monotone timestamps
    CHECK_THROWS_AS((void)load_profile("t_iso,irr_dg1,load_mult\n00002:00,5,1\n00001:00,5,1\n"),
                    std::runtime_error);
    // negative irradiance
    CHECK_THROWS_AS((void)load_profile("t_iso,irr_dg1,load_mult\n00001:00,-5,1\n"),
                    std::runtime_error);
}
