#include "ems/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ems {

std::pair<double, double> fit_panel(const PanelCurve& curve) {
    const auto& s = curve.samples;
    if (s.size() < 2) throw std::invalid_argument("fit_panel needs at least two samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(s.size());
    for (const auto& [x, y] : s) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double det = n * sxx - sx * sx;
    if (det <= 0.0) throw std::invalid_argument("degenerate panel curve: all irradiance values equal");
    const double c1 = (n * sxy - sx * sy) / det;
    const double c2 = (sy * sxx - sx * sxy) / det;
    return {c1, c2};
}

double panel_power(double irr, double c1, double c2) {
    if (irr < 0.0) throw std::invalid_argument("negative irradiance");
    if (irr == 0.0) return 0.0;
    return std::max(0.0, c1 * irr + c2);
}

double array_power(double irr, const PvArray& pv) {
    return panel_power(irr, pv.c1, pv.c2) * pv.n_panels / 1000.0;
}

std::vector<double> interpolate_hourly(const std::vector<double>& hourly, double dt_minutes) {
    if (hourly.empty()) return {};
    if (dt_minutes <= 0.0 || std::fmod(60.0, dt_minutes) != 0.0)
        throw std::invalid_argument("dt must divide 60 minutes");
    const int per_hour = static_cast<int>(60.0 / dt_minutes);
    std::vector<double> out;
    out.reserve((hourly.size() - 1) * per_hour + 1);
    for (std::size_t h = 0; h + 1 < hourly.size(); ++h) {
        for (int k = 0; k < per_hour; ++k) {
            const double a = static_cast<double>(k) / per_hour;
            out.push_back(hourly[h] * (1.0 - a) + hourly[h + 1] * a);
        }
    }
    out.push_back(hourly.back());
    return out;
}

namespace {

// First-order filtered uniform noise rescaled to [lo, hi]. The filter keeps
// consecutive gains close so the per-DG traces differ smoothly.
std::vector<double> smooth_gain_series(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> g(n);
    double state = uni(rng);
    const double alpha = 0.03;
    for (std::size_t t = 0; t < n; ++t) {
        state += alpha * (uni(rng) - state);
        g[t] = state;
    }
    const auto [mn_it, mx_it] = std::minmax_element(g.begin(), g.end());
    const double mn = *mn_it, mx = *mx_it;
    const double span = (mx - mn) > 1e-12 ? (mx - mn) : 1.0;
    for (auto& v : g) v = lo + (hi - lo) * (v - mn) / span;
    return g;
}

} // namespace

Profile synthesize_profile(int days, double dt_minutes, std::uint64_t seed, int n_dgs) {
    if (days < 1) throw std::invalid_argument("days must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    // Hourly diurnal irradiance: half-sine daylight 06:00-20:00, peak 950,
    // scaled per day by a cloudiness factor in [0.3, 1] (cubed draw keeps
    // the month's PV energy near the load energy).
    std::vector<double> hourly;
    hourly.reserve(days * 24 + 1);
    std::vector<double> cloud(days);
    for (int d = 0; d < days; ++d) {
        const double u = uni(rng);
        cloud[d] = 0.3 + 0.7 * u * u * u;
    }
    for (int d = 0; d < days; ++d) {
        for (int h = 0; h < 24; ++h) {
            double irr = 0.0;
            if (h >= 6 && h <= 20)
                irr = 950.0 * cloud[d] * std::sin(std::numbers::pi * (h - 6) / 14.0);
            hourly.push_back(std::max(0.0, irr));
        }
    }
    hourly.push_back(0.0); // midnight after the last day

    const std::vector<double> base = interpolate_hourly(hourly, dt_minutes);
    const std::size_t n = static_cast<std::size_t>(days) * 24 * static_cast<std::size_t>(60.0 / dt_minutes);

    Profile p;
    p.dt_minutes = dt_minutes;
    p.irr.resize(n_dgs);
    for (int i = 0; i < n_dgs; ++i) {
        const auto gain = smooth_gain_series(n, 1.0, 1.14, rng);
        p.irr[i].resize(n);
        for (std::size_t t = 0; t < n; ++t) p.irr[i][t] = base[t] * gain[t];
    }

    // Load: morning and evening peaks with slow noise, held in [0.85, 1.5].
    // A per-day scale decorrelates load level from time of day so the
    // (PV power, frequency) training pairs cover an area, not a curve.
    const auto wobble = smooth_gain_series(n, -1.0, 1.0, rng);
    std::vector<double> day_scale(days);
    for (int d = 0; d < days; ++d) day_scale[d] = 0.92 + 0.20 * uni(rng);
    p.load_mult.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double day_hours = t * dt_minutes / 60.0;
        const double hour = std::fmod(day_hours, 24.0);
        const int d = std::min(days - 1, static_cast<int>(day_hours / 24.0));
        const double morning = std::exp(-0.5 * std::pow((hour - 8.0) / 2.0, 2));
        const double evening = std::exp(-0.5 * std::pow((hour - 19.0) / 2.5, 2));
        double m = (0.9 + 0.25 * morning + 0.55 * evening) * day_scale[d] + 0.06 * wobble[t];
        p.load_mult[t] = std::clamp(m, 0.85, 1.5);
    }
    return p;
}

std::string profile_to_csv(const Profile& p) {
    std::ostringstream os;
    os << "t_iso";
    for (std::size_t i = 0; i < p.irr.size(); ++i) os << ",irr_dg" << (i + 1);
    os << ",load_mult\n";
    char buf[64];
    for (std::size_t t = 0; t < p.n_steps(); ++t) {
        const int minutes = static_cast<int>(t * p.dt_minutes);
        std::snprintf(buf, sizeof(buf), "%05d:%02d", minutes / 60, minutes % 60);
        os << buf;
        for (const auto& series : p.irr) {
            std::snprintf(buf, sizeof(buf), ",%.10g", series[t]);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.10g\n", p.load_mult[t]);
        os << buf;
    }
    return os.str();
}

namespace {

std::vector<std::string> split_line(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

} // namespace

Profile load_profile(const std::string& csv_text) {
    std::istringstream is(csv_text);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty profile csv");
    const auto header = split_line(line);
    if (header.size() < 3 || header.front() != "t_iso" || header.back() != "load_mult")
        throw std::runtime_error("profile csv header must be t_iso,irr_dg1,...,load_mult");
    const std::size_t n_dgs = header.size() - 2;

    Profile p;
    p.irr.resize(n_dgs);
    std::string prev_t;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error("profile csv row arity mismatch: " + line);
        if (!prev_t.empty() && cells[0] <= prev_t)
            throw std::runtime_error("profile csv timestamps not monotone at " + cells[0]);
        prev_t = cells[0];
        for (std::size_t i = 0; i < n_dgs; ++i) {
            const double v = std::stod(cells[1 + i]);
            if (v < 0.0) throw std::runtime_error("negative irradiance at " + cells[0]);
            p.irr[i].push_back(v);
        }
        const double m = std::stod(cells.back());
        if (m <= 0.0) throw std::runtime_error("nonpositive load multiplier at " + cells[0]);
        p.load_mult.push_back(m);
    }
    return p;
}

PanelCurve load_panel_curve(const std::string& csv_text) {
    std::istringstream is(csv_text);
    std::string line;
    PanelCurve curve;
    while (std::getline(is, line)) {
        if (line.empty() || !(std::isdigit(line[0]) || line[0] == '-')) continue;
        const auto cells = split_line(line);
        if (cells.size() != 2) throw std::runtime_error("panel curve rows must be irr,p_panel");
        curve.samples.emplace_back(std::stod(cells[0]), std::stod(cells[1]));
    }
    for (std::size_t i = 1; i < curve.samples.size(); ++i)
        if (curve.samples[i].first <= curve.samples[i - 1].first)
            throw std::runtime_error("panel curve irradiance must be strictly increasing");
    return curve;
}

} // namespace ems
