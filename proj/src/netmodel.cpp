#include "ems/netmodel.hpp"

#include <numbers>
#include <queue>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace ems {
namespace {

using nlohmann::json;

// Breadth-first reachability over the line set.
bool graph_connected(const Microgrid& mg) {
    const int n = mg.n_buses();
    if (n <= 1) return true;
    std::vector<std::vector<int>> adj(n + 1);
    for (const auto& l : mg.lines) {
        adj[l.from_bus].push_back(l.to_bus);
        adj[l.to_bus].push_back(l.from_bus);
    }
    std::vector<bool> seen(n + 1, false);
    std::queue<int> q;
    q.push(mg.buses.front().id);
    seen[mg.buses.front().id] = true;
    int count = 0;
    while (!q.empty()) {
        int b = q.front();
        q.pop();
        ++count;
        for (int nb : adj[b]) {
            if (!seen[nb]) {
                seen[nb] = true;
                q.push(nb);
            }
        }
    }
    return count == n;
}

} // namespace

Microgrid load_network(const std::string& config_text) {
    json doc;
    try {
        doc = json::parse(config_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("network config is not valid JSON: ") + e.what());
    }

    Microgrid mg;
    if (doc.contains("bases")) {
        const auto& b = doc.at("bases");
        mg.bases.s_kva = b.value("s_kva", 100.0);
        mg.bases.v_ph_ph = b.value("v_ph_ph", 400.0);
        mg.bases.f_hz = b.value("f_hz", 50.0);
    }

    for (const auto& jb : doc.at("buses")) {
        Bus bus;
        bus.id = jb.at("id").get<int>();
        bus.p_load_rated = jb.value("p_kw", 0.0);
        bus.q_load_rated = jb.value("q_kvar", 0.0);
        mg.buses.push_back(bus);
    }
    for (const auto& jl : doc.at("lines")) {
        Line line;
        line.from_bus = jl.at("from").get<int>();
        line.to_bus = jl.at("to").get<int>();
        line.r_ohm = jl.at("r_ohm").get<double>();
        line.x_ohm = jl.at("x_ohm").get<double>();
        mg.lines.push_back(line);
    }
    for (const auto& jd : doc.at("dgs")) {
        Dg dg;
        dg.bus = jd.at("bus").get<int>();
        dg.droop.m_p = jd.at("m_p_rad_s_kw").get<double>() / (2.0 * std::numbers::pi);
        dg.droop.n_q = jd.value("n_q", 0.0);
        dg.droop.v_n = jd.value("v_n_pu", 1.0);
        dg.pv.n_panels = jd.at("n_panels").get<int>();
        dg.pv.c1 = jd.at("c1").get<double>();
        dg.pv.c2 = jd.at("c2").get<double>();
        dg.battery.v_bat = jd.at("v_bat").get<double>();
        dg.battery.c_rating = jd.at("c_rating_ah").get<double>();
        dg.battery.soc = jd.value("soc_init", 50.0);
        dg.battery.soc_min = jd.value("soc_min", 10.0);
        dg.battery.soc_max = jd.value("soc_max", 90.0);
        dg.p_inv_max = jd.at("p_inv_max_kw").get<double>();
        mg.dgs.push_back(dg);
    }

    mg.rated_load_total = 0.0;
    for (const auto& b : mg.buses) mg.rated_load_total += b.p_load_rated;

    auto violations = validate(mg);
    if (!violations.empty()) throw std::runtime_error("invalid network: " + violations.front());
    return mg;
}

std::vector<std::string> validate(const Microgrid& mg) {
    std::vector<std::string> out;
    const int n = mg.n_buses();
    if (n == 0) {
        out.push_back("no buses");
        return out;
    }

    std::set<int> ids;
    for (const auto& b : mg.buses) {
        if (!ids.insert(b.id).second)
            out.push_back("duplicate bus id " + std::to_string(b.id));
        if (b.p_load_rated < 0.0 || b.q_load_rated < 0.0)
            out.push_back("negative load on bus " + std::to_string(b.id));
    }
    for (int i = 1; i <= n; ++i)
        if (!ids.count(i)) {
            out.push_back("bus ids not contiguous: missing " + std::to_string(i));
            return out;
        }

    for (const auto& l : mg.lines) {
        const std::string tag = std::to_string(l.from_bus) + "-" + std::to_string(l.to_bus);
        if (l.from_bus == l.to_bus)
            out.push_back("self-loop on line " + tag);
        if (!ids.count(l.from_bus) || !ids.count(l.to_bus))
            out.push_back("line " + tag + " references a nonexistent bus");
        if (l.r_ohm < 0.0 || l.x_ohm < 0.0)
            out.push_back("negative impedance on line " + tag);
        if (l.r_ohm == 0.0 && l.x_ohm == 0.0)
            out.push_back("zero impedance on line " + tag);
    }

    if (mg.dgs.empty()) out.push_back("at least one DG required");
    for (std::size_t i = 0; i < mg.dgs.size(); ++i) {
        const auto& dg = mg.dgs[i];
        const std::string tag = "dg " + std::to_string(i + 1);
        if (!ids.count(dg.bus)) out.push_back(tag + " placed on nonexistent bus " + std::to_string(dg.bus));
        if (dg.droop.m_p <= 0.0) out.push_back(tag + ": m_p must be positive");
        if (dg.droop.n_q < 0.0) out.push_back(tag + ": n_q must be nonnegative");
        if (dg.droop.f_n < 0.9 || dg.droop.f_n > 1.1) out.push_back(tag + ": f_n outside [0.9, 1.1] p.u.");
        if (dg.droop.v_n < 0.9 || dg.droop.v_n > 1.1) out.push_back(tag + ": v_n outside [0.9, 1.1] p.u.");
        if (dg.pv.n_panels <= 0) out.push_back(tag + ": n_panels must be positive");
        if (dg.pv.c1 <= 0.0) out.push_back(tag + ": c1 must be positive");
        if (dg.battery.v_bat <= 0.0) out.push_back(tag + ": v_bat must be positive");
        if (dg.battery.c_rating <= 0.0) out.push_back(tag + ": c_rating must be positive");
        if (dg.battery.soc_min >= dg.battery.soc_max) out.push_back(tag + ": soc_min must be below soc_max");
        if (dg.battery.soc < dg.battery.soc_min || dg.battery.soc > dg.battery.soc_max)
            out.push_back(tag + ": initial soc outside [soc_min, soc_max]");
        if (dg.p_inv_max <= 0.0) out.push_back(tag + ": p_inv_max must be positive");
    }

    if (out.empty() && !graph_connected(mg)) out.push_back("graph disconnected");
    return out;
}

} // namespace ems
