// ems: pipeline driver for the microgrid NN-EMS artifact.
//
// Subcommands: pv-fit, dataset, train, simulate, report.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ems/dataset.hpp"
#include "ems/netmodel.hpp"
#include "ems/neural.hpp"
#include "ems/opf.hpp"
#include "ems/powerflow.hpp"
#include "ems/profiles.hpp"
#include "ems/simloop.hpp"
#include "ems/svgplot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Atomic write: temp file in the same directory, then rename.
void write_file(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct ManifestBuilder {
    std::string command;
    json params = json::object();
    json inputs = json::object();
    std::uint64_t seed = 0;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void input_file(const std::string& role, const std::string& path, const std::string& content) {
        inputs[role] = {{"path", path}, {"fnv1a", fnv1a_hex(content)}};
    }
    void write(const std::string& out_dir) const {
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0).count();
        json m = {{"command", command},
                  {"params", params},
                  {"inputs", inputs},
                  {"seed", seed},
                  {"tool_version", kToolVersion},
                  {"wall_ms", ms}};
        write_file((fs::path(out_dir) / (command + "_manifest.json")).string(), m.dump(2) + "\n");
    }
};

struct GlobalOpts {
    std::uint64_t seed = 42;
    std::string out_dir = ".";
    bool quiet = false;
};

std::ostream& say(const GlobalOpts& g) {
    static std::ostringstream devnull;
    if (g.quiet) {
        devnull.str("");
        return devnull;
    }
    return std::cout;
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
    return (fs::path(g.out_dir) / name).string();
}

// ---------------------------------------------------------------- pv-fit ---

int cmd_pv_fit(const GlobalOpts& g, const std::string& curve_file) {
    ManifestBuilder mb;
    mb.command = "pv-fit";
    mb.seed = g.seed;
    const std::string text = read_file(curve_file);
    mb.input_file("curve", curve_file, text);
    mb.params["curve_file"] = curve_file;

    const ems::PanelCurve curve = ems::load_panel_curve(text);
    if (curve.samples.size() < 2) throw DataError("panel curve has fewer than two samples");
    const auto [c1, c2] = ems::fit_panel(curve);

    double sse = 0.0, worst = 0.0;
    for (const auto& [irr, p] : curve.samples) {
        const double r = p - (c1 * irr + c2);
        sse += r * r;
        worst = std::max(worst, std::abs(r));
    }
    const double rms = std::sqrt(sse / curve.samples.size());

    say(g) << "pv-fit: c1=" << c1 << " c2=" << c2 << " rms_residual_w=" << rms
           << " max_residual_w=" << worst << " n=" << curve.samples.size() << "\n";

    json fit = {{"c1", c1}, {"c2", c2}, {"sse_w2", sse}, {"rms_w", rms},
                {"max_abs_residual_w", worst}, {"n_samples", curve.samples.size()}};
    write_file(out_path(g, "pv_fit.json"), fit.dump(2) + "\n");
    mb.write(g.out_dir);
    return 0;
}

// --------------------------------------------------------------- dataset ---

int cmd_dataset(const GlobalOpts& g, const std::string& network_file,
                const std::string& profile_file, bool synthesize, int days, double dt,
                bool fixed_bounds, const std::string& out_name) {
    ManifestBuilder mb;
    mb.command = "dataset";
    mb.seed = g.seed;
    mb.params = {{"network", network_file}, {"synthesize", synthesize}, {"days", days},
                 {"dt_minutes", dt}, {"banded", !fixed_bounds}, {"out", out_name}};

    const std::string net_text = read_file(network_file);
    mb.input_file("network", network_file, net_text);
    const ems::Microgrid mg = ems::load_network(net_text);

    ems::Profile profile;
    if (synthesize) {
        profile = ems::synthesize_profile(days, dt, g.seed, mg.n_dgs());
    } else {
        if (profile_file.empty()) throw CLI::ValidationError("dataset", "need --profile or --synthesize");
        const std::string ptext = read_file(profile_file);
        mb.input_file("profile", profile_file, ptext);
        profile = ems::load_profile(ptext);
        profile.dt_minutes = dt;
    }

    std::vector<double> soc0;
    for (const auto& dg : mg.dgs) soc0.push_back(dg.battery.soc);

    ems::Dataset ds = ems::generate(mg, profile, soc0, !fixed_bounds);
    ds.meta.seed = g.seed;
    const ems::DatasetSummary sum = ems::summarize(ds);
    const bool droop_lost = sum.f_near_low_fraction >= 0.9;

    say(g) << "dataset: rows=" << ds.rows.size() << " feasible=" << ds.meta.n_feasible
           << " corr(f,sum_p_inv)=" << sum.corr_f_pinv
           << " f_near_low_fraction=" << sum.f_near_low_fraction
           << (droop_lost ? " [droop effect lost]" : " [droop effect preserved]") << "\n"
           << "  p_pv_max=" << sum.p_pv_max << " kW, p_bat in [" << sum.p_bat_min << ", "
           << sum.p_bat_max << "] kW, err mean/max=" << sum.err_mean << "/" << sum.err_max
           << " %, max pair dSoC=" << sum.soc_pair_diff_max
           << " %, charging fraction=" << sum.charging_fraction << "\n";

    write_file(out_path(g, out_name), ems::dataset_to_csv(ds));
    json meta = {{"seed", g.seed},
                 {"banded", !fixed_bounds},
                 {"n_dgs", ds.meta.n_dgs},
                 {"n_steps", ds.meta.n_steps},
                 {"n_feasible", ds.meta.n_feasible},
                 {"peak_load_mult", ds.meta.peak_load_mult},
                 {"summary",
                  {{"p_pv_max_kw", sum.p_pv_max},
                   {"p_bat_min_kw", sum.p_bat_min},
                   {"p_bat_max_kw", sum.p_bat_max},
                   {"err_mean_pct", sum.err_mean},
                   {"err_max_pct", sum.err_max},
                   {"soc_pair_diff_max_pct", sum.soc_pair_diff_max},
                   {"charging_fraction", sum.charging_fraction},
                   {"corr_f_pinv", sum.corr_f_pinv},
                   {"f_near_low_fraction", sum.f_near_low_fraction},
                   {"droop_lost", droop_lost}}}};
    write_file(out_path(g, out_name + ".meta.json"), meta.dump(2) + "\n");
    mb.write(g.out_dir);
    return 0;
}

// ----------------------------------------------------------------- train ---

std::vector<double> parse_fractions(const std::string& text) {
    std::vector<double> f;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(std::stod(cell));
    if (f.size() != 3 || std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9)
        throw CLI::ValidationError("--fractions", "need three comma-separated fractions summing to 1");
    return f;
}

void print_fit(const GlobalOpts& g, const std::string& tag, const ems::TrainReport& rep,
               double mse_test, const std::vector<double>& r_test) {
    auto& os = say(g);
    os << tag << ": mse train/val/test=" << rep.mse_train << "/" << rep.mse_val << "/"
       << mse_test << " epochs=" << rep.epochs << " stop=" << rep.stop_reason << " R_test=[";
    for (std::size_t i = 0; i < r_test.size(); ++i) os << (i ? ", " : "") << r_test[i];
    os << "]\n";
}

int cmd_train(const GlobalOpts& g, const std::string& dataset_file, int hidden,
              bool decentralized, const std::string& fractions_text, const std::string& out_name) {
    const std::vector<double> fr = parse_fractions(fractions_text);

    ManifestBuilder mb;
    mb.command = "train";
    mb.seed = g.seed;
    mb.params = {{"dataset", dataset_file}, {"hidden", hidden},
                 {"decentralized", decentralized}, {"fractions", fractions_text},
                 {"out", out_name}};
    const std::string text = read_file(dataset_file);
    mb.input_file("dataset", dataset_file, text);

    const ems::Dataset ds = ems::dataset_from_csv(text);
    if (ds.meta.n_feasible < 100) throw DataError("dataset too small to train on");
    const ems::SplitResult parts = ems::split(ds, fr[0], fr[1], fr[2], g.seed);

    ems::TrainOptions opt;
    opt.n_hidden = hidden;
    opt.seed = g.seed;

    json index = json::object();
    index["decentralized"] = decentralized;
    if (!decentralized) {
        const auto [model, rep] = ems::train_lm(
            ems::inputs_centralized(parts.train), ems::targets_centralized(parts.train),
            ems::inputs_centralized(parts.val), ems::targets_centralized(parts.val), opt);
        const Eigen::MatrixXd xt = ems::inputs_centralized(parts.test);
        const Eigen::MatrixXd yt = ems::targets_centralized(parts.test);
        const Eigen::MatrixXd pt = ems::predict(model, xt);
        Eigen::MatrixXd yn(yt.rows(), yt.cols()), pn(yt.rows(), yt.cols());
        for (Eigen::Index s = 0; s < yt.rows(); ++s) {
            yn.row(s) = model.normalize_out(yt.row(s).transpose()).transpose();
            pn.row(s) = model.normalize_out(pt.row(s).transpose()).transpose();
        }
        const double mse_test = (pn - yn).squaredNorm() / (yn.rows() * yn.cols());
        const auto r_test = ems::regression_r(pt, yt);
        print_fit(g, "train[centralized]", rep, mse_test, r_test);
        write_file(out_path(g, out_name), ems::save_model(model));
        index["model"] = out_name;
        index["mse_test"] = mse_test;
        index["r_test"] = r_test;
    } else {
        json files = json::array();
        for (int d = 0; d < ds.meta.n_dgs; ++d) {
            const auto [model, rep] = ems::train_lm(
                ems::inputs_decentralized(parts.train, d), ems::targets_decentralized(parts.train, d),
                ems::inputs_decentralized(parts.val, d), ems::targets_decentralized(parts.val, d), opt);
            const Eigen::MatrixXd xt = ems::inputs_decentralized(parts.test, d);
            const Eigen::MatrixXd yt = ems::targets_decentralized(parts.test, d);
            const Eigen::MatrixXd pt = ems::predict(model, xt);
            Eigen::MatrixXd yn(yt.rows(), 1), pn(yt.rows(), 1);
            for (Eigen::Index s = 0; s < yt.rows(); ++s) {
                yn.row(s) = model.normalize_out(yt.row(s).transpose()).transpose();
                pn.row(s) = model.normalize_out(pt.row(s).transpose()).transpose();
            }
            const double mse_test = (pn - yn).squaredNorm() / yn.rows();
            const auto r_test = ems::regression_r(pt, yt);
            print_fit(g, "train[dg" + std::to_string(d + 1) + "]", rep, mse_test, r_test);
            const std::string name = out_name + ".dg" + std::to_string(d + 1) + ".json";
            write_file(out_path(g, name), ems::save_model(model));
            files.push_back({{"model", name}, {"mse_test", mse_test}, {"r_test", r_test}});
        }
        index["models"] = files;
    }
    write_file(out_path(g, out_name + ".index.json"), index.dump(2) + "\n");
    mb.write(g.out_dir);
    return 0;
}

// -------------------------------------------------------------- simulate ---

ems::Controller load_controller(const std::string& spec, const ems::Microgrid& mg,
                                const ems::Scenario& scenario, ManifestBuilder& mb) {
    if (spec == "fixed")
        return ems::FixedController{mg.bases.f_to_pu(scenario.fixed_f_n_hz)};
    if (fs::is_directory(spec)) {
        std::vector<ems::NnModel> models;
        for (int d = 1; d <= mg.n_dgs(); ++d) {
            std::string found;
            for (const auto& entry : fs::directory_iterator(spec)) {
                const std::string name = entry.path().filename().string();
                if (name.find(".dg" + std::to_string(d) + ".json") != std::string::npos) {
                    found = entry.path().string();
                    break;
                }
            }
            if (found.empty())
                throw DataError("no model for dg" + std::to_string(d) + " in " + spec);
            const std::string text = read_file(found);
            mb.input_file("model_dg" + std::to_string(d), found, text);
            models.push_back(ems::load_model(text));
        }
        return models;
    }
    const std::string text = read_file(spec);
    mb.input_file("model", spec, text);
    return ems::load_model(text);
}

int cmd_simulate(const GlobalOpts& g, const std::string& network_file,
                 const std::string& scenario_file, const std::string& controller_spec,
                 const std::string& out_name) {
    ManifestBuilder mb;
    mb.command = "simulate";
    mb.seed = g.seed;
    mb.params = {{"network", network_file}, {"scenario", scenario_file},
                 {"controller", controller_spec}, {"out", out_name}};

    const std::string net_text = read_file(network_file);
    mb.input_file("network", network_file, net_text);
    const ems::Microgrid mg = ems::load_network(net_text);

    const std::string sc_text = read_file(scenario_file);
    mb.input_file("scenario", scenario_file, sc_text);
    const ems::Scenario scenario = ems::load_scenario(sc_text);

    const ems::Controller controller = load_controller(controller_spec, mg, scenario, mb);
    const ems::SimTrace trace = ems::run(mg, scenario, controller);
    write_file(out_path(g, out_name), ems::trace_to_csv(trace));
    mb.write(g.out_dir);

    if (!trace.diagnostic.empty()) {
        std::cerr << "simulate: truncated — " << trace.diagnostic << "\n";
        return 3;
    }
    const auto& last = trace.samples.back();
    double worst_dif = 0.0;
    for (double d : last.soc_dif) worst_dif = std::max(worst_dif, std::abs(d));
    say(g) << "simulate: " << trace.samples.size() << " samples, final f=" << last.f
           << " p.u., final max|soc_dif|=" << worst_dif << " %\n";
    return 0;
}

// ---------------------------------------------------------------- report ---

void plot_traces(const GlobalOpts& g, const ems::SimTrace& a, const ems::SimTrace& b) {
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c"};
    auto series_of = [&](const ems::SimTrace& tr, auto pick, const std::string& tag, bool dashed) {
        std::vector<ems::PlotSeries> out;
        const int n = static_cast<int>(tr.samples.front().soc.size());
        for (int d = 0; d < n; ++d) {
            ems::PlotSeries s;
            s.label = tag + " dg" + std::to_string(d + 1);
            s.color = colors[d % 3];
            s.dashed = dashed;
            for (const auto& smp : tr.samples) {
                s.x.push_back(smp.t_s);
                s.y.push_back(pick(smp, d));
            }
            out.push_back(std::move(s));
        }
        return out;
    };
    auto emit = [&](const std::string& file, const std::string& title, const std::string& ylab,
                    auto pick) {
        ems::PlotSpec spec;
        spec.title = title;
        spec.x_label = "time (s)";
        spec.y_label = ylab;
        for (auto& s : series_of(a, pick, "A", false)) spec.series.push_back(std::move(s));
        for (auto& s : series_of(b, pick, "B", true)) spec.series.push_back(std::move(s));
        write_file(out_path(g, file), ems::render_svg(spec));
    };
    emit("report_soc_dif.svg", "SoC deviation from fleet mean", "soc_dif (%)",
         [](const ems::SimSample& s, int d) { return s.soc_dif[d]; });
    emit("report_p_bat.svg", "Battery power", "p_bat (kW)",
         [](const ems::SimSample& s, int d) { return s.p_bat[d]; });
    emit("report_f_n.svg", "Nominal frequency setpoints", "f_n (p.u.)",
         [](const ems::SimSample& s, int d) { return s.f_n[d]; });
    emit("report_p_inv.svg", "Inverter power", "p_inv (kW)",
         [](const ems::SimSample& s, int d) { return s.p_inv[d]; });

    ems::PlotSpec freq;
    freq.title = "System frequency";
    freq.x_label = "time (s)";
    freq.y_label = "f (p.u.)";
    ems::PlotSeries fa{"A", {}, {}, "#1f77b4", false}, fb{"B", {}, {}, "#d62728", true};
    for (const auto& s : a.samples) { fa.x.push_back(s.t_s); fa.y.push_back(s.f); }
    for (const auto& s : b.samples) { fb.x.push_back(s.t_s); fb.y.push_back(s.f); }
    freq.series = {fa, fb};
    write_file(out_path(g, "report_f.svg"), ems::render_svg(freq));
}

int cmd_report(const GlobalOpts& g, const std::string& trace_a_file,
               const std::string& trace_b_file) {
    ManifestBuilder mb;
    mb.command = "report";
    mb.seed = g.seed;
    mb.params = {{"trace_a", trace_a_file}, {"trace_b", trace_b_file}};

    const std::string ta = read_file(trace_a_file);
    const std::string tb = read_file(trace_b_file);
    mb.input_file("trace_a", trace_a_file, ta);
    mb.input_file("trace_b", trace_b_file, tb);

    const ems::SimTrace a = ems::trace_from_csv(ta);
    const ems::SimTrace b = ems::trace_from_csv(tb);
    const ems::CompareReport rep = ems::compare(a, b);

    say(g) << "report: final max|soc_dif| A=" << rep.a_final_max_soc_dif
           << " % B=" << rep.b_final_max_soc_dif
           << " %, p_bat spread A=" << rep.a_pbat_spread_pct << " % B=" << rep.b_pbat_spread_pct
           << " %, max|df|=" << rep.max_abs_f_delta << " p.u., max|dSoC|="
           << rep.max_abs_soc_delta << " %\n";

    json out = {{"a_final_max_soc_dif_pct", rep.a_final_max_soc_dif},
                {"b_final_max_soc_dif_pct", rep.b_final_max_soc_dif},
                {"a_pbat_spread_pct", rep.a_pbat_spread_pct},
                {"b_pbat_spread_pct", rep.b_pbat_spread_pct},
                {"max_abs_f_delta_pu", rep.max_abs_f_delta},
                {"max_abs_soc_delta_pct", rep.max_abs_soc_delta}};
    write_file(out_path(g, "report.json"), out.dump(2) + "\n");
    plot_traces(g, a, b);
    mb.write(g.out_dir);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural-network energy management pipeline for islanded PV-battery microgrids"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "RNG seed shared by all stages");
    app.add_option("--out-dir", g.out_dir, "Directory for all outputs");
    app.add_flag("--quiet", g.quiet, "Suppress progress output");

    // pv-fit
    std::string curve_file;
    auto* pvfit = app.add_subcommand("pv-fit", "Fit the linear panel power model");
    pvfit->add_option("curve", curve_file, "Panel irradiance/power CSV")->required();

    // dataset
    std::string network_file = "data/cigre_lv.json", profile_file, dataset_out = "dataset.csv";
    bool synthesize = false, fixed_bounds = false;
    int days = 31;
    double dt = 5.0;
    auto* dataset = app.add_subcommand("dataset", "Generate the OPF training dataset");
    dataset->add_option("--network", network_file, "Network JSON");
    dataset->add_option("--profile", profile_file, "Profile CSV (alternative to --synthesize)");
    dataset->add_flag("--synthesize", synthesize, "Generate a synthetic profile");
    dataset->add_option("--days", days, "Days to synthesize");
    dataset->add_option("--dt", dt, "Timestep, minutes");
    auto* banded_flag = dataset->add_flag("--banded", "Load-stepped f_n bounds (default)");
    dataset->add_flag("--fixed-bounds", fixed_bounds, "Fixed [0.99, 1.01] f_n bounds")
        ->excludes(banded_flag);
    dataset->add_option("--out", dataset_out, "Dataset CSV name");

    // train
    std::string train_dataset, fractions = "0.8,0.1,0.1", model_out = "model.json";
    int hidden = 10;
    bool decentralized = false;
    auto* train = app.add_subcommand("train", "Train the NN-EMS on a dataset");
    train->add_option("dataset", train_dataset, "Dataset CSV")->required();
    train->add_option("--hidden", hidden, "Hidden neurons");
    train->add_flag("--decentralized", decentralized, "Train one 2-input model per DG");
    train->add_option("--fractions", fractions, "train,val,test fractions");
    train->add_option("--out", model_out, "Model file name (or prefix when decentralized)");

    // simulate
    std::string sim_network = "data/cigre_lv.json", scenario_file, controller_spec = "fixed";
    std::string trace_out = "trace.csv";
    auto* simulate = app.add_subcommand("simulate", "Run a closed-loop scenario");
    simulate->add_option("--network", sim_network, "Network JSON");
    simulate->add_option("--scenario", scenario_file, "Scenario JSON")->required();
    simulate->add_option("--controller", controller_spec,
                         "'fixed', a model file, or a directory of per-DG models");
    simulate->add_option("--out", trace_out, "Trace CSV name");

    // report
    std::string trace_a, trace_b;
    auto* report = app.add_subcommand("report", "Compare two traces and emit plots");
    report->add_option("trace_a", trace_a, "First trace CSV")->required();
    report->add_option("trace_b", trace_b, "Second trace CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (pvfit->parsed()) return cmd_pv_fit(g, curve_file);
        if (dataset->parsed())
            return cmd_dataset(g, network_file, profile_file, synthesize, days, dt,
                               fixed_bounds, dataset_out);
        if (train->parsed())
            return cmd_train(g, train_dataset, hidden, decentralized, fractions, model_out);
        if (simulate->parsed())
            return cmd_simulate(g, sim_network, scenario_file, controller_spec, trace_out);
        if (report->parsed()) return cmd_report(g, trace_a, trace_b);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ems::PowerFlowError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
