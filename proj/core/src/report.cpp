#include "hybridgrid/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "hybridgrid/io_util.hpp"

namespace hybridgrid {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

} // namespace

void write_run_csv(const SimulationOutput& out, const std::string& path) {
    std::ostringstream csv;
    csv << "t,op_state,breaker,p_gcp_w,q_gcp_var";
    for (const std::string& n : out.link_names) csv << ",p_" << n << "_w,q_" << n << "_var";
    csv << ",angle_up_deg,angle_down_deg,dangle_deg,freq_up_hz,freq_down_hz";
    for (const std::string& n : out.storage_names) csv << ",soc_" << n << ",p_" << n << "_w";
    for (const std::string& n : out.bus_names) csv << ",v_" << n << "_v";
    for (const std::string& n : out.branch_names) csv << ",i_" << n << "_a";
    csv << ",opf_ran,opf_kkt,opf_pred_imargin_pu,vmargin_pu,imargin_pu\n";

    for (const TickRecord& r : out.records) {
        csv << fmt(r.t) << ',' << to_string(r.op_state) << ',' << (r.breaker_closed ? 1 : 0) << ','
            << fmt(r.p_gcp_w) << ',' << fmt(r.q_gcp_var);
        for (std::size_t i = 0; i < out.link_names.size(); ++i)
            csv << ',' << fmt(r.ic_p_w[i]) << ',' << fmt(r.ic_q_var[i]);
        csv << ',' << fmt(r.angle_up_deg) << ',' << fmt(r.angle_down_deg) << ','
            << fmt(r.dangle_deg) << ',' << fmt(r.freq_up_hz) << ',' << fmt(r.freq_down_hz);
        for (std::size_t i = 0; i < out.storage_names.size(); ++i)
            csv << ',' << fmt(r.soc[i]) << ',' << fmt(r.p_storage_w[i]);
        for (std::size_t i = 0; i < out.bus_names.size(); ++i) csv << ',' << fmt(r.v_bus_v[i]);
        for (std::size_t i = 0; i < out.branch_names.size(); ++i)
            csv << ',' << fmt(r.i_branch_a[i]);
        csv << ',' << (r.opf_ran ? 1 : 0) << ',' << fmt(r.opf_kkt) << ','
            << fmt(r.opf_pred_imargin_pu) << ',' << fmt(r.vmargin_pu) << ','
            << fmt(r.imargin_pu) << '\n';
    }
    atomic_write_file(path, csv.str());
}

void write_summary_json(const SimulationOutput& out, const std::string& path) {
    json j;
    j["scenario"] = out.scenario_name;
    j["ticks"] = out.records.size();
    j["tick_s"] = out.tick_s;
    j["transitions"] = json::array();
    for (const auto& [t, st] : out.transitions)
        j["transitions"].push_back({{"t", t}, {"state", to_string(st)}});
    j["voltage"] = {{"max_ac_dev_frac", out.max_ac_dev_frac},
                    {"max_dc_dev_frac", out.max_dc_dev_frac},
                    {"max_ac_step_frac", out.max_ac_step_frac},
                    {"max_dc_step_frac", out.max_dc_step_frac}};
    j["current"] = {{"max_ampacity_ratio", out.max_ampacity_ratio},
                    {"ampacity_violation_ticks", out.ampacity_violations}};
    j["opf"] = {{"count", out.opf_count},
                {"infeasible", out.opf_infeasible},
                {"kkt_max", out.opf_kkt_max}};
    if (out.handoff_t) {
        j["handoff"] = {{"t", *out.handoff_t},
                        {"p_gcp_w", out.handoff_p_gcp_w},
                        {"q_gcp_var", out.handoff_q_gcp_var},
                        {"p_forming_w", out.handoff_p_forming_w},
                        {"q_forming_var", out.handoff_q_forming_var},
                        {"lookahead_gap_pu", out.lookahead_gap_pu}};
    }
    if (out.resync_start_t) {
        json r;
        r["t_start"] = *out.resync_start_t;
        if (out.resync_locked_t) {
            r["t_locked"] = *out.resync_locked_t;
            r["lock_duration_s"] = *out.resync_locked_t - *out.resync_start_t;
        }
        r["dangle_at_close_deg"] = out.dangle_at_close_deg;
        r["dfreq_at_close_hz"] = out.dfreq_at_close_hz;
        r["max_dangle_deg"] = out.max_dangle_deg;
        j["resync"] = r;
    }
    json soc = json::object();
    for (std::size_t i = 0; i < out.soc_minmax.size(); ++i) {
        soc[out.soc_minmax[i].first] = {{"min", out.soc_minmax[i].second.first},
                                        {"max", out.soc_minmax[i].second.second},
                                        {"max_dev_outside_transitions",
                                         out.soc_dev_outside_transitions[i].second}};
    }
    j["soc"] = soc;
    atomic_write_file(path, j.dump(2) + "\n");
}

void write_timing_csv(const SimulationOutput& out, const std::string& path) {
    std::ostringstream csv;
    csv << "t,sc_ms,build_ms,solve_ms,kkt\n";
    for (const TimingRecord& r : out.timing)
        csv << fmt(r.t) << ',' << fmt(r.sc_ms) << ',' << fmt(r.build_ms) << ',' << fmt(r.solve_ms)
            << ',' << fmt(r.kkt) << '\n';
    atomic_write_file(path, csv.str());
}

void write_timing_json(const SimulationOutput& out, const std::string& path) {
    std::vector<double> totals;
    for (const TimingRecord& r : out.timing) totals.push_back(r.sc_ms + r.build_ms + r.solve_ms);
    std::sort(totals.begin(), totals.end());
    auto pct = [&](double p) {
        if (totals.empty()) return 0.0;
        const std::size_t idx = static_cast<std::size_t>(p * (totals.size() - 1) + 0.5);
        return totals[idx];
    };
    json j;
    j["count"] = totals.size();
    j["build_solve_ms"] = {{"p50", pct(0.5)}, {"p95", pct(0.95)}, {"max", totals.empty() ? 0.0 : totals.back()}};
    atomic_write_file(path, j.dump(2) + "\n");
}

int RunTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    throw Error("run table: missing column '" + name + "'");
}

bool RunTable::has_column(const std::string& name) const {
    for (const std::string& c : columns)
        if (c == name) return true;
    return false;
}

const std::vector<double>& RunTable::col(const std::string& name) const {
    return data[column(name)];
}

RunTable load_run_csv(const std::string& path) {
    const std::string text = read_file(path);
    RunTable table;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error("run csv is empty: " + path);
    {
        std::istringstream hdr(line);
        std::string col;
        while (std::getline(hdr, col, ',')) table.columns.push_back(col);
    }
    if (table.columns.empty()) throw Error("run csv: empty header in " + path);
    table.data.assign(table.columns.size(), {});

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(row, cell, ',')) {
            if (c >= table.columns.size()) throw Error("run csv: row wider than header");
            if (table.columns[c] == "op_state") {
                table.op_state.push_back(cell);
                table.data[c].push_back(0.0);
            } else {
                try {
                    table.data[c].push_back(std::stod(cell));
                } catch (...) {
                    throw Error("run csv: non-numeric cell '" + cell + "' in column " +
                                table.columns[c]);
                }
            }
            ++c;
        }
        if (c != table.columns.size()) throw Error("run csv: row narrower than header");
        ++table.rows;
    }
    return table;
}

namespace {

void write_table(const std::string& path, const std::vector<std::string>& cols,
                 const std::vector<const std::vector<double>*>& series, std::size_t rows) {
    std::ostringstream csv;
    for (std::size_t c = 0; c < cols.size(); ++c) csv << (c ? "," : "") << cols[c];
    csv << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < series.size(); ++c)
            csv << (c ? "," : "") << fmt((*series[c])[r]);
        csv << '\n';
    }
    atomic_write_file(path, csv.str());
}

} // namespace

void write_report(const RunTable& run, const std::string& outdir, const RunTable* baseline,
                  const NetworkModel* network, const std::string& timing_csv_path) {
    namespace fs = std::filesystem;
    fs::create_directories(outdir);
    const auto path = [&](const std::string& name) { return (fs::path(outdir) / name).string(); };
    const std::vector<double>& t = run.col("t");

    // GCP active/reactive power.
    write_table(path("gcp_power.csv"), {"t", "p_gcp_w", "q_gcp_var"},
                {&t, &run.col("p_gcp_w"), &run.col("q_gcp_var")}, run.rows);

    // IC powers: every p_*/q_* link column in run order.
    {
        std::vector<std::string> cols{"t"};
        std::vector<const std::vector<double>*> series{&t};
        for (const std::string& c : run.columns) {
            if ((c.rfind("p_IC", 0) == 0 && c.find("_w") != std::string::npos) ||
                (c.rfind("q_IC", 0) == 0 && c.find("_var") != std::string::npos)) {
                cols.push_back(c);
                series.push_back(&run.col(c));
            }
        }
        write_table(path("ic_power.csv"), cols, series, run.rows);
    }

    // Line currents with ampacity limits (and the no-control baseline).
    {
        std::vector<std::string> cols{"t"};
        std::vector<const std::vector<double>*> series{&t};
        std::vector<std::vector<double>> limits; // keep alive until write
        limits.reserve(run.columns.size());
        for (const std::string& c : run.columns) {
            if (c.rfind("i_", 0) != 0 || c.find("_a") == std::string::npos) continue;
            cols.push_back(c);
            series.push_back(&run.col(c));
            if (network) {
                const std::string branch = c.substr(2, c.size() - 4);
                for (const Branch& br : network->branches) {
                    if (br.name == branch && br.ampacity_a > 0.0) {
                        limits.emplace_back(run.rows, br.ampacity_a);
                        cols.push_back("limit_" + branch + "_a");
                        series.push_back(&limits.back());
                    }
                }
            }
            if (baseline && baseline->has_column(c)) {
                cols.push_back("nocontrol_" + c);
                series.push_back(&baseline->col(c));
            }
        }
        write_table(path("line_current.csv"), cols, series, run.rows);
    }

    // Voltages.
    {
        std::vector<std::string> cols{"t"};
        std::vector<const std::vector<double>*> series{&t};
        for (const std::string& c : run.columns) {
            if (c.rfind("v_", 0) == 0 && c.find("_v") != std::string::npos) {
                cols.push_back(c);
                series.push_back(&run.col(c));
            }
        }
        write_table(path("voltages.csv"), cols, series, run.rows);
    }

    // Angle and frequency.
    write_table(path("angle_freq.csv"),
                {"t", "angle_up_deg", "angle_down_deg", "dangle_deg", "freq_up_hz", "freq_down_hz"},
                {&t, &run.col("angle_up_deg"), &run.col("angle_down_deg"), &run.col("dangle_deg"),
                 &run.col("freq_up_hz"), &run.col("freq_down_hz")},
                run.rows);

    // SoC.
    {
        std::vector<std::string> cols{"t"};
        std::vector<const std::vector<double>*> series{&t};
        for (const std::string& c : run.columns) {
            if (c.rfind("soc_", 0) == 0) {
                cols.push_back(c);
                series.push_back(&run.col(c));
            }
        }
        write_table(path("soc.csv"), cols, series, run.rows);
    }

    // Solve-time CDF.
    {
        std::vector<double> totals;
        if (!timing_csv_path.empty()) {
            const RunTable timing = load_run_csv(timing_csv_path);
            const auto& sc = timing.col("sc_ms");
            const auto& b = timing.col("build_ms");
            const auto& s = timing.col("solve_ms");
            for (std::size_t r = 0; r < timing.rows; ++r) totals.push_back(sc[r] + b[r] + s[r]);
        }
        std::sort(totals.begin(), totals.end());
        std::vector<double> cdf(totals.size());
        for (std::size_t i = 0; i < totals.size(); ++i)
            cdf[i] = totals.empty() ? 0.0 : static_cast<double>(i + 1) / totals.size();
        write_table(path("solve_time_cdf.csv"), {"total_ms", "cdf"}, {&totals, &cdf},
                    totals.size());
    }
}

} // namespace hybridgrid
