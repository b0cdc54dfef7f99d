#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hybridgrid/sim.hpp"

namespace hybridgrid {

/// Deterministic run record: one row per tick, fixed column order. Wall
/// clock timings go to the separate timing files.
void write_run_csv(const SimulationOutput& out, const std::string& path);
void write_summary_json(const SimulationOutput& out, const std::string& path);
void write_timing_csv(const SimulationOutput& out, const std::string& path);
void write_timing_json(const SimulationOutput& out, const std::string& path);

/// A run file loaded back for reporting: numeric columns by name plus the
/// operating-state string column.
struct RunTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> data; // column major
    std::vector<std::string> op_state;
    std::size_t rows = 0;

    int column(const std::string& name) const;
    bool has_column(const std::string& name) const;
    const std::vector<double>& col(const std::string& name) const;
};

RunTable load_run_csv(const std::string& path);

/// Emits the per-figure tabular data (GCP power, IC power, line currents
/// with ampacity limits, voltages, angle/frequency, SoC, solve-time CDF)
/// into `outdir`. A baseline run adds comparison series to the current
/// figure; the network provides the ampacity limit columns; the timing file
/// feeds the CDF.
void write_report(const RunTable& run, const std::string& outdir,
                  const RunTable* baseline = nullptr, const NetworkModel* network = nullptr,
                  const std::string& timing_csv_path = "");

} // namespace hybridgrid
