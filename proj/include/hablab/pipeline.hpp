#pragma once

#include <string>

#include <json.hpp>

#include "hablab/config.hpp"

namespace hablab {

constexpr const char* kVersion = "0.1.0";

struct RunOptions {
    std::string out_dir = ".";
    std::string format = "json";  // report.json is always written; "markdown" adds report.md
    std::string timestamp;        // empty = current UTC time
};

using Report = nlohmann::ordered_json;

// Runs one subcommand (segment, perfuse, hts, phantom, labelid, stats), writes its outputs,
// report and MANIFEST.json into out_dir and returns the report.
Report run_command(const std::string& command, const PipelineConfig& cfg, const RunOptions& opt);

// perfusion -> hts stage 1 -> hts stage 2 -> markers -> report.
Report run_pipeline(const PipelineConfig& cfg, const RunOptions& opt);

std::string render_markdown(const Report& report);
void emit_report(const Report& report, const std::string& path, const std::string& format);

// The report without its timestamp, serialized; identical inputs give identical bodies.
std::string report_body(const Report& report);

}  // namespace hablab
