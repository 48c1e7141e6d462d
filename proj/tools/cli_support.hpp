#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mswin/raster.hpp"

namespace mswin::cli {

using nlohmann::json;
namespace fs = std::filesystem;

// What a command reports back for run.json.
struct RunRecord {
  std::string command;
  std::vector<std::string> argv;
  json config_file = nullptr;  // contents of --config, if any
  json effective;              // every option after merging
  json inputs = json::object();
  json outputs = json::object();
  json seeds = json::object();
  json extra = json::object();
  fs::path run_dir;  // where run.json goes; empty = nowhere
};

struct Command {
  CLI::App* app = nullptr;
  std::function<void(RunRecord&)> run;
};

// Fill options the user left unset from a JSON object: flat top-level keys
// first, then the section named after the subcommand. Keys may use '-' or
// '_'. Explicit flags always win.
void merge_config(CLI::App& sub, const json& cfg);

json effective_options(const CLI::App& sub);

void write_run_json(const RunRecord& rec, double seconds);

void write_json(const fs::path& file, const json& j);
json read_json(const fs::path& file);

// Band `name` of a container, or its only/first band when name is empty.
Grid load_grid(const fs::path& dir, const std::string& name = {});

// The libtorch include tree ships its own fmt, which clashes with the one
// spdlog was built against, so translation units that see torch log through
// these instead of spdlog directly.
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
std::string strf(const char* format, ...) __attribute__((format(printf, 1, 2)));

// Implemented next to the model commands (the only torch translation unit).
void torch_setup();
std::string torch_version();

void add_data_commands(CLI::App& app, std::vector<Command>& out);
void add_model_commands(CLI::App& app, std::vector<Command>& out);
void add_eval_commands(CLI::App& app, std::vector<Command>& out);

}  // namespace mswin::cli
