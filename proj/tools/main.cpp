// mswin: command line front end for the carbon-mapping pipeline.

#include <chrono>
#include <iostream>

#include <spdlog/spdlog.h>

#include "cli_support.hpp"
#include "mswin/errors.hpp"

int main(int argc, char** argv) {
  using namespace mswin::cli;
  CLI::App app{"Carbon stock mapping with a masked Swin pix2pix generator"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string log_level = "info";
  std::string config_path;
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_option("--config", config_path, "JSON file with default option values")->check(CLI::ExistingFile);

  std::vector<Command> commands;
  add_data_commands(app, commands);
  add_model_commands(app, commands);
  add_eval_commands(app, commands);
  for (auto& c : commands) c.app->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  torch_setup();

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    RunRecord rec;
    rec.command = c.app->get_name();
    rec.argv.assign(argv, argv + argc);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (!config_path.empty()) {
        rec.config_file = read_json(config_path);
        merge_config(*c.app, rec.config_file);
      }
      rec.effective = effective_options(*c.app);
      c.run(rec);
      write_run_json(rec, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    } catch (const CLI::ParseError& e) {
      // values coming from --config are validated late
      spdlog::error("{}", e.what());
      return 2;
    } catch (const mswin::Error& e) {
      spdlog::error("{}", e.what());
      return 1;
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
      return 1;
    }
    return 0;
  }
  return 2;
}
