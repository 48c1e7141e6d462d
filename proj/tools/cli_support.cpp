#include "cli_support.hpp"

#include <cstdarg>
#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

#include "mswin/errors.hpp"

namespace mswin::cli {

namespace {

std::string scalar_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

const json* lookup(const json& obj, const std::string& name) {
  if (!obj.is_object()) return nullptr;
  std::string alt = name;
  for (char& c : alt) c = c == '-' ? '_' : c;
  for (const auto& key : {name, alt})
    if (auto it = obj.find(key); it != obj.end() && !it->is_object()) return &*it;
  return nullptr;
}

}  // namespace

void merge_config(CLI::App& sub, const json& cfg) {
  if (!cfg.is_object()) throw ValidationError("--config must hold a JSON object");
  const json empty = json::object();
  const json& section = cfg.contains(sub.get_name()) ? cfg.at(sub.get_name()) : empty;
  for (CLI::Option* opt : sub.get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    const json* v = lookup(section, name);
    if (!v) v = lookup(cfg, name);
    if (!v) continue;
    if (v->is_array()) {
      for (const auto& e : *v) opt->add_result(scalar_string(e));
    } else {
      opt->add_result(scalar_string(*v));
    }
    opt->run_callback();
    spdlog::debug("config: --{} = {}", name, v->dump());
  }
}

json effective_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      const auto d = opt->get_default_str();
      j[name] = d.empty() ? json(nullptr) : json(d);
    }
  }
  return j;
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("invalid JSON in " + file.string() + ": " + e.what());
  }
}

void write_run_json(const RunRecord& rec, double seconds) {
  if (rec.run_dir.empty()) return;
  json j;
  j["command"] = rec.command;
  j["argv"] = rec.argv;
  j["config_file"] = rec.config_file;
  j["options"] = rec.effective;
  j["inputs"] = rec.inputs;
  j["outputs"] = rec.outputs;
  j["seeds"] = rec.seeds;
  j["versions"] = {{"mswin", "0.1.0"}, {"libtorch", torch_version()}, {"cli11", CLI11_VERSION}};
  j["timings"] = {{"wall_seconds", seconds}};
  for (const auto& [k, v] : rec.extra.items()) j[k] = v;
  write_json(rec.run_dir / "run.json", j);
}

void log_info(const std::string& msg) { spdlog::info("{}", msg); }
void log_warn(const std::string& msg) { spdlog::warn("{}", msg); }

std::string strf(const char* format, ...) {
  va_list ap;
  va_start(ap, format);
  va_list copy;
  va_copy(copy, ap);
  const int n = std::vsnprintf(nullptr, 0, format, copy);
  va_end(copy);
  std::string out(n > 0 ? n : 0, '\0');
  if (n > 0) std::vsnprintf(out.data(), out.size() + 1, format, ap);
  va_end(ap);
  return out;
}

Grid load_grid(const fs::path& dir, const std::string& name) {
  const BandStack s = load_stack(dir);
  if (s.band_count() == 0) throw ValidationError(dir.string() + " holds no bands");
  if (name.empty()) return s.grid(0);
  if (!s.find(name)) throw ValidationError(dir.string() + " has no band '" + name + "'");
  return s.grid(name);
}

}  // namespace mswin::cli
