#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "badvfl/common.hpp"
#include "badvfl/config.hpp"
#include "badvfl/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw badvfl::InputError("cannot read config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// axis values come in as text; numbers / bools stay typed, anything that
// does not parse as JSON is a plain string (so enum names need no quotes)
json axis_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded() || v.is_object() || v.is_array()) return json(text);
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

badvfl::SweepAxis parse_axis(const std::string& arg) {
  size_t eq = arg.find('=');
  if (eq == std::string::npos || eq == 0)
    throw badvfl::ConfigError("--axis expects key=value1,value2,...  got: " + arg);
  badvfl::SweepAxis ax;
  ax.path = arg.substr(0, eq);
  for (const auto& piece : split_list(arg.substr(eq + 1))) ax.values.push_back(axis_value(piece));
  if (ax.values.empty()) throw badvfl::ConfigError("sweep axis " + ax.path + " has no values");
  return ax;
}

void print_record(const badvfl::RunRecord& rec) {
  std::printf("%s fingerprint %s seed %llu\n", rec.kind.c_str(), rec.fingerprint.c_str(),
              static_cast<unsigned long long>(rec.seed));
  std::printf("  tar %.4f  asr %.4f", rec.metrics.tar, rec.metrics.asr);
  if (rec.metrics.benign_tar) std::printf("  benign_tar %.4f", *rec.metrics.benign_tar);
  if (rec.metrics.detection_precision)
    std::printf("  detection_precision %.4f", *rec.metrics.detection_precision);
  std::printf("\n  poisoned %d  dir %s  (%.0f ms)\n", rec.metrics.poisoned_count,
              rec.run_dir.c_str(), rec.wall_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vertical federated learning sandbox: training, attacks, defenses"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  uint64_t seed = 0;
  bool seed_given = false, print_config = false;

  CLI::App* run = app.add_subcommand("run", "train one configuration and write its artifacts");
  run->add_option("--config", config_path, "experiment JSON file")->required();
  run->add_option("--seed", seed, "override run.seed")->each([&](const std::string&) {
    seed_given = true;
  });
  run->add_option("--out", out_dir, "override run.out_dir");
  run->add_flag("--print-config", print_config, "print the resolved config and exit");

  std::vector<std::string> axis_args;
  std::string seeds_arg = "1";
  int jobs = 1;
  CLI::App* sweep = app.add_subcommand("sweep", "grid of runs over one or more config keys");
  sweep->add_option("--config", config_path, "experiment JSON file")->required();
  sweep->add_option("--axis", axis_args, "axis as key=v1,v2,... (repeatable)");
  sweep->add_option("--seeds", seeds_arg, "comma-separated seed list (default 1)");
  sweep->add_option("--out", out_dir, "override run.out_dir");
  sweep->add_option("--jobs", jobs, "parallel workers (default 1)");

  std::vector<std::string> report_in;
  std::string report_out;
  CLI::App* report = app.add_subcommand("report", "aggregate runs.csv files");
  report->add_option("--in", report_in, "runs.csv files or run directories")->required();
  report->add_option("--out", report_out, "output CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      badvfl::ExperimentConfig cfg = badvfl::parse_config(read_file(config_path));
      if (print_config) {
        json j;
        j["config"] = cfg.resolved;
        j["fingerprint"] = badvfl::config_fingerprint(cfg.resolved);
        j["explicit_keys"] = cfg.explicit_paths;
        std::printf("%s\n", j.dump(1).c_str());
        return 0;
      }
      uint64_t s = seed_given ? seed : cfg.run.seed;
      std::string out = out_dir.empty() ? cfg.run.out_dir : out_dir;
      badvfl::RunRecord rec = badvfl::run_single(cfg, s, out);
      badvfl::append_csv_rows(out, rec.csv_rows);
      print_record(rec);
      return 0;
    }
    if (sweep->parsed()) {
      badvfl::ExperimentConfig cfg = badvfl::parse_config(read_file(config_path));
      json user = json::parse(read_file(config_path));
      std::vector<badvfl::SweepAxis> axes;
      for (const auto& a : axis_args) axes.push_back(parse_axis(a));
      std::vector<uint64_t> seeds;
      for (const auto& s : split_list(seeds_arg)) seeds.push_back(std::stoull(s));
      std::string out = out_dir.empty() ? cfg.run.out_dir : out_dir;
      badvfl::SweepOutcome result = badvfl::run_sweep(user, axes, seeds, out, jobs);
      std::printf("sweep: %d cells, %d failed, summary %s\n", result.cells, result.failed_cells,
                  result.summary_path.c_str());
      return result.failed_cells == 0 ? 0 : 1;
    }
    if (report->parsed()) {
      std::vector<std::string> files;
      for (const auto& p : report_in)
        files.push_back(fs::is_directory(p) ? p + "/runs.csv" : p);
      std::string agg = badvfl::aggregate_runs(files);
      if (report_out.empty()) {
        std::fputs(agg.c_str(), stdout);
      } else {
        std::ofstream o(report_out, std::ios::binary);
        if (!o) throw badvfl::InputError("cannot write file: " + report_out);
        o << agg;
        std::printf("wrote %s\n", report_out.c_str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
