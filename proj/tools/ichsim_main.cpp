#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ichsim/experiments.hpp"

namespace {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ichsim::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ichsim::CalibrationError*>(&e)) return 3;
  return 1;
}

void print_written(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << f << "\n";
}

// Summaries of earlier runs in `dir`, merged into one index.
int merge_reports(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ichsim::ConfigError("no such output directory '" + dir + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() > 13 && name.ends_with("_summary.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  nlohmann::ordered_json index = nlohmann::ordered_json::object();
  for (const auto& p : files) {
    std::ifstream in(p);
    const auto doc = nlohmann::ordered_json::parse(in);
    index[doc.at("experiment").get<std::string>()] = doc;
    std::cout << doc.at("experiment").get<std::string>() << "  config " << doc.at("config_hash").get<std::string>()
              << "  seed " << doc.at("seed") << "\n";
  }
  const fs::path out = fs::path(dir) / "index.json";
  std::ofstream(out, std::ios::binary) << index.dump(2) << "\n";
  std::cout << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power-management covert channel simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string format = "csv";
  unsigned threads = 0;
  auto common = [&](CLI::App* sc) {
    sc->add_option("--config", config_path, "machine configuration file")->required();
    sc->add_option("--seed", seed, "override the config seed");
    sc->add_option("--out-dir", out_dir, "directory for reports");
    sc->add_option("--format", format, "csv or summary")->check(CLI::IsMember({"csv", "summary"}));
    sc->add_option("--threads", threads, "worker threads (0 = all cores)");
  };

  auto* calibrate = app.add_subcommand("calibrate", "fit the model to the TP targets");
  common(calibrate);

  std::string experiment, bits_file, channel;
  auto* run = app.add_subcommand("run", "run one experiment");
  common(run);
  run->add_option("experiment", experiment, "experiment id")
      ->required()
      ->check(CLI::IsMember(ichsim::experiment_ids()));
  run->add_option("--bits", bits_file, "bit file for the transcript experiment");
  run->add_option("--channel", channel, "SameThread, CrossSMT or CrossCore");

  std::string report_dir = "out";
  auto* report = app.add_subcommand("report", "index the summaries in an output directory");
  report->add_option("--out-dir", report_dir, "directory holding *_summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) return merge_reports(report_dir);

    ichsim::MachineConfig cfg = ichsim::load_config(config_path);
    if (seed) cfg.set("seed", std::to_string(*seed));
    const auto fmt = format == "csv" ? ichsim::ReportFormat::Csv : ichsim::ReportFormat::Summary;

    if (calibrate->parsed()) {
      const auto params = ichsim::calibrate_model(cfg);
      print_written(ichsim::emit_report(ichsim::calibration_report(cfg, params), out_dir, fmt));
      return 0;
    }
    ichsim::ExperimentOptions opt;
    opt.bits_file = bits_file;
    opt.threads = threads;
    if (!channel.empty()) {
      opt.channel = ichsim::parse_channel(channel);
      if (!opt.channel) throw ichsim::ConfigError("unknown channel '" + channel + "'");
    }
    print_written(ichsim::emit_report(ichsim::run_experiment(cfg, experiment, opt), out_dir, fmt));
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
