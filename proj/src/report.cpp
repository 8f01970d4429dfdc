#include "ichsim/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ichsim {

void Table::add(std::vector<std::string> row) {
  if (row.size() != header.size()) {
    throw std::logic_error("table " + name + ": row width does not match header");
  }
  rows.push_back(std::move(row));
}

const Table* ExperimentReport::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

nlohmann::ordered_json ExperimentReport::summary_document() const {
  nlohmann::ordered_json doc;
  doc["experiment"] = experiment;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  doc["summary"] = summary;
  return doc;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string to_csv(const Table& t) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(cells[i]);
    }
    out += "\r\n";
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
  return out;
}

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt(std::int64_t v) { return std::to_string(v); }

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  f << content;
  if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
}

}  // namespace

std::vector<std::string> emit_report(const ExperimentReport& r, const std::string& out_dir,
                                     ReportFormat format) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + out_dir + "'");
  std::vector<std::string> written;
  if (format == ReportFormat::Csv) {
    for (const auto& t : r.tables) {
      const fs::path p = fs::path(out_dir) / (r.experiment + "_" + t.name + ".csv");
      write_file(p, to_csv(t));
      written.push_back(p.string());
    }
  }
  const fs::path p = fs::path(out_dir) / (r.experiment + "_summary.json");
  write_file(p, r.summary_document().dump(2) + "\n");
  written.push_back(p.string());
  return written;
}

}  // namespace ichsim
