#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace ichsim {

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
};

enum class ReportFormat { Csv, Summary };

struct ExperimentReport {
  std::string experiment;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<Table> tables;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();

  const Table* table(const std::string& name) const;
  /// Summary tree with experiment id, config hash and seed.
  nlohmann::ordered_json summary_document() const;
};

/// RFC-4180 field quoting: fields holding a comma, quote, CR or LF are
/// wrapped in quotes with embedded quotes doubled.
std::string csv_field(const std::string& s);
std::string to_csv(const Table& t);

/// Fixed-precision formatting so reruns are byte-identical.
std::string fmt(double v, int precision = 6);
std::string fmt(std::int64_t v);
inline std::string fmt(int v) { return fmt(static_cast<std::int64_t>(v)); }

/// Writes <experiment>_<table>.csv files (Csv format only) and
/// <experiment>_summary.json into out_dir, creating it if needed. Returns
/// the written paths. Throws std::runtime_error when out_dir is unwritable.
std::vector<std::string> emit_report(const ExperimentReport& r, const std::string& out_dir,
                                     ReportFormat format);

}  // namespace ichsim
