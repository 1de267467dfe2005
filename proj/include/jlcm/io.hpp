#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <set>

#include "jlcm/csv.hpp"
#include "jlcm/data.hpp"
#include "jlcm/error.hpp"

namespace jlcm {

// Writes `content` to a temporary sibling and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ConfigError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ConfigError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct DatasetCsv {
  std::string longitudinal, survival, covariates;  // covariates empty when no subject has any
};

// The three input tables of a dataset, subjects in stored order.
inline DatasetCsv dataset_csv(const Dataset& ds) {
  DatasetCsv out;
  std::ostringstream lo, su, co;
  lo << "id,time,marker,value\n";
  su << "id,entry,time,cause\n";
  std::set<std::string> names;
  for (const auto& s : ds.subjects)
    for (const auto& [k, v] : s.covariates.values) names.insert(k);
  if (!names.empty()) {
    co << "id";
    for (const auto& n : names) co << "," << n;
    co << "\n";
  }
  for (const auto& s : ds.subjects) {
    for (const auto& o : s.observations)
      lo << s.id << "," << csv::format(o.time) << "," << o.marker_id << "," << csv::format(o.value) << "\n";
    su << s.id << "," << csv::format(s.survival.entry_time) << "," << csv::format(s.survival.observed_time) << ","
       << s.survival.cause << "\n";
    if (!names.empty()) {
      co << s.id;
      for (const auto& n : names) {
        auto it = s.covariates.values.find(n);
        co << "," << (it == s.covariates.values.end() ? std::string() : csv::format(it->second));
      }
      co << "\n";
    }
  }
  out.longitudinal = lo.str();
  out.survival = su.str();
  out.covariates = co.str();
  return out;
}

}  // namespace jlcm
