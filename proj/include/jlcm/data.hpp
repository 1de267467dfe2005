#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "jlcm/csv.hpp"
#include "jlcm/error.hpp"

namespace jlcm {

struct LongitudinalObservation {
  std::string subject_id;
  std::string marker_id;
  double time = 0.0;
  double value = 0.0;
};

// cause 0 means right-censored at observed_time.
struct SurvivalRecord {
  std::string subject_id;
  double entry_time = 0.0;
  double observed_time = 0.0;
  int cause = 0;
};

struct CovariateSet {
  std::map<std::string, double> values;

  bool has(const std::string& name) const { return values.count(name) > 0; }
  double at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw DataError("covariate '" + name + "' missing");
    return it->second;
  }
};

struct Subject {
  std::string id;
  // sorted by (marker_id, time)
  std::vector<LongitudinalObservation> observations;
  SurvivalRecord survival;
  CovariateSet covariates;
};

struct Dataset {
  // sorted by id
  std::vector<Subject> subjects;
  std::vector<std::string> warnings;

  std::size_t size() const { return subjects.size(); }
};

struct ColumnMapping {
  std::string long_id = "id", long_time = "time", long_marker = "marker", long_value = "value";
  std::string surv_id = "id", surv_entry = "entry", surv_time = "time", surv_cause = "cause";
  std::string cov_id = "id";
};

namespace detail {

inline int require_column(const csv::Table& t, const std::string& name, const std::string& table) {
  int c = t.column(name);
  if (c < 0) throw DataError(table + " table: missing column '" + name + "'");
  return c;
}

inline double cell_double(const csv::Table& t, std::size_t r, int c, const std::string& table) {
  double v;
  if (!csv::parse_double(t.rows[r][c], v))
    throw DataError(table + " table: unparseable value '" + t.rows[r][c] + "' in column '" + t.header[c] +
                    "' at row " + std::to_string(t.lines[r]));
  return v;
}

inline void sort_observations(Subject& s) {
  std::sort(s.observations.begin(), s.observations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.marker_id, a.time, a.value) < std::tie(b.marker_id, b.time, b.value);
  });
}

}  // namespace detail

// Joins the three tables by subject id. The covariate table may be empty (no header, no rows).
inline Dataset ingest_dataset(const csv::Table& longitudinal, const csv::Table& survival,
                              const csv::Table* covariates, const ColumnMapping& map = {}) {
  const int li = detail::require_column(longitudinal, map.long_id, "longitudinal");
  const int lt = detail::require_column(longitudinal, map.long_time, "longitudinal");
  const int lm = detail::require_column(longitudinal, map.long_marker, "longitudinal");
  const int lv = detail::require_column(longitudinal, map.long_value, "longitudinal");
  const int si = detail::require_column(survival, map.surv_id, "survival");
  const int se = detail::require_column(survival, map.surv_entry, "survival");
  const int st = detail::require_column(survival, map.surv_time, "survival");
  const int sc = detail::require_column(survival, map.surv_cause, "survival");

  if (longitudinal.rows.empty()) throw DataError("no observations in longitudinal table");

  std::map<std::string, Subject> by_id;
  for (std::size_t r = 0; r < survival.rows.size(); ++r) {
    const auto& id = survival.rows[r][si];
    if (id.empty()) throw DataError("survival table: empty id at row " + std::to_string(survival.lines[r]));
    SurvivalRecord rec;
    rec.subject_id = id;
    rec.entry_time = detail::cell_double(survival, r, se, "survival");
    rec.observed_time = detail::cell_double(survival, r, st, "survival");
    if (!csv::parse_int(survival.rows[r][sc], rec.cause))
      throw DataError("survival table: unparseable cause '" + survival.rows[r][sc] + "' at row " +
                      std::to_string(survival.lines[r]));
    if (by_id.count(id)) throw DataError("survival table: duplicate subject '" + id + "'");
    by_id[id].id = id;
    by_id[id].survival = rec;
  }

  std::set<std::string> orphans;
  std::set<std::tuple<std::string, std::string, double>> seen;
  for (std::size_t r = 0; r < longitudinal.rows.size(); ++r) {
    LongitudinalObservation obs;
    obs.subject_id = longitudinal.rows[r][li];
    obs.marker_id = longitudinal.rows[r][lm];
    obs.time = detail::cell_double(longitudinal, r, lt, "longitudinal");
    obs.value = detail::cell_double(longitudinal, r, lv, "longitudinal");
    if (!seen.emplace(obs.subject_id, obs.marker_id, obs.time).second)
      throw DataError("longitudinal table: duplicate (id, marker, time) = (" + obs.subject_id + ", " +
                      obs.marker_id + ", " + csv::format(obs.time) + ") at row " +
                      std::to_string(longitudinal.lines[r]));
    auto it = by_id.find(obs.subject_id);
    if (it == by_id.end()) {
      orphans.insert(obs.subject_id);
      continue;
    }
    it->second.observations.push_back(std::move(obs));
  }
  if (!orphans.empty()) {
    std::string list;
    for (const auto& id : orphans) list += (list.empty() ? "" : ", ") + id;
    throw DataError("subjects without survival record: " + list);
  }

  Dataset ds;
  if (covariates && !covariates->header.empty()) {
    const int ci = detail::require_column(*covariates, map.cov_id, "covariate");
    for (std::size_t r = 0; r < covariates->rows.size(); ++r) {
      const auto& id = covariates->rows[r][ci];
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        ds.warnings.push_back("covariate row for unknown subject '" + id + "' ignored");
        continue;
      }
      for (std::size_t c = 0; c < covariates->header.size(); ++c) {
        if (static_cast<int>(c) == ci) continue;
        it->second.covariates.values[covariates->header[c]] =
            detail::cell_double(*covariates, r, static_cast<int>(c), "covariate");
      }
    }
  }

  for (auto& [id, s] : by_id) {
    if (s.observations.empty())
      ds.warnings.push_back("subject '" + id + "' has no marker observations (survival-only contribution)");
    detail::sort_observations(s);
    ds.subjects.push_back(std::move(s));
  }
  return ds;
}

inline Dataset ingest_files(const std::filesystem::path& longitudinal, const std::filesystem::path& survival,
                            const std::filesystem::path& covariates = {}, const ColumnMapping& map = {}) {
  auto lt = csv::read_file(longitudinal);
  auto st = csv::read_file(survival);
  if (covariates.empty()) return ingest_dataset(lt, st, nullptr, map);
  auto ct = csv::read_file(covariates);
  return ingest_dataset(lt, st, &ct, map);
}

inline const Subject* find_subject(const Dataset& ds, const std::string& id) {
  auto it = std::lower_bound(ds.subjects.begin(), ds.subjects.end(), id,
                             [](const Subject& s, const std::string& v) { return s.id < v; });
  return (it != ds.subjects.end() && it->id == id) ? &*it : nullptr;
}

}  // namespace jlcm
