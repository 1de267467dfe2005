#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jlcm/data.hpp"
#include "jlcm/model_spec.hpp"

namespace jlcm {

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

inline ValidationReport validate_dataset(const Dataset& ds, const ModelSpec& spec) {
  ValidationReport rep;
  rep.warnings = ds.warnings;
  if (ds.subjects.empty()) rep.errors.push_back("dataset has no subjects");
  const auto covs = spec.referenced_covariates();
  std::set<std::string> unknown_markers;
  for (const auto& s : ds.subjects) {
    const auto& sv = s.survival;
    if (!(sv.entry_time >= 0.0))
      rep.errors.push_back("subject '" + s.id + "': negative entry time " + csv::format(sv.entry_time));
    if (!(sv.observed_time > sv.entry_time))
      rep.errors.push_back("subject '" + s.id + "': observed time " + csv::format(sv.observed_time) +
                           " not after entry time " + csv::format(sv.entry_time));
    if (sv.cause < 0 || sv.cause > spec.hazard.causes)
      rep.errors.push_back("subject '" + s.id + "': cause " + std::to_string(sv.cause) + " outside 0.." +
                           std::to_string(spec.hazard.causes));
    for (const auto& c : covs) {
      auto it = s.covariates.values.find(c);
      if (it == s.covariates.values.end())
        rep.errors.push_back("subject '" + s.id + "': covariate '" + c + "' missing");
      else if (!std::isfinite(it->second))
        rep.errors.push_back("subject '" + s.id + "': covariate '" + c + "' not finite");
    }
    for (const auto& o : s.observations) {
      const int k = spec.marker_index(o.marker_id);
      if (k < 0) {
        unknown_markers.insert(o.marker_id);
        continue;
      }
      if (!std::isfinite(o.time) || !std::isfinite(o.value))
        rep.errors.push_back("subject '" + s.id + "': non-finite observation of '" + o.marker_id + "'");
      const auto& m = spec.markers[k];
      if (m.link != LinkKind::isplines) continue;
      double lo, hi;
      if (spec.resolved) {
        lo = m.basis.low;
        hi = m.basis.high;
      } else if (m.range) {
        lo = m.range->first;
        hi = m.range->second;
      } else {
        continue;
      }
      if (o.value < lo || o.value > hi)
        rep.errors.push_back("subject '" + s.id + "': value " + csv::format(o.value) + " of marker '" +
                             o.marker_id + "' outside declared range [" + csv::format(lo) + ", " +
                             csv::format(hi) + "]");
    }
  }
  for (const auto& m : unknown_markers)
    rep.warnings.push_back("marker '" + m + "' is not in the model and is ignored");
  return rep;
}

struct DimensionDesign {
  Eigen::MatrixXd X;       // fixed effects, one row per observation
  Eigen::MatrixXd Z;       // random effects
  Eigen::VectorXd y;       // raw marker values
  Eigen::VectorXd time;
  std::vector<int> marker; // global marker index of each row

  Eigen::Index rows() const { return y.size(); }
};

struct SubjectDesign {
  std::string id;
  Eigen::VectorXd class_covariates;   // X_C
  std::vector<DimensionDesign> dims;  // empty (rows() == 0) when unobserved
  Eigen::VectorXd hazard_covariates;  // X_T
  double entry = 0.0;
  double time = 0.0;
  int cause = 0;
};

inline Eigen::RowVectorXd term_row(const std::vector<FixedTerm>& terms, double t, const CovariateSet& cov) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j) r(static_cast<Eigen::Index>(j)) = terms[j].term.eval(t, cov);
  return r;
}

inline Eigen::RowVectorXd term_row(const std::vector<Term>& terms, double t, const CovariateSet& cov) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(terms.size()));
  for (std::size_t j = 0; j < terms.size(); ++j) r(static_cast<Eigen::Index>(j)) = terms[j].eval(t, cov);
  return r;
}

inline SubjectDesign build_subject_design(const Subject& s, const ModelSpec& spec) {
  SubjectDesign sd;
  sd.id = s.id;
  sd.entry = s.survival.entry_time;
  sd.time = s.survival.observed_time;
  sd.cause = s.survival.cause;
  try {
    sd.class_covariates.resize(static_cast<Eigen::Index>(spec.class_covariates.size()));
    for (std::size_t j = 0; j < spec.class_covariates.size(); ++j)
      sd.class_covariates(static_cast<Eigen::Index>(j)) = s.covariates.at(spec.class_covariates[j]);
    sd.hazard_covariates.resize(static_cast<Eigen::Index>(spec.hazard.covariates.size()));
    for (std::size_t j = 0; j < spec.hazard.covariates.size(); ++j)
      sd.hazard_covariates(static_cast<Eigen::Index>(j)) = s.covariates.at(spec.hazard.covariates[j].name);

    sd.dims.resize(spec.dimensions.size());
    for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
      const auto& dim = spec.dimensions[d];
      std::vector<const LongitudinalObservation*> rows;
      std::vector<int> marker;
      for (int k : spec.markers_of(static_cast<int>(d)))
        for (const auto& o : s.observations)
          if (o.marker_id == spec.markers[k].name) {
            rows.push_back(&o);
            marker.push_back(k);
          }
      auto& dd = sd.dims[d];
      const auto n = static_cast<Eigen::Index>(rows.size());
      dd.X.resize(n, static_cast<Eigen::Index>(dim.fixed.size()));
      dd.Z.resize(n, static_cast<Eigen::Index>(dim.random.size()));
      dd.y.resize(n);
      dd.time.resize(n);
      dd.marker = marker;
      for (Eigen::Index r = 0; r < n; ++r) {
        const auto* o = rows[static_cast<std::size_t>(r)];
        dd.X.row(r) = term_row(dim.fixed, o->time, s.covariates);
        dd.Z.row(r) = term_row(dim.random, o->time, s.covariates);
        dd.y(r) = o->value;
        dd.time(r) = o->time;
      }
    }
  } catch (const DataError& e) {
    throw DataError("subject '" + s.id + "': " + e.what());
  }
  return sd;
}

// One design bundle per subject, in dataset order.
inline std::vector<SubjectDesign> build_designs(const Dataset& ds, const ModelSpec& spec) {
  std::vector<SubjectDesign> out;
  out.reserve(ds.subjects.size());
  for (const auto& s : ds.subjects) out.push_back(build_subject_design(s, spec));
  return out;
}

}  // namespace jlcm
