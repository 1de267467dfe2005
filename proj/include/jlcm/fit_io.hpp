#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "jlcm/error.hpp"
#include "jlcm/fit.hpp"
#include "jlcm/io.hpp"
#include "jlcm/model_spec.hpp"

namespace jlcm {

inline constexpr int kFitFileVersion = 1;

inline OptimizerStatus parse_status(const std::string& s) {
  if (s == "converged") return OptimizerStatus::converged;
  if (s == "max-iter") return OptimizerStatus::max_iterations;
  if (s == "degenerate") return OptimizerStatus::degenerate;
  throw ConfigError("unknown optimizer status '" + s + "'");
}

// Fit file: the resolved model, named estimates, variance, convergence report, iteration trace
// and per-start log. theta follows the packed layout listed in `names`.
inline json to_json(const FitResult& f) {
  json j;
  j["format"] = "jlcm-fit";
  j["fit_version"] = kFitFileVersion;
  j["spec"] = to_json(f.spec);
  j["G"] = f.G;
  j["N"] = f.N;
  j["p"] = f.p;
  j["loglik"] = f.loglik;
  j["names"] = f.names;
  j["theta"] = std::vector<double>(f.theta.data(), f.theta.data() + f.theta.size());
  if (f.variance) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < f.variance->rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(f.variance->cols()));
      for (Eigen::Index c = 0; c < f.variance->cols(); ++c) row[static_cast<std::size_t>(c)] = (*f.variance)(r, c);
      rows.push_back(row);
    }
    j["variance"] = rows;
  } else {
    j["variance"] = nullptr;
  }
  const auto& c = f.convergence;
  j["convergence"] = {{"status", to_string(c.status)},     {"iterations", c.iterations},
                      {"met_function", c.met_function},    {"met_parameters", c.met_parameters},
                      {"met_derivatives", c.met_derivatives}, {"degenerate_class", c.degenerate_class},
                      {"class_mass", c.class_mass},        {"message", c.message}};
  json trace = json::array();
  for (const auto& t : f.trace)
    trace.push_back({t.iteration, t.objective, t.change_objective, t.change_parameters, t.relative_distance, t.damping});
  j["trace_columns"] = {"iteration", "loglik", "change_loglik", "change_parameters", "relative_distance", "damping"};
  j["trace"] = trace;
  json starts = json::array();
  for (const auto& s : f.starts)
    starts.push_back({{"start", s.start},
                      {"seed", s.seed},
                      {"status", to_string(s.status)},
                      {"loglik", std::isfinite(s.loglik) ? json(s.loglik) : json(nullptr)},
                      {"iterations", s.iterations},
                      {"monotone", s.monotone},
                      {"message", s.message}});
  j["starts"] = starts;
  return j;
}

inline FitResult fit_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "jlcm-fit") throw ConfigError("not a fit file");
    const int v = j.at("fit_version").get<int>();
    if (v != kFitFileVersion)
      throw ConfigError("fit file version " + std::to_string(v) + " is not supported (expected " +
                        std::to_string(kFitFileVersion) + ")");
    FitResult f;
    f.spec = model_spec_from_json(j.at("spec"));
    if (!f.spec.resolved) throw ConfigError("fit file holds an unresolved model spec");
    f.G = j.at("G").get<int>();
    f.N = j.at("N").get<int>();
    f.p = j.at("p").get<int>();
    f.loglik = j.at("loglik").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("loglik").get<double>();
    f.names = j.at("names").get<std::vector<std::string>>();
    const auto th = j.at("theta").get<std::vector<double>>();
    f.theta = Eigen::Map<const Eigen::VectorXd>(th.data(), static_cast<Eigen::Index>(th.size()));
    const ParameterLayout layout(f.spec);
    if (layout.size() != f.theta.size() || layout.names() != f.names)
      throw ConfigError("fit file parameters do not match its model spec");
    if (!j.at("variance").is_null()) {
      const auto rows = j.at("variance").get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd V(f.theta.size(), f.theta.size());
      if (static_cast<Eigen::Index>(rows.size()) != V.rows()) throw ConfigError("fit file variance has the wrong size");
      for (Eigen::Index r = 0; r < V.rows(); ++r) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != V.cols())
          throw ConfigError("fit file variance has the wrong size");
        for (Eigen::Index c = 0; c < V.cols(); ++c) V(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
      f.variance = V;
    }
    const auto& c = j.at("convergence");
    f.convergence.status = parse_status(c.at("status").get<std::string>());
    f.convergence.iterations = c.at("iterations").get<int>();
    f.convergence.met_function = c.at("met_function").get<bool>();
    f.convergence.met_parameters = c.at("met_parameters").get<bool>();
    f.convergence.met_derivatives = c.at("met_derivatives").get<bool>();
    f.convergence.degenerate_class = c.at("degenerate_class").get<bool>();
    f.convergence.class_mass = c.at("class_mass").get<std::vector<double>>();
    f.convergence.message = c.at("message").get<std::string>();
    for (const auto& t : j.at("trace")) {
      IterationRecord r;
      r.iteration = t.at(0).get<int>();
      r.objective = t.at(1).get<double>();
      r.change_objective = t.at(2).get<double>();
      r.change_parameters = t.at(3).get<double>();
      r.relative_distance = t.at(4).is_null() ? std::numeric_limits<double>::infinity() : t.at(4).get<double>();
      r.damping = t.at(5).get<double>();
      f.trace.push_back(r);
    }
    for (const auto& s : j.at("starts")) {
      StartRecord r;
      r.start = s.at("start").get<int>();
      r.seed = s.at("seed").get<std::uint64_t>();
      r.status = parse_status(s.at("status").get<std::string>());
      r.loglik = s.at("loglik").is_null() ? std::numeric_limits<double>::quiet_NaN() : s.at("loglik").get<double>();
      r.iterations = s.at("iterations").get<int>();
      r.monotone = s.at("monotone").get<bool>();
      r.message = s.at("message").get<std::string>();
      f.starts.push_back(r);
    }
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fit file: ") + e.what());
  }
}

inline void save_fit(const FitResult& f, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(f).dump(1) + "\n");
}

inline FitResult load_fit(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return fit_from_json(j);
}

}  // namespace jlcm
