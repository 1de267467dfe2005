// jlcm: command-line front end for joint latent class models.
//
// Every subcommand reads a JSON run configuration (--config); relative paths inside it are taken
// relative to the configuration file. Exit codes: 0 success, 1 usage or configuration error,
// 2 data validation error, 3 non-convergence.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "jlcm/jlcm.hpp"

namespace fs = std::filesystem;
using jlcm::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitConvergence = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out = ".";
  std::optional<int> starts;
};

struct RunConfig {
  json j;
  fs::path base;

  fs::path path(const std::string& key) const {
    if (!j.contains(key)) throw jlcm::ConfigError("configuration lacks '" + key + "'");
    return resolve(j.at(key).get<std::string>());
  }
  fs::path resolve(const std::string& p) const {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  }
  const json& section(const std::string& key) const {
    static const json empty = json::object();
    return j.contains(key) ? j.at(key) : empty;
  }
};

RunConfig load_config(const std::string& path) {
  RunConfig rc;
  try {
    rc.j = json::parse(jlcm::read_file(path));
  } catch (const json::exception& e) {
    throw jlcm::ConfigError(path + ": " + e.what());
  }
  if (!rc.j.is_object()) throw jlcm::ConfigError(path + ": configuration must be a JSON object");
  rc.base = fs::absolute(path).parent_path();
  return rc;
}

jlcm::Dataset load_data(const RunConfig& rc) {
  const auto& d = rc.section("data");
  if (!d.contains("longitudinal") || !d.contains("survival"))
    throw jlcm::ConfigError("configuration 'data' needs 'longitudinal' and 'survival'");
  for (const char* key : {"longitudinal", "survival", "covariates"})
    if (d.contains(key) && !fs::exists(rc.resolve(d.at(key).get<std::string>())))
      throw jlcm::DataError(std::string(key) + " table not found: " + rc.resolve(d.at(key).get<std::string>()).string());
  jlcm::ColumnMapping map;
  if (d.contains("columns")) {
    const auto& c = d.at("columns");
    map.long_id = map.surv_id = map.cov_id = c.value("id", map.long_id);
    map.long_time = c.value("time", map.long_time);
    map.long_marker = c.value("marker", map.long_marker);
    map.long_value = c.value("value", map.long_value);
    map.surv_entry = c.value("entry", map.surv_entry);
    map.surv_time = c.value("event_time", map.surv_time);
    map.surv_cause = c.value("cause", map.surv_cause);
  }
  try {
    return jlcm::ingest_files(rc.resolve(d.at("longitudinal").get<std::string>()),
                              rc.resolve(d.at("survival").get<std::string>()),
                              d.contains("covariates") ? rc.resolve(d.at("covariates").get<std::string>()) : fs::path{},
                              map);
  } catch (const jlcm::ConfigError& e) {
    throw jlcm::DataError(e.what());
  }
}

jlcm::ModelSpec load_model(const RunConfig& rc) {
  if (!rc.j.contains("model")) throw jlcm::ConfigError("configuration lacks 'model'");
  const auto& m = rc.j.at("model");
  if (m.is_string()) return jlcm::load_model_spec(rc.resolve(m.get<std::string>()));
  return jlcm::model_spec_from_json(m);
}

jlcm::FitSettings fit_settings(const RunConfig& rc, const Options& o) {
  jlcm::FitSettings s;
  s.n_starts = o.starts.value_or(rc.j.value("starts", 100));
  s.seed = o.seed.value_or(rc.j.value("seed", std::uint64_t{1}));
  s.jobs = o.jobs;
  const auto& opt = rc.section("optimizer");
  s.optimizer.max_iterations = opt.value("max_iterations", s.optimizer.max_iterations);
  s.optimizer.tolerance_function = opt.value("tolerance_loglik", s.optimizer.tolerance_function);
  s.optimizer.tolerance_parameters = opt.value("tolerance_parameters", s.optimizer.tolerance_parameters);
  s.optimizer.tolerance_derivatives = opt.value("tolerance_derivatives", s.optimizer.tolerance_derivatives);
  if (s.n_starts < 1) throw jlcm::ConfigError("starts must be at least 1");
  return s;
}

jlcm::FitResult load_fit_file(const RunConfig& rc) { return jlcm::load_fit(rc.path("fit")); }

std::string num(double v) { return jlcm::csv::format(v); }

std::string classification_csv(const jlcm::PosteriorClassification& pc) {
  std::ostringstream os;
  os << "id,assigned";
  for (int g = 0; g < pc.classes(); ++g) os << ",prob_" << g + 1;
  os << "\n";
  for (std::size_t i = 0; i < pc.assigned.size(); ++i) {
    os << pc.ids[i] << "," << pc.assigned[i] + 1;
    for (int g = 0; g < pc.classes(); ++g) os << "," << num(pc.probs(static_cast<Eigen::Index>(i), g));
    os << "\n";
  }
  return os.str();
}

std::string classification_table_csv(const jlcm::PosteriorClassification& pc) {
  std::ostringstream os;
  os << "assigned,n";
  for (int g = 0; g < pc.classes(); ++g) os << ",mean_prob_" << g + 1;
  os << "\n";
  for (int a = 0; a < pc.classes(); ++a) {
    os << a + 1 << "," << pc.counts[static_cast<std::size_t>(a)];
    for (int g = 0; g < pc.classes(); ++g)
      os << "," << (pc.counts[static_cast<std::size_t>(a)] > 0 ? num(pc.table(a, g)) : std::string());
    os << "\n";
  }
  return os.str();
}

std::string convergence_log(const jlcm::FitResult& f) {
  std::ostringstream os;
  const auto& c = f.convergence;
  os << "status " << jlcm::to_string(c.status) << "\n"
     << "iterations " << c.iterations << "\n"
     << "loglik " << num(f.loglik) << "\n"
     << "criteria met: loglik " << c.met_function << ", parameters " << c.met_parameters << ", derivatives "
     << c.met_derivatives << "\n"
     << "degenerate class " << c.degenerate_class << "\n";
  if (!c.message.empty()) os << "message " << c.message << "\n";
  os << "\nstart,seed,status,loglik,iterations,monotone\n";
  for (const auto& s : f.starts)
    os << s.start + 1 << "," << s.seed << "," << jlcm::to_string(s.status) << "," << num(s.loglik) << "," << s.iterations
       << "," << s.monotone << "\n";
  os << "\niteration,loglik,change_loglik,change_parameters,relative_distance,damping\n";
  for (const auto& t : f.trace)
    os << t.iteration << "," << num(t.objective) << "," << num(t.change_objective) << "," << num(t.change_parameters) << ","
       << num(t.relative_distance) << "," << num(t.damping) << "\n";
  return os.str();
}

std::string estimates_csv(const jlcm::FitResult& f) {
  std::ostringstream os;
  os << "name,estimate,se\n";
  const auto se = f.standard_errors();
  for (std::size_t j = 0; j < f.names.size(); ++j)
    os << f.names[j] << "," << num(f.theta(static_cast<Eigen::Index>(j))) << "," << num(se(static_cast<Eigen::Index>(j))) << "\n";
  return os.str();
}

void write_fit_outputs(const jlcm::FitResult& fit, const jlcm::Dataset& ds, const fs::path& out, const std::string& stem) {
  jlcm::save_fit(fit, out / (stem + ".json"));
  jlcm::write_file_atomic(out / (stem + "_estimates.csv"), estimates_csv(fit));
  jlcm::write_file_atomic(out / (stem + "_convergence.log"), convergence_log(fit));
  if (fit.converged()) {
    const auto pc = jlcm::posterior_probs(fit, ds);
    jlcm::write_file_atomic(out / (stem + "_classification.csv"), classification_csv(pc));
  }
}

int cmd_fit(const Options& o) {
  const auto rc = load_config(o.config);
  const auto ds = load_data(rc);
  const auto spec = load_model(rc);
  const int G = rc.j.value("classes", spec.classes);
  const auto s = fit_settings(rc, o);
  const auto fit = jlcm::fit_model(ds, spec, G, s);
  write_fit_outputs(fit, ds, o.out, "fit");
  std::cout << "G=" << G << " loglik=" << num(fit.loglik) << " status=" << jlcm::to_string(fit.convergence.status)
            << " iterations=" << fit.convergence.iterations << "\n";
  if (!fit.converged()) {
    std::cerr << "error: estimation did not converge (" << jlcm::to_string(fit.convergence.status) << ")\n";
    return kExitConvergence;
  }
  return 0;
}

int cmd_select(const Options& o) {
  const auto rc = load_config(o.config);
  const auto ds = load_data(rc);
  const auto spec = load_model(rc);
  const auto range = rc.j.value("classes_range", std::vector<int>{1, 1});
  if (range.size() != 2 || range[0] < 1 || range[1] < range[0])
    throw jlcm::ConfigError("classes_range must be [low, high] with 1 <= low <= high");
  const auto s = fit_settings(rc, o);
  std::ostringstream csv;
  csv << "G,loglik,p,AIC,BIC,entropy,ICL,converged\n";
  std::vector<jlcm::CriteriaRow> rows;
  const auto model1 = jlcm::prepare_model(ds, spec, 1);
  const auto one = jlcm::fit_one_class(model1, s);
  for (int G = range[0]; G <= range[1]; ++G) {
    jlcm::CriteriaRow row;
    row.G = G;
    try {
      const auto fit = G == 1 ? one : jlcm::fit_model(ds, spec, G, s, &one);
      write_fit_outputs(fit, ds, o.out, "fit_G" + std::to_string(G));
      row.loglik = fit.loglik;
      row.p = fit.p;
      row.converged = fit.converged();
      if (row.converged) {
        row = jlcm::information_criteria(fit, jlcm::posterior_probs(fit, ds));
      } else {
        row.aic = jlcm::aic(fit.loglik, fit.p);
        row.bic = jlcm::bic(fit.loglik, fit.p, fit.N);
        std::cerr << "warning: G=" << G << " did not converge; row flagged\n";
      }
    } catch (const std::exception& e) {
      row.converged = false;
      std::cerr << "warning: G=" << G << " failed: " << e.what() << "\n";
    }
    rows.push_back(row);
    csv << row.G << "," << num(row.loglik) << "," << row.p << "," << num(row.aic) << "," << num(row.bic) << ","
        << (row.entropy ? num(*row.entropy) : std::string()) << "," << num(row.icl) << "," << (row.converged ? 1 : 0)
        << "\n";
  }
  jlcm::write_file_atomic(fs::path(o.out) / "criteria.csv", csv.str());
  auto best = [&](auto key, bool maximize) -> std::optional<int> {
    std::optional<int> g;
    double v = 0.0;
    for (const auto& r : rows) {
      if (!r.converged) continue;
      const auto x = key(r);
      if (!x || !std::isfinite(*x)) continue;
      if (!g || (maximize ? *x > v : *x < v)) {
        g = r.G;
        v = *x;
      }
    }
    return g;
  };
  std::ostringstream rec;
  auto say = [&](const std::string& what, std::optional<int> g) {
    rec << what << ": " << (g ? "G=" + std::to_string(*g) : std::string("none")) << "\n";
  };
  say("lowest BIC", best([](const jlcm::CriteriaRow& r) { return std::optional<double>(r.bic); }, false));
  say("lowest ICL", best([](const jlcm::CriteriaRow& r) { return std::optional<double>(r.icl); }, false));
  say("highest entropy", best([](const jlcm::CriteriaRow& r) { return r.entropy; }, true));
  rec << "The number of classes is left to the analyst.\n";
  jlcm::write_file_atomic(fs::path(o.out) / "recommendation.txt", rec.str());
  std::cout << csv.str() << rec.str();
  return 0;
}

int cmd_classify(const Options& o) {
  const auto rc = load_config(o.config);
  const auto ds = load_data(rc);
  const auto fit = load_fit_file(rc);
  const auto pc = jlcm::posterior_probs(fit, ds);
  jlcm::write_file_atomic(fs::path(o.out) / "classification.csv", classification_csv(pc));
  jlcm::write_file_atomic(fs::path(o.out) / "classification_table.csv", classification_table_csv(pc));
  const auto row = jlcm::information_criteria(fit, pc);
  std::cout << "N=" << row.N << " entropy=" << (row.entropy ? num(*row.entropy) : std::string("NA")) << "\n";
  return 0;
}

std::vector<double> grid_from(const json& g) {
  if (g.is_object()) {
    const double from = g.value("from", 0.0), to = g.at("to").get<double>(), step = g.value("step", 1.0);
    if (!(step > 0.0) || !(to >= from)) throw jlcm::ConfigError("grid needs step > 0 and to >= from");
    std::vector<double> v;
    for (int k = 0;; ++k) {
      const double t = from + k * step;
      if (t > to + 1e-9 * step) break;
      v.push_back(t);
    }
    return v;
  }
  return g.get<std::vector<double>>();
}

jlcm::CovariateSet profile_from(const json& p) {
  jlcm::CovariateSet cs;
  for (const auto& [k, v] : p.items()) cs.values[k] = v.get<double>();
  return cs;
}

int cmd_predict(const Options& o) {
  const auto rc = load_config(o.config);
  const auto fit = load_fit_file(rc);
  const auto& p = rc.section("predict");
  const auto grid = grid_from(p.value("grid", json{{"from", 0.0}, {"to", 10.0}, {"step", 0.5}}));
  const auto profile = profile_from(p.value("profile", json::object()));
  const int draws = p.value("draws", 1000);
  const std::uint64_t seed = o.seed.value_or(rc.j.value("seed", std::uint64_t{1}));
  const auto traj = jlcm::class_trajectories(fit, grid, profile, draws, seed);
  std::ostringstream os;
  os << "class,time,latent_mean,marker,pred,lo95,hi95\n";
  int flagged = 0;
  for (const auto& t : traj) {
    os << t.cls + 1 << "," << num(t.time) << "," << num(t.latent_mean) << "," << t.marker << "," << num(t.pred) << ","
       << num(t.lo95) << "," << num(t.hi95) << "\n";
    flagged += t.out_of_range ? 1 : 0;
  }
  jlcm::write_file_atomic(fs::path(o.out) / "trajectories.csv", os.str());
  if (flagged > 0) std::cerr << "warning: " << flagged << " predicted points fall outside the range of their link\n";
  std::vector<double> cgrid = grid;
  if (cgrid.empty() || cgrid.front() > 0.0) cgrid.insert(cgrid.begin(), 0.0);
  std::ostringstream ci;
  ci << "class,cause,time,cuminc\n";
  for (const auto& c : jlcm::class_cumulative_incidence(fit, cgrid, profile))
    ci << c.cls + 1 << "," << c.cause << "," << num(c.time) << "," << num(c.cuminc) << "\n";
  jlcm::write_file_atomic(fs::path(o.out) / "cumulative_incidence.csv", ci.str());
  return 0;
}

int cmd_gof(const Options& o) {
  const auto rc = load_config(o.config);
  const auto ds = load_data(rc);
  const auto fit = load_fit_file(rc);
  const auto& g = rc.section("gof");
  const auto model = jlcm::prepare_model(ds, fit.spec, fit.G);
  const auto pc = jlcm::posterior_probs(model, fit.theta);
  std::ostringstream lo;
  lo << "class,marker,bin_low,bin_high,n_obs,weight,observed,predicted\n";
  for (const auto& r : jlcm::gof_longitudinal(model, fit.theta, pc, g.value("bin_width", 1.0)))
    lo << r.cls + 1 << "," << r.marker << "," << num(r.bin_low) << "," << num(r.bin_high) << "," << r.n_obs << ","
       << num(r.weight) << "," << num(r.observed) << "," << num(r.predicted) << "\n";
  jlcm::write_file_atomic(fs::path(o.out) / "gof_longitudinal.csv", lo.str());
  std::ostringstream su;
  su << "class,cause,low,high,events,exposure,rate,lo95,hi95,predicted\n";
  const std::uint64_t seed = o.seed.value_or(rc.j.value("seed", std::uint64_t{1}));
  for (const auto& r : jlcm::gof_survival(model, fit.theta, pc, g.value("knot_spacing", 2.0), g.value("n_boot", 200), seed))
    su << r.cls + 1 << "," << r.cause << "," << num(r.low) << "," << num(r.high) << "," << num(r.events) << ","
       << num(r.exposure) << "," << num(r.rate) << "," << num(r.lo95) << "," << num(r.hi95) << "," << num(r.predicted)
       << "\n";
  jlcm::write_file_atomic(fs::path(o.out) / "gof_survival.csv", su.str());
  return 0;
}

int cmd_external(const Options& o) {
  const auto rc = load_config(o.config);
  const auto ds = load_data(rc);
  const auto fit = load_fit_file(rc);
  const auto& e = rc.section("external");
  const int which = e.value("case", 1);
  const auto table = jlcm::csv::read_file(rc.resolve(e.at("table").get<std::string>()));
  const auto covs = e.value("covariates", std::vector<std::string>{});
  const auto model = jlcm::prepare_model(ds, fit.spec, fit.G);
  jlcm::ExternalFit ef;
  if (which == 1) {
    const auto eo = jlcm::external_outcome_from_table(table, covs, e.value("class_specific", std::vector<std::string>{}),
                                                      e.value("random_intercept", false), e.value("value", std::string("value")));
    ef = jlcm::external_outcome_fit(model, fit.theta, eo);
  } else if (which == 2) {
    ef = jlcm::external_covariate_fit(model, fit.theta, jlcm::external_covariates_from_table(table, covs));
  } else {
    throw jlcm::ConfigError("external case must be 1 or 2");
  }
  std::ostringstream os;
  os << "name,estimate,se,z,p_value\n";
  for (std::size_t j = 0; j < ef.names.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    os << ef.names[j] << "," << num(ef.estimate(k)) << "," << num(ef.se(k)) << "," << num(ef.z(k)) << ","
       << num(ef.p_value(k)) << "\n";
  }
  jlcm::write_file_atomic(fs::path(o.out) / "external.csv", os.str());
  std::ostringstream notes;
  notes << "case " << which << "\nsubjects with external data " << ef.n_subjects << "\nloglik " << num(ef.loglik)
        << "\nstatus " << jlcm::to_string(ef.status) << "\n";
  for (const auto& n : ef.notes) {
    notes << "note: " << n << "\n";
    std::cerr << "warning: " << n << "\n";
  }
  jlcm::write_file_atomic(fs::path(o.out) / "external_notes.txt", notes.str());
  if (ef.status != jlcm::OptimizerStatus::converged) {
    std::cerr << "error: external fit did not converge\n";
    return kExitConvergence;
  }
  return 0;
}

jlcm::ScenarioSpec load_scenario_config(const RunConfig& rc) {
  if (!rc.j.contains("scenario")) throw jlcm::ConfigError("configuration lacks 'scenario'");
  const auto& s = rc.j.at("scenario");
  if (s.is_string()) return jlcm::load_scenario(rc.resolve(s.get<std::string>()));
  return jlcm::scenario_from_json(s);
}

int cmd_simulate(const Options& o) {
  const auto rc = load_config(o.config);
  auto sc = load_scenario_config(rc);
  const std::uint64_t seed = o.seed.value_or(rc.j.value("seed", sc.seed));
  const auto sample = jlcm::simulate_sample(sc, seed);
  const auto csv = jlcm::dataset_csv(sample.dataset);
  const fs::path out(o.out);
  jlcm::write_file_atomic(out / "longitudinal.csv", csv.longitudinal);
  jlcm::write_file_atomic(out / "survival.csv", csv.survival);
  if (!csv.covariates.empty()) jlcm::write_file_atomic(out / "covariates.csv", csv.covariates);
  std::ostringstream cls;
  cls << "id,class\n";
  for (std::size_t i = 0; i < sample.classes.size(); ++i) cls << sample.dataset.subjects[i].id << "," << sample.classes[i] + 1 << "\n";
  jlcm::write_file_atomic(out / "classes.csv", cls.str());
  jlcm::write_file_atomic(out / "model.json", jlcm::to_json(sc.model).dump(1) + "\n");
  std::cout << "N=" << sample.dataset.subjects.size() << " seed=" << seed << "\n";
  return 0;
}

std::string mc_parameters_csv(const jlcm::MonteCarloReport& r) {
  std::ostringstream os;
  os << "name,block,truth,mean,bias,relative_bias,empirical_sd,mean_se,coverage,n,n_coverage\n";
  for (const auto& p : r.parameters)
    os << p.name << "," << p.block << "," << num(p.truth) << "," << num(p.mean) << "," << num(p.bias) << ","
       << num(p.relative_bias) << "," << num(p.empirical_sd) << "," << num(p.mean_se) << "," << num(p.coverage) << ","
       << p.n << "," << p.n_coverage << "\n";
  return os.str();
}

std::string mc_replicates_csv(const jlcm::MonteCarloReport& r) {
  std::ostringstream os;
  os << "replicate,data_seed,fit_seed,converged,converged_starts,loglik,accuracy,entropy,event_proportion,monotone\n";
  for (const auto& x : r.records)
    os << x.replicate + 1 << "," << x.data_seed << "," << x.fit_seed << "," << x.converged << "," << x.converged_starts << ","
       << num(x.loglik) << "," << num(x.accuracy) << "," << num(x.entropy) << "," << num(x.event_proportion) << ","
       << x.monotone << "\n";
  return os.str();
}

std::string mc_summary(const jlcm::MonteCarloReport& r) {
  std::ostringstream os;
  os << "replicates " << r.replicates << "\nconverged " << r.converged << "\nconvergence rate " << num(r.convergence_rate)
     << "\nmean accuracy " << num(r.mean_accuracy) << "\nmean entropy " << num(r.mean_entropy)
     << "\nmean event proportion " << num(r.mean_event_proportion) << "\nall objective traces monotone "
     << (r.all_monotone ? "yes" : "no") << "\n";
  return os.str();
}

int cmd_mc(const Options& o) {
  const auto rc = load_config(o.config);
  auto sc = load_scenario_config(rc);
  if (rc.j.contains("data_seed")) sc.seed = rc.j.at("data_seed").get<std::uint64_t>();
  jlcm::MonteCarloSettings ms;
  ms.replicates = rc.j.value("replicates", 100);
  ms.fit = fit_settings(rc, o);
  ms.fit.jobs = 1;
  ms.jobs = o.jobs;
  const auto rep = jlcm::run_monte_carlo(sc, ms);
  const fs::path out(o.out);
  jlcm::write_file_atomic(out / "mc_parameters.csv", mc_parameters_csv(rep));
  jlcm::write_file_atomic(out / "mc_replicates.csv", mc_replicates_csv(rep));
  jlcm::write_file_atomic(out / "mc_summary.txt", mc_summary(rep));
  std::cout << mc_summary(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint latent class models for longitudinal markers and competing event times"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->required();
    sub->add_option("--seed", o.seed, "master seed (overrides the configuration)");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--starts", o.starts, "gridsearch starts (overrides the configuration)")->check(CLI::PositiveNumber);
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"fit", "estimate a model with a fixed number of classes", cmd_fit},
      {"select", "fit a range of class numbers and tabulate criteria", cmd_select},
      {"classify", "posterior class probabilities from a fit", cmd_classify},
      {"predict", "class-specific trajectories and cumulative incidences", cmd_predict},
      {"gof", "goodness-of-fit tables", cmd_gof},
      {"external", "external outcome (case 1) or external covariates (case 2)", cmd_external},
      {"simulate", "draw a dataset from a scenario", cmd_simulate},
      {"mc", "Monte Carlo study of a scenario", cmd_mc},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    sub->callback([&chosen, run = c.run] { chosen = run; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  try {
    return chosen(o);
  } catch (const jlcm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const jlcm::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const jlcm::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n" << e.details();
    return kExitConvergence;
  } catch (const jlcm::DegenerateLikelihood& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
