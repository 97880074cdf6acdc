#include "pidnet/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <set>

#include "pidnet/error.hpp"
#include "pidnet/io.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads keys from one JSON object and rejects the ones nobody asked for.
class Block {
 public:
  Block(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  Block sub(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Block(j_.contains(key) ? j_.at(key) : empty, where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + where_ + "." + key + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Architecture read_arch(Block b, const Architecture& d) {
  Architecture a;
  a.branch_hidden = b.get("branch_hidden", d.branch_hidden);
  a.trunk_hidden = b.get("trunk_hidden", d.trunk_hidden);
  a.latent = b.get("latent", d.latent);
  a.film = b.get("film", d.film);
  b.finish();
  if (a.latent <= 0) throw ConfigError("architecture latent size must be > 0");
  for (int w : a.branch_hidden)
    if (w <= 0) throw ConfigError("architecture widths must be > 0");
  for (int w : a.trunk_hidden)
    if (w <= 0) throw ConfigError("architecture widths must be > 0");
  return a;
}

json arch_json(const Architecture& a) { return to_json(a); }

fs::path out_dir(const RunConfig& c, const std::string& name) {
  const fs::path d = fs::path(c.root) / name;
  fs::create_directories(d);
  write_json(d / "resolved_config.json", resolved_config(c));
  return d;
}

fs::path in_root(const RunConfig& c, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() ? q : fs::path(c.root) / q;
}

fs::path in_config(const RunConfig& c, const std::string& p) {
  const fs::path q(p);
  return q.is_absolute() || c.config_dir.empty() ? q : c.config_dir / q;
}

void require_path(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DataError(what + " not found: " + p.string());
}

int workers_of(const RunConfig& c) { return c.workers > 0 ? c.workers : default_workers(); }

void log(const std::string& s) { std::cerr << s << "\n"; }

TrainingSet load_set(const RunConfig& c) {
  const fs::path d = in_root(c, c.paths.dataset);
  require_path(d / "manifest.json", "dataset manifest");
  return make_training_set(read_dataset(d), c.val_fraction, c.seed);
}

TemperatureProfile predict_profile(const RunConfig& c) {
  return build_profile(c.predict.t1, c.predict.T1, c.anchors, c.generate.margin);
}

std::vector<double> uniform_times(const ProfileAnchors& a, int n) { return sensor_times(a, n); }

ExperimentRecord load_experiment(const RunConfig& c, const fs::path& out) {
  const auto& e = c.experiment;
  ExperimentRecord rec;
  if (e.synthetic) {
    const TemperatureProfile p = build_profile(e.t1, e.T1, c.anchors, c.generate.margin);
    const CureTrajectory tr = simulate(p, e.doc0, c.kinetics, c.deformation, c.sim);
    rec = record_from_trajectory(tr, e.scale * tr.deformation.back(), "synthetic");
  } else {
    if (e.csv.empty() || e.sidecar.empty()) throw ConfigError("experiment: csv and sidecar paths are required");
    const fs::path csv = in_config(c, e.csv);
    const fs::path side = in_config(c, e.sidecar);
    require_path(csv, "experiment csv");
    require_path(side, "experiment sidecar");
    rec = read_experiment(csv, side);
  }
  write_experiment(out / "experiment.csv", out / "experiment.json", rec);
  return rec;
}

json summary_of(const TransferResult& r) {
  return {{"terminal_prediction_mm", r.terminal_prediction}, {"residual_mm", r.residual},
          {"iterations", r.iterations}, {"converged", r.converged}, {"warning", r.warning}};
}

std::vector<double> channel_errors(const FilmDeepOnet& m, const TrainingSet& set, const std::vector<int>& idx) {
  std::vector<double> err(kChannels, 0.0);
  if (idx.empty()) return err;
  for (int r : idx) {
    const auto rr = static_cast<std::size_t>(r);
    const Prediction p = predict_trajectory(m, set.sensors[rr], set.doc0[rr], set.times, m.norm.horizon);
    for (int ch = 0; ch < kChannels; ++ch) {
      const Eigen::VectorXd row = set.targets[ch].row(r);
      err[static_cast<std::size_t>(ch)] +=
          relative_l2(p.channel(ch), std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    }
  }
  for (auto& e : err) e /= static_cast<double>(idx.size());
  return err;
}

}  // namespace

std::uint64_t default_seed(std::uint64_t fallback) {
  const char* s = std::getenv(kSeedEnv);
  if (!s || !*s) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0') throw ConfigError(std::string(kSeedEnv) + " is not an unsigned integer: " + s);
  return v;
}

RunConfig parse_run_config(const json& j, const fs::path& config_dir) {
  RunConfig c;
  c.config_dir = config_dir;
  Block top(j, "config");
  c.seed = top.get<std::uint64_t>("seed", default_seed(0));
  c.workers = top.get("workers", c.workers);
  c.root = top.get("root", c.root);
  if (c.workers < 0) throw ConfigError("config.workers must be >= 0");

  {
    Block b = top.sub("anchors");
    auto& a = c.anchors;
    a.t0 = b.get("t0", a.t0);
    a.T_start = b.get("T_start", a.T_start);
    a.t2 = b.get("t2", a.t2);
    a.T_peak = b.get("T_peak", a.T_peak);
    a.t3 = b.get("t3", a.t3);
    a.T_end = b.get("T_end", a.T_end);
    b.finish();
    a.validate();
  }
  {
    Block b = top.sub("kinetics");
    auto& k = c.kinetics;
    k.A1 = b.get("A1", k.A1);
    k.E1 = b.get("E1", k.E1);
    k.A2 = b.get("A2", k.A2);
    k.E2 = b.get("E2", k.E2);
    k.A3 = b.get("A3", k.A3);
    k.E3 = b.get("E3", k.E3);
    k.B = b.get("B", k.B);
    k.alpha_switch = b.get("alpha_switch", k.alpha_switch);
    k.mu_inf = b.get("mu_inf", k.mu_inf);
    k.U = b.get("U", k.U);
    k.K = b.get("K", k.K);
    k.alpha_gel = b.get("alpha_gel", k.alpha_gel);
    k.mu_max = b.get("mu_max", k.mu_max);
    b.finish();
    k.validate();
  }
  {
    Block b = top.sub("deformation");
    auto& d = c.deformation;
    d.kappa_cte = b.get("kappa_cte", d.kappa_cte);
    d.kappa_sh = b.get("kappa_sh", d.kappa_sh);
    d.width = b.get("width", d.width);
    d.T_ref = b.get("T_ref", d.T_ref);
    b.finish();
    d.validate();
  }
  {
    Block b = top.sub("sim");
    c.sim.dt = b.get("dt", c.sim.dt);
    c.sim.output_points = b.get("output_points", c.sim.output_points);
    b.finish();
    if (!(c.sim.dt > 0.0) || c.sim.output_points < 2) throw ConfigError("sim: dt must be > 0 and output_points >= 2");
  }
  {
    Block b = top.sub("generate");
    auto& g = c.generate;
    g.n_t = b.get("n_t", g.n_t);
    g.n_T = b.get("n_T", g.n_T);
    g.doc0_set = b.get("doc0_set", g.doc0_set);
    g.sensor_count = b.get("sensor_count", g.sensor_count);
    g.margin = b.get("margin", g.margin);
    b.finish();
    if (g.n_t < 2 || g.n_T < 2) throw ConfigError("generate: grid must be at least 2 x 2");
    if (g.doc0_set.empty()) throw ConfigError("generate: doc0_set is empty");
    if (g.sensor_count < 2) throw ConfigError("generate: sensor_count must be >= 2");
  }
  c.architecture = read_arch(top.sub("architecture"), c.architecture);
  c.eki_architecture = read_arch(top.sub("eki_architecture"), c.eki_architecture);
  {
    Block b = top.sub("training");
    auto& t = c.training;
    t.iterations = b.get("iterations", t.iterations);
    t.adam.learning_rate = b.get("learning_rate", t.adam.learning_rate);
    t.adam.beta1 = b.get("beta1", t.adam.beta1);
    t.adam.beta2 = b.get("beta2", t.adam.beta2);
    t.adam.epsilon = b.get("epsilon", t.adam.epsilon);
    t.adam.decay_rate = b.get("decay_rate", t.adam.decay_rate);
    t.adam.decay_steps = b.get("decay_steps", t.adam.decay_steps);
    t.adam.staircase = b.get("staircase", t.adam.staircase);
    t.patience = b.get("patience", t.patience);
    t.eval_every = b.get("eval_every", t.eval_every);
    t.weights = b.get("weights", t.weights);
    c.val_fraction = b.get("val_fraction", c.val_fraction);
    c.members = b.get("members", c.members);
    b.finish();
    if (t.iterations < 0 || t.patience <= 0 || t.eval_every <= 0) throw ConfigError("training: invalid iteration settings");
    if (!(t.adam.learning_rate > 0.0)) throw ConfigError("training: learning_rate must be > 0");
    if (c.members < 2) throw ConfigError("training: members must be >= 2");
  }
  {
    Block b = top.sub("eki");
    auto& e = c.eki;
    e.ensemble_size = b.get("ensemble_size", e.ensemble_size);
    e.iterations = b.get("iterations", e.iterations);
    e.q = b.get("q", e.q);
    e.r = b.get("r", e.r);
    e.lambda_tik = b.get("lambda_tik", e.lambda_tik);
    e.prior_std = b.get("prior_std", e.prior_std);
    e.input_noise = b.get("input_noise", e.input_noise);
    e.output_noise = b.get("output_noise", e.output_noise);
    e.transfer_iterations = b.get("transfer_iterations", e.transfer_iterations);
    e.transfer_q = b.get("transfer_q", e.transfer_q);
    c.eki_records = b.get("records", c.eki_records);
    c.eki_time_points = b.get("time_points", c.eki_time_points);
    b.finish();
    e.validate();
  }
  {
    Block b = top.sub("transfer");
    auto& t = c.transfer;
    t.lambda_anchor = b.get("lambda_anchor", t.lambda_anchor);
    t.adam.learning_rate = b.get("learning_rate", t.adam.learning_rate);
    t.max_iterations = b.get("max_iterations", t.max_iterations);
    t.tolerance = b.get("tolerance", t.tolerance);
    t.history_points = b.get("history_points", t.history_points);
    c.transfer_source = b.get("source", c.transfer_source);
    b.finish();
    if (c.transfer_source != "model" && c.transfer_source != "ensemble")
      throw ConfigError("transfer.source must be 'model' or 'ensemble'");
    if (t.lambda_anchor < 0.0 || t.max_iterations < 0 || t.history_points < 2)
      throw ConfigError("transfer: invalid settings");
  }
  {
    Block b = top.sub("experiment");
    auto& e = c.experiment;
    e.csv = b.get("csv", e.csv);
    e.sidecar = b.get("sidecar", e.sidecar);
    e.synthetic = b.get("synthetic", e.synthetic);
    e.t1 = b.get("t1", e.t1);
    e.T1 = b.get("T1", e.T1);
    e.doc0 = b.get("doc0", e.doc0);
    e.scale = b.get("scale", e.scale);
    b.finish();
  }
  {
    Block b = top.sub("predict");
    auto& p = c.predict;
    p.t1 = b.get("t1", p.t1);
    p.T1 = b.get("T1", p.T1);
    p.doc0 = b.get("doc0", p.doc0);
    p.points = b.get("points", p.points);
    p.particles = b.get("particles", p.particles);
    p.source = b.get("source", p.source);
    b.finish();
    if (p.points < 2) throw ConfigError("predict.points must be >= 2");
    if (p.source != "ensemble" && p.source != "eki") throw ConfigError("predict.source must be 'ensemble' or 'eki'");
  }
  {
    Block b = top.sub("optimize");
    auto& o = c.optimize;
    o.n_t = b.get("n_t", o.n_t);
    o.n_T = b.get("n_T", o.n_T);
    o.doc_min = b.get("doc_min", o.doc_min);
    o.doc0 = b.get("doc0", o.doc0);
    o.margin = b.get("margin", c.generate.margin);
    o.refine_rounds = b.get("refine_rounds", o.refine_rounds);
    o.refine_points = b.get("refine_points", o.refine_points);
    b.finish();
  }
  {
    Block b = top.sub("paths");
    auto& p = c.paths;
    p.dataset = b.get("dataset", p.dataset);
    p.model = b.get("model", p.model);
    p.ensemble = b.get("ensemble", p.ensemble);
    p.eki = b.get("eki", p.eki);
    b.finish();
  }
  top.finish();

  c.eki.seed = c.seed;
  c.eki.workers = c.workers > 0 ? c.workers : default_workers();
  c.optimize.anchors = c.anchors;
  c.optimize.kinetics = c.kinetics;
  c.optimize.deformation = c.deformation;
  c.optimize.sim = c.sim;
  c.optimize.validate();
  return c;
}

json resolved_config(const RunConfig& c) {
  const auto& t = c.training;
  const auto& e = c.eki;
  const auto& o = c.optimize;
  return {
      {"seed", c.seed},
      {"workers", c.workers},
      {"anchors", to_json(c.anchors)},
      {"kinetics", to_json(c.kinetics)},
      {"deformation", to_json(c.deformation)},
      {"sim", to_json(c.sim)},
      {"generate",
       {{"n_t", c.generate.n_t},
        {"n_T", c.generate.n_T},
        {"doc0_set", c.generate.doc0_set},
        {"sensor_count", c.generate.sensor_count},
        {"margin", c.generate.margin}}},
      {"architecture", arch_json(c.architecture)},
      {"eki_architecture", arch_json(c.eki_architecture)},
      {"training",
       {{"iterations", t.iterations},
        {"learning_rate", t.adam.learning_rate},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon},
        {"decay_rate", t.adam.decay_rate},
        {"decay_steps", t.adam.decay_steps},
        {"staircase", t.adam.staircase},
        {"patience", t.patience},
        {"eval_every", t.eval_every},
        {"weights", t.weights},
        {"val_fraction", c.val_fraction},
        {"members", c.members}}},
      {"eki",
       {{"ensemble_size", e.ensemble_size},
        {"iterations", e.iterations},
        {"q", e.q},
        {"r", e.r},
        {"lambda_tik", e.lambda_tik},
        {"prior_std", e.prior_std},
        {"input_noise", e.input_noise},
        {"output_noise", e.output_noise},
        {"transfer_iterations", e.transfer_iterations},
        {"transfer_q", e.transfer_q},
        {"records", c.eki_records},
        {"time_points", c.eki_time_points}}},
      {"transfer",
       {{"lambda_anchor", c.transfer.lambda_anchor},
        {"learning_rate", c.transfer.adam.learning_rate},
        {"max_iterations", c.transfer.max_iterations},
        {"tolerance", c.transfer.tolerance},
        {"history_points", c.transfer.history_points},
        {"source", c.transfer_source}}},
      {"experiment",
       {{"csv", c.experiment.csv},
        {"sidecar", c.experiment.sidecar},
        {"synthetic", c.experiment.synthetic},
        {"t1", c.experiment.t1},
        {"T1", c.experiment.T1},
        {"doc0", c.experiment.doc0},
        {"scale", c.experiment.scale}}},
      {"predict",
       {{"t1", c.predict.t1},
        {"T1", c.predict.T1},
        {"doc0", c.predict.doc0},
        {"points", c.predict.points},
        {"particles", c.predict.particles},
        {"source", c.predict.source}}},
      {"optimize",
       {{"n_t", o.n_t},
        {"n_T", o.n_T},
        {"doc_min", o.doc_min},
        {"doc0", o.doc0},
        {"margin", o.margin},
        {"refine_rounds", o.refine_rounds},
        {"refine_points", o.refine_points}}},
      {"paths",
       {{"dataset", c.paths.dataset}, {"model", c.paths.model}, {"ensemble", c.paths.ensemble}, {"eki", c.paths.eki}}},
  };
}

fs::path cmd_generate(const RunConfig& c) {
  const fs::path out = out_dir(c, "generate");
  const auto& g = c.generate;
  const Dataset ds = generate_dataset(design_grid(c.anchors, g.margin, g.n_t, g.n_T), g.doc0_set, c.kinetics,
                                      c.deformation, c.sim, g.sensor_count, c.anchors, g.margin, workers_of(c));
  write_dataset(out, ds);
  log("generate: " + std::to_string(ds.records.size()) + " records, " + std::to_string(ds.skipped.size()) + " skipped");
  return out;
}

fs::path cmd_train(const RunConfig& c) {
  const TrainingSet set = load_set(c);
  const fs::path out = out_dir(c, "train");
  const FitResult r = fit(initial_model(set, c.architecture, c.seed), set, c.training);
  write_model(out / "model.json", r.model);
  write_history_csv(out / "history.csv", r.history);
  const auto err = channel_errors(r.model, set, set.val_idx);
  write_json(out / "summary.json", {{"best_iter", r.best_iter},
                                    {"best_val_loss", r.best_val_loss},
                                    {"best_train_loss", r.best_train_loss},
                                    {"initial_train_loss", r.initial_train_loss},
                                    {"iterations_run", r.iterations_run},
                                    {"val_relative_l2", {{"doc", err[0]}, {"log_viscosity", err[1]}, {"deformation", err[2]}}}});
  log("train: best validation loss " + format_double(r.best_val_loss) + " at iteration " + std::to_string(r.best_iter));
  return out;
}

fs::path cmd_ensemble(const RunConfig& c) {
  const TrainingSet set = load_set(c);
  const fs::path out = out_dir(c, "ensemble");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < c.members; ++i) seeds.push_back(c.seed + static_cast<std::uint64_t>(i));
  const auto members = fit_ensemble(set, c.architecture, c.training, seeds, workers_of(c));
  write_ensemble(out, members);
  std::size_t ok = 0;
  for (const auto& m : members) {
    if (m.result) ++ok;
    else log("ensemble: member with seed " + std::to_string(m.seed) + " failed: " + m.error);
  }
  if (ok < 2) throw NumericalError("ensemble: fewer than 2 members trained successfully");
  log("ensemble: " + std::to_string(ok) + " of " + std::to_string(members.size()) + " members trained");
  return out;
}

fs::path cmd_eki_train(const RunConfig& c) {
  const TrainingSet set = load_set(c);
  const fs::path out = out_dir(c, "eki-train");
  EkiData data;
  for (int i : even_subset(static_cast<int>(set.train_idx.size()), c.eki_records))
    data.records.push_back(set.train_idx[static_cast<std::size_t>(i)]);
  data.time_index = even_subset(static_cast<int>(set.times.size()), c.eki_time_points);
  const EkiTrainResult r = eki_train(initial_model(set, c.eki_architecture, c.seed), set, c.eki, data);
  write_eki_checkpoint(out / "ensemble", r.model_template, r.ensemble);
  write_misfit_csv(out / "misfit.csv", r.history);
  log("eki-train: mean misfit " + format_double(r.history.front().mean_misfit) + " -> " +
      format_double(r.history.back().mean_misfit));
  return out;
}

fs::path cmd_transfer(const RunConfig& c) {
  const fs::path out = out_dir(c, "transfer");
  const ExperimentRecord rec = load_experiment(c, out);
  if (c.transfer_source == "model") {
    const fs::path mp = in_root(c, c.paths.model);
    require_path(mp, "model");
    const FilmDeepOnet m = read_model(mp);
    const TransferResult r = fine_tune(m, rec, c.transfer);
    write_model(out / "model.json", r.model);
    const std::vector<double> temps = resample_experiment(rec, c.transfer.history_points);
    write_prediction_csv(out / "prediction.csv", r.history, temps);
    write_json(out / "summary.json", summary_of(r));
    if (!r.warning.empty()) log("transfer: " + r.warning);
    log("transfer: terminal " + format_double(r.terminal_prediction) + " mm, target " +
        format_double(rec.terminal_deformation) + " mm");
  } else {
    const fs::path ed = in_root(c, c.paths.ensemble);
    require_path(ed / "manifest.json", "ensemble manifest");
    const auto models = read_ensemble(ed);
    const EnsembleTransfer r = fine_tune_ensemble(models, rec, c.transfer, workers_of(c));
    std::vector<EnsembleMember> adapted;
    json members = json::array();
    for (std::size_t i = 0; i < r.members.size(); ++i) {
      FitResult fr;
      fr.model = r.members[i].model;
      adapted.push_back({static_cast<std::uint64_t>(i), fr, ""});
      members.push_back(summary_of(r.members[i]));
      if (!r.members[i].warning.empty()) log("transfer: member " + std::to_string(i) + ": " + r.members[i].warning);
    }
    write_ensemble(out / "ensemble", adapted);
    write_bands_csv(out / "bands_before.csv", r.before);
    write_bands_csv(out / "bands_after.csv", r.after);
    write_json(out / "summary.json", {{"members", members}});
  }
  return out;
}

fs::path cmd_eki_transfer(const RunConfig& c) {
  const fs::path out = out_dir(c, "eki-transfer");
  const ExperimentRecord rec = load_experiment(c, out);
  const fs::path ed = in_root(c, c.paths.eki);
  require_path(ed / "manifest.json", "EKI checkpoint");
  const EkiCheckpoint ck = read_eki_checkpoint(ed);
  EkiConfig cfg = c.eki;
  cfg.ensemble_size = ck.ensemble.size();
  const EkiTransferResult r = eki_transfer(ck.model_template, ck.ensemble.theta, rec, cfg);
  write_eki_checkpoint(out / "ensemble", ck.model_template, r.ensemble);
  write_misfit_csv(out / "misfit.csv", r.history);
  const std::vector<double> T = resample_experiment(rec, ck.model_template.sensors);
  const std::vector<double> ht = history_times(rec, c.transfer.history_points);
  const int w = workers_of(c);
  write_bands_csv(out / "bands_before.csv",
                  predict_bands(ck.model_template, ck.ensemble.theta, T, rec.doc0, ht, rec.horizon(), false, w).stats);
  write_bands_csv(out / "bands_after.csv",
                  predict_bands(ck.model_template, r.ensemble.theta, T, rec.doc0, ht, rec.horizon(), false, w).stats);
  log("eki-transfer: terminal misfit " + format_double(r.history.front().mean_misfit) + " -> " +
      format_double(r.history.back().mean_misfit));
  return out;
}

fs::path cmd_predict(const RunConfig& c) {
  const fs::path mp = in_root(c, c.paths.model);
  require_path(mp, "model");
  const FilmDeepOnet m = read_model(mp);
  const fs::path out = out_dir(c, "predict");
  const TemperatureProfile p = predict_profile(c);
  const std::vector<double> times = uniform_times(c.anchors, c.predict.points);
  const Prediction pr = predict_trajectory(m, sample_sensors(p, m.sensors), c.predict.doc0, times, c.anchors.t3);
  std::vector<double> temps;
  for (double t : times) temps.push_back(p.at(t));
  write_prediction_csv(out / "prediction.csv", pr, temps);
  if (!pr.warnings.empty()) write_json(out / "warnings.json", pr.warnings);
  return out;
}

fs::path cmd_bands(const RunConfig& c) {
  const TemperatureProfile p = predict_profile(c);
  const std::vector<double> times = uniform_times(c.anchors, c.predict.points);
  Bands b;
  if (c.predict.source == "eki") {
    const fs::path ed = in_root(c, c.paths.eki);
    require_path(ed / "manifest.json", "EKI checkpoint");
    const EkiCheckpoint ck = read_eki_checkpoint(ed);
    b = predict_bands(ck.model_template, ck.ensemble.theta, sample_sensors(p, ck.model_template.sensors), c.predict.doc0,
                      times, c.anchors.t3, c.predict.particles, workers_of(c));
  } else {
    const fs::path ed = in_root(c, c.paths.ensemble);
    require_path(ed / "manifest.json", "ensemble manifest");
    const auto models = read_ensemble(ed);
    const std::vector<double> T = sample_sensors(p, models.front().sensors);
    std::vector<Prediction> preds;
    for (const auto& m : models) preds.push_back(predict_trajectory(m, T, c.predict.doc0, times, c.anchors.t3));
    b.stats = stats_from_predictions(preds);
    if (c.predict.particles)
      for (int ch = 0; ch < kChannels; ++ch) {
        b.particles[ch].resize(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(times.size()));
        for (std::size_t j = 0; j < preds.size(); ++j)
          for (std::size_t i = 0; i < times.size(); ++i)
            b.particles[ch](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = preds[j].channel(ch)[i];
      }
  }
  const fs::path out = out_dir(c, "bands");
  write_bands_csv(out / "bands.csv", b.stats);
  if (c.predict.particles) write_particles_csv(out / "particles.csv", times, b.particles);
  return out;
}

fs::path cmd_optimize(const RunConfig& c) {
  const fs::path mp = in_root(c, c.paths.model);
  require_path(mp, "model");
  const FilmDeepOnet m = read_model(mp);
  OptProblem pb = c.optimize;
  pb.workers = workers_of(c);
  const OptResult r = optimize(m, pb);
  const fs::path out = out_dir(c, "optimize");
  write_feasibility_csv(out / "feasibility_map.csv", r.map);
  write_json(out / "opt_result.json", opt_result_json(r));
  if (r.found)
    log("optimize: A = (" + format_double(r.t1) + " min, " + format_double(r.T1) + " C), |u| = " +
        format_double(r.objective) + " mm");
  else
    log("optimize: no feasible candidate");
  return out;
}

fs::path run_command(const std::string& name, const RunConfig& c) {
  if (name == "generate") return cmd_generate(c);
  if (name == "train") return cmd_train(c);
  if (name == "ensemble") return cmd_ensemble(c);
  if (name == "eki-train") return cmd_eki_train(c);
  if (name == "transfer") return cmd_transfer(c);
  if (name == "eki-transfer") return cmd_eki_transfer(c);
  if (name == "predict") return cmd_predict(c);
  if (name == "bands") return cmd_bands(c);
  if (name == "optimize") return cmd_optimize(c);
  throw ConfigError("unknown subcommand '" + name + "'");
}

int exit_code_for(const std::exception& e) {
  if (const auto* pe = dynamic_cast<const Error*>(&e)) {
    switch (pe->kind()) {
      case ErrorKind::Config:
      case ErrorKind::Domain:
      case ErrorKind::Constraint:
        return kExitConfig;
      case ErrorKind::Data:
      case ErrorKind::Shape:
        return kExitData;
      case ErrorKind::Numerical:
        return kExitNumerical;
    }
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitData;
  if (dynamic_cast<const json::exception*>(&e)) return kExitConfig;
  return kExitData;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"FiLM-DeepONet surrogate pipeline for process-induced deformation"};
  app.require_subcommand(1);
  std::string config_path;
  std::string root;
  std::string seed;
  int workers = -1;
  for (const auto& name : kSubcommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON run config")->required();
    sub->add_option("--root", root, "output root directory (overrides config.root)");
    sub->add_option("--seed", seed, "global seed (overrides config.seed)");
    sub->add_option("--workers", workers, "worker threads, 0 = available parallelism");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    json j;
    try {
      j = json::parse(read_text(config_path));
    } catch (const json::parse_error& e) {
      throw ConfigError(config_path + ": invalid JSON: " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError(config_path + ": config must be a JSON object");
    if (!root.empty()) j["root"] = root;
    if (!seed.empty()) {
      try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(seed, &pos);
        if (pos != seed.size()) throw std::invalid_argument(seed);
        j["seed"] = v;
      } catch (const std::logic_error&) {
        throw ConfigError("--seed must be an unsigned integer");
      }
    }
    if (workers >= 0) j["workers"] = workers;
    const RunConfig cfg = parse_run_config(j, fs::path(config_path).parent_path());
    const fs::path out = run_command(name, cfg);
    std::cout << out.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "pidnet " << name << ": " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace pidnet
