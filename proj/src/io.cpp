#include "pidnet/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "pidnet/error.hpp"

namespace pidnet {

namespace {

constexpr const char* kModelFormat = "pidnet-film-deeponet";
constexpr const char* kDatasetFormat = "pidnet-dataset";
constexpr const char* kEnsembleFormat = "pidnet-ensemble";
constexpr const char* kEkiFormat = "pidnet-eki-ensemble";

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty())
    throw DataError(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  return v;
}

template <typename T>
T get_key(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw DataError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": bad value for '" + key + "': " + e.what());
  }
}

void check_format(const json& j, const char* format, const std::string& where) {
  const auto f = get_key<std::string>(j, "format", where);
  if (f != format) throw DataError(where + ": expected format '" + format + "', found '" + f + "'");
  const int v = get_key<int>(j, "version", where);
  if (v != kModelFormatVersion)
    throw DataError(where + ": unsupported version " + std::to_string(v) + " (supported: " +
                    std::to_string(kModelFormatVersion) + ")");
}

std::string numbered(const char* stem, std::size_t i, int width, const char* ext) {
  std::ostringstream os;
  os << stem << std::setw(width) << std::setfill('0') << i << ext;
  return os.str();
}

ProfileAnchors anchors_from(const json& j, const std::string& w) {
  ProfileAnchors a;
  a.t0 = get_key<double>(j, "t0", w);
  a.T_start = get_key<double>(j, "T_start", w);
  a.t2 = get_key<double>(j, "t2", w);
  a.T_peak = get_key<double>(j, "T_peak", w);
  a.t3 = get_key<double>(j, "t3", w);
  a.T_end = get_key<double>(j, "T_end", w);
  return a;
}

KineticsParams kinetics_from(const json& j, const std::string& w) {
  KineticsParams k;
  k.A1 = get_key<double>(j, "A1", w);
  k.E1 = get_key<double>(j, "E1", w);
  k.A2 = get_key<double>(j, "A2", w);
  k.E2 = get_key<double>(j, "E2", w);
  k.A3 = get_key<double>(j, "A3", w);
  k.E3 = get_key<double>(j, "E3", w);
  k.B = get_key<double>(j, "B", w);
  k.alpha_switch = get_key<double>(j, "alpha_switch", w);
  k.mu_inf = get_key<double>(j, "mu_inf", w);
  k.U = get_key<double>(j, "U", w);
  k.K = get_key<double>(j, "K", w);
  k.alpha_gel = get_key<double>(j, "alpha_gel", w);
  k.mu_max = get_key<double>(j, "mu_max", w);
  return k;
}

DeformationParams deformation_from(const json& j, const std::string& w) {
  DeformationParams d;
  d.kappa_cte = get_key<double>(j, "kappa_cte", w);
  d.kappa_sh = get_key<double>(j, "kappa_sh", w);
  d.width = get_key<double>(j, "width", w);
  d.T_ref = get_key<double>(j, "T_ref", w);
  return d;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw NumericalError("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw DataError("csv: missing column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, path, n));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw DataError(path.string() + ": empty file");
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
  s += '\n';
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw ShapeError("write_csv: row width differs from header");
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += ',';
      s += format_double(r[i]);
    }
    s += '\n';
  }
  write_text(path, s);
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_trajectory_csv(const fs::path& path, const CureTrajectory& tr) {
  std::vector<std::vector<double>> rows;
  rows.reserve(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i)
    rows.push_back({tr.times[i], tr.temperature[i], tr.doc[i], tr.log_viscosity[i], tr.deformation[i]});
  write_csv(path, split(kTrajectoryHeader), rows);
}

CureTrajectory read_trajectory_csv(const fs::path& path, double doc0) {
  const CsvTable t = read_csv(path);
  if (t.header != split(kTrajectoryHeader))
    throw DataError(path.string() + ": trajectory header must be " + std::string(kTrajectoryHeader));
  CureTrajectory tr;
  tr.doc0 = doc0;
  for (const auto& r : t.rows) {
    tr.times.push_back(r[0]);
    tr.temperature.push_back(r[1]);
    tr.doc.push_back(r[2]);
    tr.log_viscosity.push_back(r[3]);
    tr.deformation.push_back(r[4]);
  }
  return tr;
}

json to_json(const ProfileAnchors& a) {
  return {{"t0", a.t0}, {"T_start", a.T_start}, {"t2", a.t2}, {"T_peak", a.T_peak}, {"t3", a.t3}, {"T_end", a.T_end}};
}

json to_json(const KineticsParams& k) {
  return {{"A1", k.A1}, {"E1", k.E1}, {"A2", k.A2}, {"E2", k.E2}, {"A3", k.A3},
          {"E3", k.E3}, {"B", k.B}, {"alpha_switch", k.alpha_switch}, {"mu_inf", k.mu_inf},
          {"U", k.U}, {"K", k.K}, {"alpha_gel", k.alpha_gel}, {"mu_max", k.mu_max}};
}

json to_json(const DeformationParams& d) {
  return {{"kappa_cte", d.kappa_cte}, {"kappa_sh", d.kappa_sh}, {"width", d.width}, {"T_ref", d.T_ref}};
}

json to_json(const SimSettings& s) { return {{"dt", s.dt}, {"output_points", s.output_points}}; }

json to_json(const Architecture& a) {
  return {{"branch_hidden", a.branch_hidden}, {"trunk_hidden", a.trunk_hidden}, {"latent", a.latent}, {"film", a.film}};
}

json dataset_manifest(const Dataset& ds) {
  json recs = json::array();
  for (const auto& r : ds.records)
    recs.push_back({{"id", r.id},
                    {"t1", r.t1},
                    {"T1", r.T1},
                    {"doc0", r.doc0},
                    {"file", "records/" + numbered("record_", static_cast<std::size_t>(r.id), 4, ".csv")},
                    {"sensors", r.sensors}});
  json skipped = json::array();
  for (const auto& s : ds.skipped) skipped.push_back({{"t1", s.t1}, {"T1", s.T1}, {"reason", s.reason}});
  return {{"format", kDatasetFormat},
          {"version", kModelFormatVersion},
          {"anchors", to_json(ds.anchors)},
          {"kinetics", to_json(ds.kinetics)},
          {"deformation", to_json(ds.deformation)},
          {"sim", to_json(ds.sim)},
          {"margin", ds.margin},
          {"sensor_count", ds.sensor_count},
          {"record_count", ds.records.size()},
          {"records", recs},
          {"skipped", skipped}};
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "records");
  for (const auto& r : ds.records)
    write_trajectory_csv(dir / "records" / numbered("record_", static_cast<std::size_t>(r.id), 4, ".csv"), r.trajectory);
  write_json(dir / "manifest.json", dataset_manifest(ds));
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const json m = read_json(mpath);
  const std::string w = mpath.string();
  check_format(m, kDatasetFormat, w);
  Dataset ds;
  ds.anchors = anchors_from(get_key<json>(m, "anchors", w), w);
  ds.kinetics = kinetics_from(get_key<json>(m, "kinetics", w), w);
  ds.deformation = deformation_from(get_key<json>(m, "deformation", w), w);
  const json sim = get_key<json>(m, "sim", w);
  ds.sim.dt = get_key<double>(sim, "dt", w);
  ds.sim.output_points = get_key<int>(sim, "output_points", w);
  ds.margin = get_key<double>(m, "margin", w);
  ds.sensor_count = get_key<int>(m, "sensor_count", w);
  for (const auto& r : get_key<json>(m, "records", w)) {
    DatasetRecord rec;
    rec.id = get_key<int>(r, "id", w);
    rec.t1 = get_key<double>(r, "t1", w);
    rec.T1 = get_key<double>(r, "T1", w);
    rec.doc0 = get_key<double>(r, "doc0", w);
    rec.sensors = get_key<std::vector<double>>(r, "sensors", w);
    rec.trajectory = read_trajectory_csv(dir / get_key<std::string>(r, "file", w), rec.doc0);
    ds.records.push_back(std::move(rec));
  }
  for (const auto& s : get_key<json>(m, "skipped", w))
    ds.skipped.push_back({get_key<double>(s, "t1", w), get_key<double>(s, "T1", w), get_key<std::string>(s, "reason", w)});
  if (get_key<std::size_t>(m, "record_count", w) != ds.records.size())
    throw DataError(w + ": record_count does not match the record list");
  return ds;
}

json model_to_json(const FilmDeepOnet& m) {
  const auto& n = m.norm;
  return {{"format", kModelFormat},
          {"version", kModelFormatVersion},
          {"sensors", m.sensors},
          {"latent", m.latent},
          {"branch_widths", m.branch.widths()},
          {"trunk_widths", m.trunk.widths()},
          {"film", !m.film.empty()},
          {"normalization",
           {{"temp_offset", n.temp_offset},
            {"temp_scale", n.temp_scale},
            {"doc0_scale", n.doc0_scale},
            {"horizon", n.horizon},
            {"mean", n.mean},
            {"scale", n.scale}}},
          {"doc0_range", {m.doc0_min, m.doc0_max}},
          {"parameters", m.parameters()}};
}

FilmDeepOnet model_from_json(const json& j) {
  const std::string w = "model";
  check_format(j, kModelFormat, w);
  const auto bw = get_key<std::vector<int>>(j, "branch_widths", w);
  const auto tw = get_key<std::vector<int>>(j, "trunk_widths", w);
  if (bw.size() < 2 || tw.size() < 2) throw DataError("model: network needs at least an input and an output layer");
  Architecture a;
  a.branch_hidden.assign(bw.begin() + 1, bw.end() - 1);
  a.trunk_hidden.assign(tw.begin() + 1, tw.end() - 1);
  a.latent = get_key<int>(j, "latent", w);
  a.film = get_key<bool>(j, "film", w);
  const int k = get_key<int>(j, "sensors", w);
  FilmDeepOnet m = FilmDeepOnet::create(a, k, 0);
  if (m.branch.widths() != bw || m.trunk.widths() != tw)
    throw ShapeError("model: stored layer widths are inconsistent with sensors and latent size");
  const json nj = get_key<json>(j, "normalization", w);
  m.norm.temp_offset = get_key<double>(nj, "temp_offset", w);
  m.norm.temp_scale = get_key<double>(nj, "temp_scale", w);
  m.norm.doc0_scale = get_key<double>(nj, "doc0_scale", w);
  m.norm.horizon = get_key<double>(nj, "horizon", w);
  m.norm.mean = get_key<std::array<double, kChannels>>(nj, "mean", w);
  m.norm.scale = get_key<std::array<double, kChannels>>(nj, "scale", w);
  const auto range = get_key<std::vector<double>>(j, "doc0_range", w);
  if (range.size() != 2) throw DataError("model: doc0_range must hold two values");
  m.doc0_min = range[0];
  m.doc0_max = range[1];
  m.set_parameters(get_key<std::vector<double>>(j, "parameters", w));
  return m;
}

void write_model(const fs::path& path, const FilmDeepOnet& m) { write_json(path, model_to_json(m)); }

FilmDeepOnet read_model(const fs::path& path) {
  try {
    return model_from_json(read_json(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& rows) {
  std::vector<std::vector<double>> out;
  for (const auto& r : rows) out.push_back({static_cast<double>(r.iter), r.train_loss, r.val_loss, r.lr});
  write_csv(path, {"iter", "train_loss", "val_loss", "lr"}, out);
}

void write_misfit_csv(const fs::path& path, const std::vector<MisfitRow>& rows) {
  std::vector<std::vector<double>> out;
  for (const auto& r : rows)
    out.push_back({static_cast<double>(r.iter), r.mean_misfit, r.min_misfit, r.ensemble_spread});
  write_csv(path, {"iter", "mean_misfit", "min_misfit", "ensemble_spread"}, out);
}

void write_ensemble(const fs::path& dir, const std::vector<EnsembleMember>& members) {
  fs::create_directories(dir);
  json list = json::array();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto& mb = members[i];
    if (mb.result) {
      const std::string file = numbered("member_", i, 2, ".json");
      write_model(dir / file, mb.result->model);
      write_history_csv(dir / numbered("history_", i, 2, ".csv"), mb.result->history);
      list.push_back({{"seed", mb.seed},
                      {"file", file},
                      {"best_iter", mb.result->best_iter},
                      {"best_val_loss", mb.result->best_val_loss},
                      {"iterations_run", mb.result->iterations_run}});
    } else {
      list.push_back({{"seed", mb.seed}, {"error", mb.error}});
    }
  }
  write_json(dir / "manifest.json", {{"format", kEnsembleFormat}, {"version", kModelFormatVersion}, {"members", list}});
}

std::vector<FilmDeepOnet> read_ensemble(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const json m = read_json(mpath);
  check_format(m, kEnsembleFormat, mpath.string());
  std::vector<FilmDeepOnet> out;
  for (const auto& mb : get_key<json>(m, "members", mpath.string()))
    if (mb.contains("file")) out.push_back(read_model(dir / mb.at("file").get<std::string>()));
  if (out.empty()) throw DataError(mpath.string() + ": ensemble has no trained members");
  return out;
}

ExperimentRecord read_experiment(const fs::path& csv, const fs::path& sidecar) {
  const CsvTable t = read_csv(csv);
  const std::size_t ct = t.column("time_min");
  const std::size_t cT = t.column("temp_C");
  ExperimentRecord rec;
  for (const auto& r : t.rows) {
    rec.times.push_back(r[ct]);
    rec.temperatures.push_back(r[cT]);
  }
  if (rec.times.size() < 2) throw DataError(csv.string() + ": fewer than 2 measurement points");
  const json s = read_json(sidecar);
  const std::string w = sidecar.string();
  static const std::set<std::string> known = {"terminal_deformation_mm", "specimen_deformations_mm", "specimen_index",
                                              "doc0", "label", "duration_min"};
  for (const auto& [key, value] : s.items())
    if (!known.count(key)) throw DataError(w + ": unknown key '" + key + "'");
  if (s.contains("terminal_deformation_mm")) {
    rec.terminal_deformation = get_key<double>(s, "terminal_deformation_mm", w);
  } else {
    const auto spec = get_key<std::vector<double>>(s, "specimen_deformations_mm", w);
    if (spec.empty()) throw DataError(w + ": specimen_deformations_mm is empty");
    if (s.contains("specimen_index")) {
      const auto i = get_key<std::size_t>(s, "specimen_index", w);
      if (i >= spec.size()) throw DataError(w + ": specimen_index out of range");
      rec.terminal_deformation = spec[i];
    } else {
      double sum = 0.0;
      for (double v : spec) sum += v;
      rec.terminal_deformation = sum / static_cast<double>(spec.size());
    }
  }
  rec.doc0 = get_key<double>(s, "doc0", w);
  rec.label = s.value("label", "");
  rec.duration = s.contains("duration_min") ? get_key<double>(s, "duration_min", w) : rec.times.back() - rec.times.front();
  rec.validate();
  return rec;
}

void write_experiment(const fs::path& csv, const fs::path& sidecar, const ExperimentRecord& rec) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < rec.times.size(); ++i) rows.push_back({rec.times[i], rec.temperatures[i]});
  write_csv(csv, {"time_min", "temp_C"}, rows);
  write_json(sidecar, {{"terminal_deformation_mm", rec.terminal_deformation},
                       {"doc0", rec.doc0},
                       {"label", rec.label},
                       {"duration_min", rec.duration}});
}

void write_eki_checkpoint(const fs::path& dir, const FilmDeepOnet& model_template, const EkiEnsemble& ens) {
  fs::create_directories(dir / "particles");
  write_model(dir / "template.json", model_template);
  json files = json::array();
  for (Eigen::Index j = 0; j < ens.size(); ++j) {
    const std::string f = "particles/" + numbered("particle_", static_cast<std::size_t>(j), 4, ".json");
    std::vector<double> p(ens.theta.col(j).data(), ens.theta.col(j).data() + ens.dim());
    write_json(dir / f, {{"index", j}, {"parameters", p}});
    files.push_back(f);
  }
  write_json(dir / "manifest.json", {{"format", kEkiFormat},
                                     {"version", kModelFormatVersion},
                                     {"ensemble_size", ens.size()},
                                     {"param_dim", ens.dim()},
                                     {"iteration", ens.iteration},
                                     {"template", "template.json"},
                                     {"particles", files}});
}

EkiCheckpoint read_eki_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const json m = read_json(mpath);
  const std::string w = mpath.string();
  check_format(m, kEkiFormat, w);
  EkiCheckpoint c;
  c.model_template = read_model(dir / get_key<std::string>(m, "template", w));
  const auto J = get_key<Eigen::Index>(m, "ensemble_size", w);
  const auto dim = get_key<Eigen::Index>(m, "param_dim", w);
  if (static_cast<std::size_t>(dim) != c.model_template.param_count())
    throw ShapeError(w + ": param_dim differs from the template parameter count");
  const auto files = get_key<std::vector<std::string>>(m, "particles", w);
  if (static_cast<Eigen::Index>(files.size()) != J) throw DataError(w + ": particle list length differs from ensemble_size");
  c.ensemble.theta.resize(dim, J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const json p = read_json(dir / files[static_cast<std::size_t>(j)]);
    const auto v = get_key<std::vector<double>>(p, "parameters", files[static_cast<std::size_t>(j)]);
    if (static_cast<Eigen::Index>(v.size()) != dim) throw ShapeError(files[static_cast<std::size_t>(j)] + ": wrong length");
    c.ensemble.theta.col(j) = Eigen::Map<const VectorXd>(v.data(), dim);
  }
  c.ensemble.iteration = get_key<long>(m, "iteration", w);
  return c;
}

void write_prediction_csv(const fs::path& path, const Prediction& p, const std::vector<double>& temperature) {
  if (temperature.size() != p.times.size()) throw ShapeError("write_prediction_csv: temperature length differs");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < p.times.size(); ++i)
    rows.push_back({p.times[i], temperature[i], p.doc_hat[i], p.log_visc_hat[i], p.deformation_hat[i]});
  write_csv(path, split(kTrajectoryHeader), rows);
}

void write_bands_csv(const fs::path& path, const EnsembleStats& s) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < s.times.size(); ++i)
    rows.push_back({s.times[i], s.mean[kDoc][i], s.std[kDoc][i], s.mean[kLogViscosity][i], s.std[kLogViscosity][i],
                    s.mean[kDeformation][i], s.std[kDeformation][i]});
  write_csv(path,
            {"time_min", "doc_mean", "doc_std", "log_visc_mean", "log_visc_std", "deformation_mean", "deformation_std"},
            rows);
}

void write_particles_csv(const fs::path& path, const std::vector<double>& times,
                         const std::array<MatrixXd, kChannels>& particles) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index j = 0; j < particles[0].rows(); ++j)
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      rows.push_back({static_cast<double>(j), times[i], particles[kDoc](j, ii), particles[kLogViscosity](j, ii),
                      particles[kDeformation](j, ii)});
    }
  write_csv(path, {"particle", "time_min", "doc", "log_visc_lnPaS", "deformation_mm"}, rows);
}

void write_feasibility_csv(const fs::path& path, const std::vector<MapCell>& map) {
  std::vector<std::vector<double>> rows;
  for (const auto& c : map)
    rows.push_back({c.t1, c.T1, c.result.feasible ? 1.0 : 0.0, c.result.doc_final, c.result.deformation});
  write_csv(path, {"t1_min", "T1_C", "feasible", "doc_final", "deformation_mm"}, rows);
}

json opt_result_json(const OptResult& r) {
  json cons = json::array();
  for (const auto& c : r.at_optimum.constraints)
    cons.push_back({{"name", c.name}, {"margin", c.margin}, {"satisfied", c.satisfied}});
  json j = {{"found", r.found},
            {"t1_min", r.t1},
            {"T1_C", r.T1},
            {"objective_mm", r.objective},
            {"doc_final", r.at_optimum.doc_final},
            {"deformation_mm", r.at_optimum.deformation},
            {"uncertainty", {{"t1_min", r.uncertainty_t1}, {"T1_C", r.uncertainty_T1}}},
            {"grid_best", {{"t1_min", r.grid_t1}, {"T1_C", r.grid_T1}}},
            {"constraints", cons},
            {"warnings", r.warnings}};
  if (r.verification)
    j["verification"] = {{"doc_final", r.verification->doc_final},
                         {"deformation_mm", r.verification->deformation},
                         {"feasible", r.verification->feasible}};
  return j;
}

}  // namespace pidnet
