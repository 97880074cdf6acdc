#include "pidnet/deeponet.hpp"

#include <random>

#include "pidnet/error.hpp"

namespace pidnet {

FilmDeepOnet FilmDeepOnet::create(const Architecture& arch, int sensors, std::uint64_t seed) {
  if (sensors < 2) throw ConfigError("DeepONet needs at least 2 sensors");
  if (arch.latent <= 0) throw ConfigError("latent width must be positive");
  std::mt19937_64 rng(seed);
  FilmDeepOnet m;
  m.latent = arch.latent;
  m.sensors = sensors;

  std::vector<int> bw{sensors + 1};
  bw.insert(bw.end(), arch.branch_hidden.begin(), arch.branch_hidden.end());
  bw.push_back(kChannels * arch.latent);
  std::vector<int> tw{1};
  tw.insert(tw.end(), arch.trunk_hidden.begin(), arch.trunk_hidden.end());
  tw.push_back(arch.latent);

  m.branch = Mlp::glorot(bw, rng);
  if (arch.film) m.film = FilmParams::for_mlp(m.branch, 1, rng);
  m.trunk = Mlp::glorot(tw, rng);
  m.validate();
  return m;
}

void FilmDeepOnet::validate() const {
  branch.check_shapes();
  trunk.check_shapes();
  if (branch.in_dim() != sensors + 1) throw ShapeError("branch input width must equal sensors + 1");
  if (branch.out_dim() != kChannels * latent) throw ShapeError("branch output width must equal 3 * latent");
  if (trunk.in_dim() != 1) throw ShapeError("trunk input width must be 1");
  if (trunk.out_dim() != latent) throw ShapeError("trunk output width must equal latent");
  if (!film.empty()) {
    if (static_cast<int>(film.layers.size()) != branch.hidden_count())
      throw ShapeError("FiLM stack must have one layer per branch hidden layer");
    for (int l = 0; l < branch.hidden_count(); ++l)
      if (film.layers[l].width() != branch.layers[l].W.rows() || film.layers[l].cond_dim() != 1)
        throw ShapeError("FiLM layer " + std::to_string(l) + " does not match branch hidden width");
  }
}

std::size_t FilmDeepOnet::param_count() const {
  return branch.param_count() + film.param_count() + trunk.param_count();
}

std::vector<double> FilmDeepOnet::parameters() const {
  std::vector<double> p;
  p.reserve(param_count());
  append_params(branch, p);
  append_params(film, p);
  append_params(trunk, p);
  return p;
}

void FilmDeepOnet::set_parameters(std::span<const double> p) {
  if (p.size() != param_count())
    throw ShapeError("parameter vector has " + std::to_string(p.size()) + " entries, model expects " +
                     std::to_string(param_count()));
  std::size_t off = load_params(branch, p.data(), p.size(), 0);
  off = load_params(film, p.data(), p.size(), off);
  load_params(trunk, p.data(), p.size(), off);
}

std::pair<std::size_t, std::size_t> FilmDeepOnet::last_branch_layer_range() const {
  const auto& last = branch.layers.back();
  const std::size_t n = static_cast<std::size_t>(last.W.size() + last.b.size());
  const std::size_t end = branch.param_count();
  return {end - n, end};
}

std::uint64_t FilmDeepOnet::fingerprint() const {
  return pidnet::fingerprint(branch, film) ^ (pidnet::fingerprint(trunk, FilmParams{}) * 31ULL);
}

VectorXd branch_vector(const FilmDeepOnet& model, std::span<const double> T_samples, double doc0) {
  if (static_cast<int>(T_samples.size()) != model.sensors)
    throw ShapeError("expected " + std::to_string(model.sensors) + " sensor temperatures, got " +
                     std::to_string(T_samples.size()));
  VectorXd x(model.sensors + 1);
  for (int i = 0; i < model.sensors; ++i) x[i] = model.norm.temperature(T_samples[i]);
  x[model.sensors] = model.norm.doc0(doc0);
  return x;
}

BranchCoefficients encode_branch(const FilmDeepOnet& model, std::span<const double> T_samples, double doc0) {
  const VectorXd x = branch_vector(model, T_samples, doc0);
  MatrixXd c(1, 1);
  c(0, 0) = model.norm.doc0(doc0);
  const VectorXd out = mlp_forward(model.branch, model.film, MatrixXd(x), c).col(0);
  const int G = model.latent;
  return {out.segment(0, G), out.segment(G, G), out.segment(2 * G, G)};
}

VectorXd trunk_basis(const FilmDeepOnet& model, double t, bool* extrapolated) {
  if (extrapolated) *extrapolated = !(t >= 0.0 && t <= 1.0);
  VectorXd x(1);
  x[0] = t;
  return mlp_forward(model.trunk, x);
}

double contract(const VectorXd& h, const VectorXd& phi) {
  if (h.size() != phi.size()) throw ShapeError("contract: length mismatch");
  double s = 0.0;
  for (Eigen::Index l = 0; l < h.size(); ++l) s += h[l] * phi[l];
  return s;
}

Prediction predict_trajectory(const FilmDeepOnet& model, std::span<const double> T_samples, double doc0,
                              std::span<const double> times, double horizon) {
  if (horizon <= 0.0) horizon = model.norm.horizon;
  const BranchCoefficients h = encode_branch(model, T_samples, doc0);
  Prediction p;
  p.times.assign(times.begin(), times.end());
  p.doc_hat.reserve(times.size());
  p.log_visc_hat.reserve(times.size());
  p.deformation_hat.reserve(times.size());
  bool any_extrapolated = false;
  for (double t : times) {
    bool extrapolated = false;
    const VectorXd phi = trunk_basis(model, t / horizon, &extrapolated);
    any_extrapolated = any_extrapolated || extrapolated;
    p.doc_hat.push_back(model.norm.physical(kDoc, contract(h.doc, phi)));
    p.log_visc_hat.push_back(model.norm.physical(kLogViscosity, contract(h.visc, phi)));
    p.deformation_hat.push_back(model.norm.physical(kDeformation, contract(h.deformation, phi)));
  }
  if (any_extrapolated) p.warnings.push_back("trunk evaluated outside the normalized training interval [0,1]");
  return p;
}

OperatorBatch make_batch(const FilmDeepOnet& model, const std::vector<std::vector<double>>& T_samples,
                         const std::vector<double>& doc0, const std::vector<double>& times_normalized) {
  if (T_samples.size() != doc0.size()) throw ShapeError("make_batch: sample and doc0 counts differ");
  const auto N = static_cast<Eigen::Index>(T_samples.size());
  OperatorBatch b;
  b.branch_in.resize(model.sensors + 1, N);
  b.cond.resize(1, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    b.branch_in.col(j) = branch_vector(model, T_samples[j], doc0[j]);
    b.cond(0, j) = model.norm.doc0(doc0[j]);
  }
  b.trunk_in.resize(1, static_cast<Eigen::Index>(times_normalized.size()));
  for (std::size_t i = 0; i < times_normalized.size(); ++i) b.trunk_in(0, static_cast<Eigen::Index>(i)) = times_normalized[i];
  return b;
}

BatchForward forward_batch(const FilmDeepOnet& model, const OperatorBatch& batch, bool keep_cache) {
  BatchForward f;
  f.branch_out = mlp_forward(model.branch, model.film, batch.branch_in, batch.cond, keep_cache ? &f.branch_cache : nullptr);
  f.basis = mlp_forward(model.trunk, batch.trunk_in, keep_cache ? &f.trunk_cache : nullptr);
  const int G = model.latent;
  for (int c = 0; c < kChannels; ++c) f.pred[c].noalias() = f.branch_out.middleRows(c * G, G).transpose() * f.basis;
  return f;
}

VectorXd backward_batch(const FilmDeepOnet& model, const BatchForward& fwd,
                        const std::array<MatrixXd, kChannels>& dpred) {
  const int G = model.latent;
  MatrixXd dB(kChannels * G, fwd.branch_out.cols());
  MatrixXd dPhi = MatrixXd::Zero(G, fwd.basis.cols());
  for (int c = 0; c < kChannels; ++c) {
    dB.middleRows(c * G, G).noalias() = fwd.basis * dpred[c].transpose();
    dPhi.noalias() += fwd.branch_out.middleRows(c * G, G) * dpred[c];
  }
  const Gradients gb = backward(model.branch, model.film, dB, fwd.branch_cache);
  const Gradients gt = backward(model.trunk, FilmParams{}, dPhi, fwd.trunk_cache);
  std::vector<double> flat;
  flat.reserve(model.param_count());
  append_params(gb.net, flat);
  append_params(gb.film, flat);
  append_params(gt.net, flat);
  return Eigen::Map<const VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

}  // namespace pidnet
