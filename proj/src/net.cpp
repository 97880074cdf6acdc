#include "pidnet/net.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "pidnet/error.hpp"

namespace pidnet {

namespace {

MatrixXd glorot_matrix(int out, int in, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-a, a);
  MatrixXd W(out, in);
  // Row-major fill so the draw order matches the serialized layout.
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c) W(r, c) = dist(rng);
  return W;
}

void check_widths(const std::vector<int>& widths) {
  if (widths.size() < 2) throw ShapeError("an MLP needs at least an input and an output width");
  for (int w : widths)
    if (w <= 0) throw ShapeError("MLP widths must be positive");
}

std::uint64_t fnv_mix(std::uint64_t h, const double* data, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void append_matrix(const MatrixXd& M, std::vector<double>& out) {
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) out.push_back(M(r, c));
}

void append_vector(const VectorXd& v, std::vector<double>& out) { out.insert(out.end(), v.data(), v.data() + v.size()); }

std::size_t read_matrix(MatrixXd& M, const double* data, std::size_t size, std::size_t off) {
  const auto need = static_cast<std::size_t>(M.size());
  if (off + need > size) throw ShapeError("parameter vector too short");
  for (Eigen::Index r = 0; r < M.rows(); ++r)
    for (Eigen::Index c = 0; c < M.cols(); ++c) M(r, c) = data[off++];
  return off;
}

std::size_t read_vector(VectorXd& v, const double* data, std::size_t size, std::size_t off) {
  const auto need = static_cast<std::size_t>(v.size());
  if (off + need > size) throw ShapeError("parameter vector too short");
  std::memcpy(v.data(), data + off, need * sizeof(double));
  return off + need;
}

}  // namespace

Mlp Mlp::glorot(const std::vector<int>& widths, std::mt19937_64& rng) {
  check_widths(widths);
  Mlp net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    net.layers.push_back({glorot_matrix(widths[i + 1], widths[i], rng), VectorXd::Zero(widths[i + 1])});
  return net;
}

Mlp Mlp::zeros(const std::vector<int>& widths) {
  check_widths(widths);
  Mlp net;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    net.layers.push_back({MatrixXd::Zero(widths[i + 1], widths[i]), VectorXd::Zero(widths[i + 1])});
  return net;
}

std::vector<int> Mlp::widths() const {
  std::vector<int> w;
  if (layers.empty()) return w;
  w.push_back(in_dim());
  for (const auto& l : layers) w.push_back(static_cast<int>(l.W.rows()));
  return w;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  return n;
}

void Mlp::check_shapes() const {
  if (layers.empty()) throw ShapeError("MLP has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].b.size() != layers[i].W.rows())
      throw ShapeError("layer " + std::to_string(i) + ": bias length does not match weight rows");
    if (i > 0 && layers[i].W.cols() != layers[i - 1].W.rows())
      throw ShapeError("layer " + std::to_string(i) + ": input width does not match previous layer output");
  }
}

FilmParams FilmParams::for_mlp(const Mlp& net, int cond_dim, std::mt19937_64& rng) {
  FilmParams f;
  for (int l = 0; l < net.hidden_count(); ++l) {
    const int w = static_cast<int>(net.layers[l].W.rows());
    FilmLayer fl;
    fl.Wg = glorot_matrix(w, cond_dim, rng);
    fl.bg = VectorXd::Ones(w);
    fl.Wb = glorot_matrix(w, cond_dim, rng);
    fl.bb = VectorXd::Zero(w);
    f.layers.push_back(std::move(fl));
  }
  return f;
}

FilmParams FilmParams::identity(const Mlp& net, int cond_dim) {
  FilmParams f;
  for (int l = 0; l < net.hidden_count(); ++l) {
    const int w = static_cast<int>(net.layers[l].W.rows());
    f.layers.push_back({MatrixXd::Zero(w, cond_dim), VectorXd::Ones(w), MatrixXd::Zero(w, cond_dim), VectorXd::Zero(w)});
  }
  return f;
}

std::size_t FilmParams::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.Wg.size() + l.bg.size() + l.Wb.size() + l.bb.size());
  return n;
}

VectorXd film_apply(const VectorXd& h, const VectorXd& c, const FilmLayer& f) {
  if (h.size() != f.width()) throw ShapeError("film_apply: feature width does not match FiLM width");
  if (c.size() != f.cond_dim()) throw ShapeError("film_apply: conditioning width mismatch");
  const VectorXd gamma = f.Wg * c + f.bg;
  const VectorXd beta = f.Wb * c + f.bb;
  return gamma.cwiseProduct(h) + beta;
}

std::uint64_t fingerprint(const Mlp& net, const FilmParams& film) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& l : net.layers) {
    h = fnv_mix(h, l.W.data(), static_cast<std::size_t>(l.W.size()));
    h = fnv_mix(h, l.b.data(), static_cast<std::size_t>(l.b.size()));
  }
  for (const auto& l : film.layers) {
    h = fnv_mix(h, l.Wg.data(), static_cast<std::size_t>(l.Wg.size()));
    h = fnv_mix(h, l.bg.data(), static_cast<std::size_t>(l.bg.size()));
    h = fnv_mix(h, l.Wb.data(), static_cast<std::size_t>(l.Wb.size()));
    h = fnv_mix(h, l.bb.data(), static_cast<std::size_t>(l.bb.size()));
  }
  return h;
}

MatrixXd mlp_forward(const Mlp& net, const FilmParams& film, const MatrixXd& X, const MatrixXd& C,
                     ForwardCache* cache) {
  net.check_shapes();
  const bool modulated = !film.empty();
  if (X.rows() != net.in_dim())
    throw ShapeError("layer 0: input has " + std::to_string(X.rows()) + " rows, expected " +
                     std::to_string(net.in_dim()));
  if (modulated) {
    if (static_cast<int>(film.layers.size()) != net.hidden_count())
      throw ShapeError("FiLM stack must have one layer per hidden layer");
    if (C.cols() != X.cols()) throw ShapeError("conditioning batch size does not match input batch size");
  }
  if (cache) {
    cache->inputs.clear();
    cache->activations.clear();
    cache->gammas.clear();
    cache->modulated = modulated;
    cache->cond = modulated ? C : MatrixXd();
    cache->fingerprint = fingerprint(net, film);
  }

  MatrixXd A = X;
  const std::size_t L = net.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = net.layers[l];
    MatrixXd Z = layer.W * A;
    Z.colwise() += layer.b;
    if (cache) cache->inputs.push_back(std::move(A));
    if (l + 1 == L) return Z;
    MatrixXd H = Z.array().tanh().matrix();
    if (modulated) {
      const FilmLayer& f = film.layers[l];
      if (f.width() != H.rows()) throw ShapeError("FiLM layer " + std::to_string(l) + ": width mismatch");
      if (C.rows() != f.cond_dim()) throw ShapeError("FiLM layer " + std::to_string(l) + ": conditioning width mismatch");
      MatrixXd G = f.Wg * C;
      G.colwise() += f.bg;
      MatrixXd Bt = f.Wb * C;
      Bt.colwise() += f.bb;
      A = G.cwiseProduct(H) + Bt;
      if (cache) cache->gammas.push_back(std::move(G));
    } else {
      A = H;
    }
    if (cache) cache->activations.push_back(std::move(H));
  }
  return A;  // unreachable for non-empty nets
}

MatrixXd mlp_forward(const Mlp& net, const MatrixXd& X, ForwardCache* cache) {
  return mlp_forward(net, FilmParams{}, X, MatrixXd(), cache);
}

VectorXd mlp_forward(const Mlp& net, const VectorXd& x, ForwardCache* cache) {
  return mlp_forward(net, FilmParams{}, MatrixXd(x), MatrixXd(), cache).col(0);
}

Gradients backward(const Mlp& net, const FilmParams& film, const MatrixXd& loss_grad, const ForwardCache& cache) {
  if (cache.inputs.size() != net.layers.size() || cache.fingerprint != fingerprint(net, film))
    throw ShapeError("backward: stale forward cache (parameters changed since the forward pass)");
  if (loss_grad.rows() != net.out_dim() || loss_grad.cols() != cache.inputs.front().cols())
    throw ShapeError("backward: loss gradient shape does not match network output");

  Gradients g;
  g.net = net;
  if (cache.modulated) {
    g.film = film;
    g.dC = MatrixXd::Zero(cache.cond.rows(), cache.cond.cols());
  }
  MatrixXd dA = loss_grad;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& layer = net.layers[li];
    MatrixXd dZ;
    if (li + 1 == net.layers.size()) {
      dZ = std::move(dA);
    } else {
      const MatrixXd& H = cache.activations[li];
      MatrixXd dH;
      if (cache.modulated) {
        const FilmLayer& f = film.layers[li];
        const MatrixXd dGamma = dA.cwiseProduct(H);
        FilmLayer& gf = g.film.layers[li];
        gf.Wg = dGamma * cache.cond.transpose();
        gf.bg = dGamma.rowwise().sum();
        gf.Wb = dA * cache.cond.transpose();
        gf.bb = dA.rowwise().sum();
        g.dC += f.Wg.transpose() * dGamma + f.Wb.transpose() * dA;
        dH = dA.cwiseProduct(cache.gammas[li]);
      } else {
        dH = std::move(dA);
      }
      dZ = dH.cwiseProduct((1.0 - H.array().square()).matrix());
    }
    g.net.layers[li].W = dZ * cache.inputs[li].transpose();
    g.net.layers[li].b = dZ.rowwise().sum();
    dA = layer.W.transpose() * dZ;
  }
  g.dX = std::move(dA);
  return g;
}

void append_params(const Mlp& net, std::vector<double>& out) {
  for (const auto& l : net.layers) {
    append_matrix(l.W, out);
    append_vector(l.b, out);
  }
}

void append_params(const FilmParams& film, std::vector<double>& out) {
  for (const auto& l : film.layers) {
    append_matrix(l.Wg, out);
    append_vector(l.bg, out);
    append_matrix(l.Wb, out);
    append_vector(l.bb, out);
  }
}

std::size_t load_params(Mlp& net, const double* data, std::size_t size, std::size_t offset) {
  for (auto& l : net.layers) {
    offset = read_matrix(l.W, data, size, offset);
    offset = read_vector(l.b, data, size, offset);
  }
  return offset;
}

std::size_t load_params(FilmParams& film, const double* data, std::size_t size, std::size_t offset) {
  for (auto& l : film.layers) {
    offset = read_matrix(l.Wg, data, size, offset);
    offset = read_vector(l.bg, data, size, offset);
    offset = read_matrix(l.Wb, data, size, offset);
    offset = read_vector(l.bb, data, size, offset);
  }
  return offset;
}

AdamState::AdamState(const AdamConfig& cfg, Eigen::Index n)
    : config(cfg), m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}

double scheduled_learning_rate(const AdamConfig& cfg, long completed_steps) {
  double p = static_cast<double>(completed_steps) / cfg.decay_steps;
  if (cfg.staircase) p = std::floor(p);
  return cfg.learning_rate * std::pow(cfg.decay_rate, p);
}

double AdamState::learning_rate() const { return scheduled_learning_rate(config, step); }

void adam_step(AdamState& s, VectorXd& params, const VectorXd& grads) {
  if (params.size() != grads.size() || s.m.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  if (!grads.allFinite()) throw NumericalError("adam_step: non-finite gradient at step " + std::to_string(s.step));
  const double lr = s.learning_rate();
  const auto& c = s.config;
  ++s.step;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * grads;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  params.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace pidnet
