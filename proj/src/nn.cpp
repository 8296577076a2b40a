#include "simlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "simlab/kernels.hpp"

namespace simlab::nn {

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  data.assign(n, 0.0);
}

void Tensor::zero() { std::fill(data.begin(), data.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

std::size_t ParamSet::add(const std::string &name, std::vector<std::size_t> shape) {
  for (const auto &p : params_)
    if (p.name == name) throw std::logic_error("duplicate parameter '" + name + "'");
  Param p;
  p.name = name;
  p.value = Tensor(shape);
  p.grad = Tensor(shape);
  p.m = Tensor(shape);
  p.v = Tensor(shape);
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string &name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw DataError("no parameter named '" + name + "'");
}

void ParamSet::zero_grad() {
  for (auto &p : params_) p.grad.zero();
}

double ParamSet::grad_norm() const {
  double s = 0.0;
  for (const auto &p : params_)
    for (double g : p.grad.data) s += g * g;
  return std::sqrt(s);
}

double ParamSet::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto &p : params_)
      for (double &g : p.grad.data) g *= scale;
  }
  return norm;
}

void ParamSet::init_uniform(Rng &rng, double scale) {
  for (auto &p : params_)
    for (double &x : p.value.data) x = rng.uniform(-scale, scale);
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto &p : params_) n += p.value.size();
  return n;
}

nlohmann::json ParamSet::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto &p : params_) j[p.name] = {{"shape", p.value.shape}, {"data", p.value.data}};
  return j;
}

void ParamSet::load_json(const nlohmann::json &j) {
  if (j.size() != params_.size()) throw DataError("parameter count mismatch in model file");
  for (auto &p : params_) {
    if (!j.contains(p.name)) throw DataError("model file lacks parameter '" + p.name + "'");
    const auto &pj = j.at(p.name);
    if (pj.at("shape").get<std::vector<std::size_t>>() != p.value.shape)
      throw DataError("shape mismatch for parameter '" + p.name + "'");
    auto data = pj.at("data").get<std::vector<double>>();
    if (data.size() != p.value.size()) throw DataError("data length mismatch for parameter '" + p.name + "'");
    p.value.data = std::move(data);
    p.grad.zero();
    p.m.zero();
    p.v.zero();
  }
  step_ = 0;
}

bool ParamSet::values_equal(const ParamSet &other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) return false;
  return true;
}

AdamReport adam_step(ParamSet &ps, double lr, double weight_decay, const AdamConfig &cfg) {
  AdamReport report;
  ps.set_step(ps.step() + 1);
  const double t = static_cast<double>(ps.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto &p : ps.params()) {
    if (!p.grad.all_finite()) {
      report.skipped.push_back(p.name);
      p.grad.zero();
      continue;
    }
    auto &theta = p.value.data;
    auto &g = p.grad.data;
    auto &m = p.m.data;
    auto &v = p.v.data;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      theta[k] -= lr * weight_decay * theta[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      theta[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      g[k] = 0.0;
    }
    if (!p.value.all_finite()) throw NumericalError("parameter '" + p.name + "' became non-finite");
  }
  return report;
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LstmCell LstmCell::create(ParamSet &ps, const std::string &prefix, std::size_t input, std::size_t hidden) {
  LstmCell cell;
  cell.w = ps.add(prefix + ".W", {4 * hidden, input});
  cell.u = ps.add(prefix + ".U", {4 * hidden, hidden});
  cell.b = ps.add(prefix + ".b", {4 * hidden});
  cell.input = input;
  cell.hidden = hidden;
  return cell;
}

RecurrentState lstm_step(const ParamSet &ps, const LstmCell &cell, std::span<const double> x,
                         const RecurrentState &s, LstmCache *cache) {
  const std::size_t H = cell.hidden;
  if (x.size() != cell.input) {
    throw ShapeError("lstm input width " + std::to_string(x.size()) + " != " + std::to_string(cell.input));
  }
  if (s.h.size() != H || s.c.size() != H) throw ShapeError("lstm state width mismatch");

  std::vector<double> z = ps[cell.b].value.data;
  kernels::gemv(ps[cell.w].value.data, 4 * H, cell.input, x, z);
  kernels::gemv(ps[cell.u].value.data, 4 * H, H, s.h, z);

  RecurrentState out{std::vector<double>(H), std::vector<double>(H)};
  std::vector<double> gi(H), gf(H), go(H), gg(H), tc(H);
  for (std::size_t k = 0; k < H; ++k) {
    gi[k] = logistic(z[k]);
    gf[k] = logistic(z[H + k]);
    go[k] = logistic(z[2 * H + k]);
    gg[k] = std::tanh(z[3 * H + k]);
    out.c[k] = gf[k] * s.c[k] + gi[k] * gg[k];
    tc[k] = std::tanh(out.c[k]);
    out.h[k] = go[k] * tc[k];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev = s.h;
    cache->c_prev = s.c;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->o = std::move(go);
    cache->g = std::move(gg);
    cache->c = out.c;
    cache->tanh_c = std::move(tc);
  }
  return out;
}

void lstm_backward(ParamSet &ps, const LstmCell &cell, const LstmCache &cache, std::vector<double> &dh,
                   std::vector<double> &dc, std::span<double> dx) {
  const std::size_t H = cell.hidden;
  std::vector<double> dz(4 * H);
  std::vector<double> dc_prev(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double d_o = dh[k] * cache.tanh_c[k];
    const double dct = dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
    const double d_i = dct * cache.g[k];
    const double d_g = dct * cache.i[k];
    const double d_f = dct * cache.c_prev[k];
    dc_prev[k] = dct * cache.f[k];
    dz[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
    dz[H + k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
    dz[2 * H + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
    dz[3 * H + k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
  }
  kernels::ger(ps[cell.w].grad.data, 4 * H, cell.input, 1.0, dz, cache.x);
  kernels::ger(ps[cell.u].grad.data, 4 * H, H, 1.0, dz, cache.h_prev);
  kernels::axpy(1.0, dz, ps[cell.b].grad.data);
  if (!dx.empty()) kernels::gemv_t(ps[cell.w].value.data, 4 * H, cell.input, dz, dx);
  std::vector<double> dh_prev(H, 0.0);
  kernels::gemv_t(ps[cell.u].value.data, 4 * H, H, dz, dh_prev);
  dh = std::move(dh_prev);
  dc = std::move(dc_prev);
}

Dense Dense::create(ParamSet &ps, const std::string &prefix, std::size_t input, std::size_t output,
                    Activation act) {
  Dense d;
  d.w = ps.add(prefix + ".W", {output, input});
  d.b = ps.add(prefix + ".b", {output});
  d.input = input;
  d.output = output;
  d.activation = act;
  return d;
}

std::vector<double> dense_forward(const ParamSet &ps, const Dense &layer, std::span<const double> x,
                                  DenseCache *cache) {
  if (x.size() != layer.input) {
    throw ShapeError("dense input width " + std::to_string(x.size()) + " != " + std::to_string(layer.input));
  }
  std::vector<double> y = ps[layer.b].value.data;
  kernels::gemv(ps[layer.w].value.data, layer.output, layer.input, x, y);
  switch (layer.activation) {
  case Activation::Identity:
    break;
  case Activation::Relu:
    for (double &v : y) v = v > 0.0 ? v : 0.0;
    break;
  case Activation::Tanh:
    for (double &v : y) v = std::tanh(v);
    break;
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->y = y;
  }
  return y;
}

void dense_backward(ParamSet &ps, const Dense &layer, const DenseCache &cache, std::span<const double> dy,
                    std::span<double> dx) {
  if (dy.size() != layer.output) throw ShapeError("dense output gradient width mismatch");
  std::vector<double> dpre(dy.begin(), dy.end());
  switch (layer.activation) {
  case Activation::Identity:
    break;
  case Activation::Relu:
    for (std::size_t k = 0; k < dpre.size(); ++k)
      if (cache.y[k] <= 0.0) dpre[k] = 0.0;
    break;
  case Activation::Tanh:
    for (std::size_t k = 0; k < dpre.size(); ++k) dpre[k] *= 1.0 - cache.y[k] * cache.y[k];
    break;
  }
  kernels::ger(ps[layer.w].grad.data, layer.output, layer.input, 1.0, dpre, cache.x);
  kernels::axpy(1.0, dpre, ps[layer.b].grad.data);
  if (!dx.empty()) kernels::gemv_t(ps[layer.w].value.data, layer.output, layer.input, dpre, dx);
}

std::vector<double> softmax(std::span<const double> logits) {
  return masked_softmax(logits, std::vector<bool>(logits.size(), true));
}

std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool> &mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) mx = std::max(mx, logits[i]);
  std::vector<double> p(logits.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double &v : p) v /= total;
  return p;
}

SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw std::out_of_range("softmax_xent target index out of range");
  double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  const double log_z = mx + std::log(total);
  SoftmaxXent out;
  out.probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.probs[i] = std::exp(logits[i] - log_z);
  out.loss = log_z - logits[target];
  return out;
}

std::vector<double> xent_grad(std::span<const double> probs, std::size_t target) {
  std::vector<double> g(probs.begin(), probs.end());
  g.at(target) -= 1.0;
  return g;
}

} // namespace simlab::nn
