#pragma once

// Minimal numerical core for the fixed architectures used by the simulators:
// an LSTM cell, dense layers, masked softmax / cross-entropy and Adam with
// decoupled weight decay. Gradients are hand-derived; there is no graph.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "simlab/common.hpp"

namespace simlab::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  void zero();
  bool all_finite() const;
  bool operator==(const Tensor &) const = default;
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
};

// Owns named parameters together with their gradient and Adam moment buffers.
class ParamSet {
public:
  std::size_t add(const std::string &name, std::vector<std::size_t> shape);

  Param &operator[](std::size_t i) { return params_[i]; }
  const Param &operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t index_of(const std::string &name) const;
  std::vector<Param> &params() { return params_; }
  const std::vector<Param> &params() const { return params_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  void zero_grad();
  double grad_norm() const;
  // Scales gradients down to max_norm when their global norm exceeds it.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm);
  void init_uniform(Rng &rng, double scale);
  std::size_t parameter_count() const;

  nlohmann::json to_json() const;
  // Overwrites values of existing parameters; names and shapes must match.
  void load_json(const nlohmann::json &j);

  bool values_equal(const ParamSet &other) const;

private:
  std::vector<Param> params_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamReport {
  std::vector<std::string> skipped;  // parameters with non-finite gradients
};

// theta <- theta - lr*wd*theta, then the bias-corrected Adam step. Gradients
// are cleared afterwards. Throws NumericalError if a parameter becomes
// non-finite.
AdamReport adam_step(ParamSet &ps, double lr, double weight_decay, const AdamConfig &cfg = {});

struct RecurrentState {
  std::vector<double> h;
  std::vector<double> c;

  static RecurrentState zeros(std::size_t hidden) { return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)}; }
  bool operator==(const RecurrentState &) const = default;
};

// Gate order in the stacked weights: input, forget, output, candidate.
struct LstmCell {
  std::size_t w = 0;  // [4H, in]
  std::size_t u = 0;  // [4H, H]
  std::size_t b = 0;  // [4H]
  std::size_t input = 0;
  std::size_t hidden = 0;

  static LstmCell create(ParamSet &ps, const std::string &prefix, std::size_t input, std::size_t hidden);
};

struct LstmCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> i, f, o, g;
  std::vector<double> c, tanh_c;
};

RecurrentState lstm_step(const ParamSet &ps, const LstmCell &cell, std::span<const double> x,
                         const RecurrentState &s, LstmCache *cache = nullptr);

// Accumulates parameter gradients. dx may be empty when the input gradient is
// not needed. dh/dc are the gradients w.r.t. the step's outputs; on return
// they are replaced by the gradients w.r.t. the step's inputs h_prev/c_prev.
void lstm_backward(ParamSet &ps, const LstmCell &cell, const LstmCache &cache, std::vector<double> &dh,
                   std::vector<double> &dc, std::span<double> dx);

enum class Activation { Identity, Relu, Tanh };

struct Dense {
  std::size_t w = 0;  // [out, in]
  std::size_t b = 0;  // [out]
  std::size_t input = 0;
  std::size_t output = 0;
  Activation activation = Activation::Identity;

  static Dense create(ParamSet &ps, const std::string &prefix, std::size_t input, std::size_t output,
                      Activation act);
};

struct DenseCache {
  std::vector<double> x;
  std::vector<double> y;
};

std::vector<double> dense_forward(const ParamSet &ps, const Dense &layer, std::span<const double> x,
                                  DenseCache *cache = nullptr);
void dense_backward(ParamSet &ps, const Dense &layer, const DenseCache &cache, std::span<const double> dy,
                    std::span<double> dx);

// Max-subtracted softmax. Entries with mask[i] == false get probability 0.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool> &mask);

struct SoftmaxXent {
  std::vector<double> probs;
  double loss;
};

// Throws std::out_of_range for a target outside the logits.
SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target);

// d(-log p[target]) / d logits = p - onehot(target).
std::vector<double> xent_grad(std::span<const double> probs, std::size_t target);

double logistic(double x);

} // namespace simlab::nn
