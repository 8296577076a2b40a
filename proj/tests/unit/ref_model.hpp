#pragma once

// Naive re-implementation of the generator forward pass, written directly from
// the architecture (plain loops, no kernels, no caches). Used as an oracle.

#include <cmath>
#include <vector>

#include "simlab/corpus.hpp"
#include "simlab/usersim.hpp"

namespace testutil {

struct RefState {
  std::vector<double> h, c;
};

inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline RefState ref_lstm(const simlab::nn::ParamSet &ps, const simlab::nn::LstmCell &cell,
                         const std::vector<double> &x, const RefState &s) {
  const std::size_t H = cell.hidden, I = cell.input;
  const auto &W = ps[cell.w].value.data, &U = ps[cell.u].value.data, &b = ps[cell.b].value.data;
  std::vector<double> z(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double acc = b[r];
    for (std::size_t j = 0; j < I; ++j) acc += W[r * I + j] * x[j];
    for (std::size_t j = 0; j < H; ++j) acc += U[r * H + j] * s.h[j];
    z[r] = acc;
  }
  RefState out{std::vector<double>(H), std::vector<double>(H)};
  for (std::size_t k = 0; k < H; ++k) {
    const double i = sigm(z[k]), f = sigm(z[H + k]), o = sigm(z[2 * H + k]), g = std::tanh(z[3 * H + k]);
    out.c[k] = f * s.c[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

// Next-token distribution after feeding `input`; SOS and PAD are excluded.
inline std::vector<double> ref_decoder_step(const simlab::GeneratorModel &g, RefState &s, int input) {
  const std::size_t V = g.vocab_size(), H = g.hidden();
  std::vector<double> x(V, 0.0);
  x[static_cast<std::size_t>(input)] = 1.0;
  s = ref_lstm(g.params(), g.decoder(), x, s);
  const auto &W = g.params()[g.projection().w].value.data, &b = g.params()[g.projection().b].value.data;
  std::vector<double> p(V, 0.0);
  double total = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    if (v == simlab::kSos || v == simlab::kPad) continue;
    double logit = b[v];
    for (std::size_t k = 0; k < H; ++k) logit += W[v * H + k] * s.h[k];
    p[v] = std::exp(logit);
    total += p[v];
  }
  for (auto &q : p) q /= total;
  return p;
}

inline std::vector<RefState> ref_encoder_states(const simlab::GeneratorModel &g, const simlab::EncodedDialogue &d) {
  RefState s{std::vector<double>(g.hidden(), 0.0), std::vector<double>(g.hidden(), 0.0)};
  std::vector<RefState> out;
  for (const auto &t : d.turns) {
    s = ref_lstm(g.params(), g.encoder(), t.context, s);
    out.push_back(s);
  }
  return out;
}

// Probability of emitting exactly `tokens` (then EOS, unless the act cap is hit).
inline double ref_sequence_prob(const simlab::GeneratorModel &g, RefState s, const std::vector<int> &tokens) {
  double p = 1.0;
  int input = simlab::kSos;
  for (int t : tokens) {
    p *= ref_decoder_step(g, s, input)[static_cast<std::size_t>(t)];
    input = t;
  }
  if (tokens.size() < simlab::kMaxUserActs) p *= ref_decoder_step(g, s, input)[simlab::kEos];
  return p;
}

// Per-step distributions along `tokens` with the terminating EOS step.
inline std::vector<std::vector<double>> ref_forced_dists(const simlab::GeneratorModel &g, RefState s,
                                                         const std::vector<int> &tokens) {
  std::vector<std::vector<double>> out;
  int input = simlab::kSos;
  for (int t : tokens) {
    out.push_back(ref_decoder_step(g, s, input));
    input = t;
  }
  if (tokens.size() < simlab::kMaxUserActs) out.push_back(ref_decoder_step(g, s, input));
  return out;
}

// Every emittable content sequence of length 0..kMaxUserActs.
inline std::vector<std::vector<int>> all_sequences(const simlab::GeneratorModel &g) {
  std::vector<int> content;
  for (std::size_t v = 0; v < g.vocab_size(); ++v)
    if (g.output_mask()[v] && v != simlab::kEos) content.push_back(static_cast<int>(v));
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (std::size_t len = 1; len <= simlab::kMaxUserActs; ++len) {
    std::vector<std::vector<int>> next;
    for (const auto &p : frontier)
      for (int t : content) {
        auto q = p;
        q.push_back(t);
        next.push_back(q);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

// Tiny layout: user content {a, b}, system content {x}, one slot.
inline simlab::FeatureLayout tiny_layout() {
  return simlab::FeatureLayout(simlab::Vocabulary({"inform(food):VALUE_IN_GOAL", "bye()"}),
                               simlab::Vocabulary({"welcomemsg()"}), {"food"});
}

} // namespace testutil
