#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "simlab/kernels.hpp"
#include "simlab/nn.hpp"

using namespace simlab;
using namespace simlab::nn;
using testutil::random_vector;

TEST_SUITE("kernels") {
  TEST_CASE("avx2 kernels match the scalar reference") {
    const auto *avx = kernels::avx2_table();
    if (!avx) {
      MESSAGE("AVX2+FMA not available; only the scalar backend is exercised");
      return;
    }
    const auto &sc = kernels::scalar_table();
    Rng rng(11);
    for (std::size_t n : {0, 1, 3, 4, 5, 7, 8, 15, 16, 17, 31, 33, 64, 67, 130}) {
      CAPTURE(n);
      auto a = random_vector(rng, n), b = random_vector(rng, n);
      const double d0 = sc.dot(a.data(), b.data(), n), d1 = avx->dot(a.data(), b.data(), n);
      CHECK(std::abs(d0 - d1) <= 1e-12 * (1.0 + std::abs(d0)));

      auto y0 = random_vector(rng, n), y1 = y0;
      sc.axpy(0.37, a.data(), y0.data(), n);
      avx->axpy(0.37, a.data(), y1.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y0[i] - y1[i]) <= 1e-12);

      for (std::size_t rows : {1, 2, 5, 9}) {
        auto w = random_vector(rng, rows * n);
        auto x = random_vector(rng, n), v = random_vector(rng, rows);
        std::vector<double> g0(rows, 0.5), g1(rows, 0.5);
        sc.gemv(w.data(), rows, n, x.data(), g0.data());
        avx->gemv(w.data(), rows, n, x.data(), g1.data());
        for (std::size_t i = 0; i < rows; ++i) CHECK(std::abs(g0[i] - g1[i]) <= 1e-12 * (1.0 + std::abs(g0[i])));
        std::vector<double> t0(n, -0.25), t1(n, -0.25);
        sc.gemv_t(w.data(), rows, n, v.data(), t0.data());
        avx->gemv_t(w.data(), rows, n, v.data(), t1.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(t0[i] - t1[i]) <= 1e-12 * (1.0 + std::abs(t0[i])));
        auto w0 = w, w1 = w;
        sc.ger(w0.data(), rows, n, 0.8, v.data(), x.data());
        avx->ger(w1.data(), rows, n, 0.8, v.data(), x.data());
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(w0[i] - w1[i]) <= 1e-12);
      }
    }
  }

  TEST_CASE("backend selection") {
    const std::string before(kernels::backend_name());
    kernels::select_backend("scalar");
    CHECK(kernels::backend_name() == "scalar");
    CHECK_THROWS_AS(kernels::select_backend("gpu"), UsageError);
    kernels::select_backend(before);
  }
}

TEST_SUITE("neuralnet") {
  TEST_CASE("lstm gradients match finite differences") {
    Rng rng(100);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t in = 1 + rng.below(5), H = 1 + rng.below(5);
      ParamSet ps;
      const auto cell = LstmCell::create(ps, "cell", in, H);
      ps.init_uniform(rng, 0.8);
      auto x = random_vector(rng, in);
      RecurrentState s0{random_vector(rng, H, 0.9), random_vector(rng, H, 0.9)};
      const auto a = random_vector(rng, H), b = random_vector(rng, H);
      auto loss = [&] {
        const auto s = lstm_step(ps, cell, x, s0);
        double l = 0;
        for (std::size_t i = 0; i < H; ++i) l += a[i] * s.h[i] + b[i] * s.c[i];
        return l;
      };
      LstmCache cache;
      lstm_step(ps, cell, x, s0, &cache);
      ps.zero_grad();
      std::vector<double> dh = a, dc = b, dx(in, 0.0);
      lstm_backward(ps, cell, cache, dh, dc, dx);
      worst = std::max(worst, testutil::max_param_rel_error(ps, loss, testutil::flat_grads(ps)));
      worst = std::max(worst, testutil::max_input_rel_error(x, loss, dx));
      // gradients w.r.t. the previous state
      worst = std::max(worst, testutil::max_input_rel_error(s0.h, loss, dh));
      worst = std::max(worst, testutil::max_input_rel_error(s0.c, loss, dc));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("dense gradients match finite differences") {
    Rng rng(200);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t in = 1 + rng.below(6), out = 1 + rng.below(6);
      const Activation act = std::array{Activation::Identity, Activation::Relu, Activation::Tanh}[inst % 3];
      ParamSet ps;
      const auto layer = Dense::create(ps, "d", in, out, act);
      ps.init_uniform(rng, 1.0);
      auto x = random_vector(rng, in);
      const auto w = random_vector(rng, out);
      auto loss = [&] {
        const auto y = dense_forward(ps, layer, x);
        double l = 0;
        for (std::size_t i = 0; i < out; ++i) l += w[i] * y[i];
        return l;
      };
      DenseCache cache;
      dense_forward(ps, layer, x, &cache);
      ps.zero_grad();
      std::vector<double> dx(in, 0.0);
      dense_backward(ps, layer, cache, w, dx);
      worst = std::max(worst, testutil::max_param_rel_error(ps, loss, testutil::flat_grads(ps)));
      worst = std::max(worst, testutil::max_input_rel_error(x, loss, dx));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("softmax cross-entropy gradient") {
    Rng rng(300);
    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      const std::size_t n = 2 + rng.below(8);
      auto logits = random_vector(rng, n, 3.0);
      const std::size_t target = rng.below(n);
      const auto r = softmax_xent(logits, target);
      const auto g = xent_grad(r.probs, target);
      worst = std::max(worst, testutil::max_input_rel_error(logits, [&] { return softmax_xent(logits, target).loss; }, g));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("softmax properties") {
    const std::vector<double> big = {1000.0, 1000.0, -1000.0};
    const auto p = softmax(big);
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[2] == 0.0);
    const auto m = masked_softmax(std::vector<double>{1.0, 2.0, 3.0}, {true, false, true});
    CHECK(m[1] == 0.0);
    CHECK(m[0] + m[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(softmax_xent(std::vector<double>{1.0, 2.0}, 5), std::out_of_range);
  }

  TEST_CASE("adam first step") {
    ParamSet ps;
    ps.add("w", {3});
    ps[0].value.data = {0.5, -1.0, 2.0};
    ps[0].grad.data = {0.1, -3.0, 0.0};
    const double lr = 0.01, wd = 0.1;
    adam_step(ps, lr, wd);
    // m_hat = g, v_hat = g^2 after one step, so the update is lr * g / (|g| + eps)
    const std::vector<double> theta0 = {0.5, -1.0, 2.0}, g = {0.1, -3.0, 0.0};
    for (std::size_t i = 0; i < 3; ++i) {
      const double decayed = theta0[i] - lr * wd * theta0[i];
      const double expected = decayed - lr * g[i] / (std::abs(g[i]) + 1e-8);
      CHECK(ps[0].value.data[i] == doctest::Approx(expected).epsilon(1e-12));
      CHECK(ps[0].grad.data[i] == 0.0);
    }
    CHECK(ps.step() == 1);
  }

  TEST_CASE("adam skips non-finite gradients and reports them") {
    ParamSet ps;
    ps.add("a", {1});
    ps.add("b", {1});
    ps[0].grad.data = {std::nan("")};
    ps[1].grad.data = {1.0};
    const auto r = adam_step(ps, 0.1, 0.0);
    CHECK(r.skipped == std::vector<std::string>{"a"});
    CHECK(ps[0].value.data[0] == 0.0);
    CHECK(ps[1].value.data[0] != 0.0);
  }

  TEST_CASE("gradient clipping") {
    ParamSet ps;
    ps.add("a", {2});
    ps[0].grad.data = {3.0, 4.0};
    CHECK(ps.clip_grad_norm(1.0) == doctest::Approx(5.0));
    CHECK(ps.grad_norm() == doctest::Approx(1.0));
  }

  TEST_CASE("shape errors") {
    ParamSet ps;
    const auto d = Dense::create(ps, "d", 3, 2, Activation::Identity);
    CHECK_THROWS_AS(dense_forward(ps, d, std::vector<double>(4, 0.0)), ShapeError);
  }

  TEST_CASE("serialization round trip") {
    ParamSet ps;
    LstmCell::create(ps, "c", 3, 4);
    Rng rng(1);
    ps.init_uniform(rng, 0.3);
    ParamSet other;
    LstmCell::create(other, "c", 3, 4);
    other.load_json(nlohmann::json::parse(ps.to_json().dump()));
    CHECK(other.values_equal(ps));
  }
}
