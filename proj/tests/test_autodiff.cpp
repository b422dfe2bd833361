#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fd_check.hpp"
#include "prrl/adam.hpp"
#include "prrl/graph.hpp"

using namespace prrl;

namespace {

Tensor tf(Shape sh, std::vector<float> v) { return Tensor::from(std::move(sh), std::move(v)); }

}  // namespace

TEST_CASE("softmax of uniform logits is uniform") {
  GraphT<float> g;
  auto x = g.leaf(tf({4}, {0, 0, 0, 0}));
  auto y = softmax(x);
  for (float v : y.value().data) CHECK(v == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937 rng(7);
  for (int t = 0; t < 50; ++t) {
    GraphT<float> g;
    auto x = g.leaf(Tensor::randn({5, 9}, 3.0, rng));
    auto y = softmax(x);
    for (int i = 0; i < 5; ++i) {
      double s = 0;
      for (int j = 0; j < 9; ++j) s += y.value().at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    CHECK(y.value().all_finite());
  }
}

TEST_CASE("matmul by identity returns the input") {
  std::mt19937 rng(3);
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
  Tensor x = Tensor::randn({3, 5}, 1.0, rng);
  GraphT<float> g;
  auto y = matmul(g.leaf(eye), g.leaf(x));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.value().data[i] == x.data[i]);
}

TEST_CASE("layer_norm output has zero mean and unit variance") {
  GraphT<float> g;
  auto y = layer_norm(g.leaf(tf({3}, {1, 2, 3})));
  double mean = 0, var = 0;
  for (float v : y.value().data) mean += v;
  mean /= 3;
  for (float v : y.value().data) var += (v - mean) * (v - mean);
  var /= 3;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1.0) < 1e-3);
}

TEST_CASE("cross_entropy on uniform logits equals ln K") {
  GraphT<float> g;
  auto logits = g.leaf(Tensor::zeros({6, 4}));
  auto loss = cross_entropy(logits, {0, 1, 2, 3, 0, 1}, std::vector<uint8_t>(6, 1));
  CHECK(std::abs(loss.scalar() - std::log(4.0)) < 1e-5);
}

TEST_CASE("cross_entropy vanishes for confident correct logits") {
  GraphT<float> g;
  auto logits = g.leaf(tf({1, 2}, {60, 0}));
  auto loss = cross_entropy(logits, {0}, {1});
  CHECK(loss.scalar() >= 0.0f);
  CHECK(loss.scalar() < 1e-6);
}

TEST_CASE("cross_entropy hand-computed value") {
  GraphT<float> g;
  auto logits = g.leaf(tf({2, 2}, {2, 0, 0, 2}));
  auto loss = cross_entropy(logits, {0, 1}, {1, 1});
  // -ln(e^2/(e^2+1)) = ln(1+e^-2)
  CHECK(std::abs(loss.scalar() - std::log(1.0 + std::exp(-2.0))) < 1e-6);
}

TEST_CASE("cross_entropy is nonnegative on random inputs") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int t = 0; t < 50; ++t) {
    GraphT<float> g;
    auto logits = g.leaf(Tensor::randn({8, 4}, 2.0, rng));
    std::vector<int> labels(8);
    for (auto& l : labels) l = lab(rng);
    auto loss = cross_entropy(logits, labels, std::vector<uint8_t>(8, 1));
    CHECK(loss.scalar() >= 0.0f);
  }
}

TEST_CASE("cross_entropy rejects empty mask and bad labels") {
  GraphT<float> g;
  auto logits = g.leaf(Tensor::zeros({2, 4}));
  CHECK_THROWS_WITH_AS(cross_entropy(logits, {0, 1}, {0, 0}),
                       doctest::Contains("masked out"), Error);
  GraphT<float> g2;
  auto l2 = g2.leaf(Tensor::zeros({2, 4}));
  CHECK_THROWS_AS(cross_entropy(l2, {0, 7}, {1, 1}), Error);
}

TEST_CASE("masked rows contribute no loss and no gradient") {
  std::mt19937 rng(5);
  Tensor logits = Tensor::randn({4, 4}, 1.0, rng);
  std::vector<uint8_t> mask = {1, 0, 1, 0};

  auto run = [&](std::vector<int> labels) {
    GraphT<float> g;
    auto l = g.leaf(logits);
    auto loss = cross_entropy(l, labels, mask);
    float v = loss.scalar();
    g.backward(loss);
    return std::make_pair(v, g.grad(l.id));
  };
  auto [v1, g1] = run({0, 1, 2, 3});
  auto [v2, g2] = run({0, 3, 2, 0});  // masked labels perturbed
  CHECK(v1 == v2);                    // bitwise
  for (int64_t i = 0; i < g1.numel(); ++i) CHECK(g1.data[i] == g2.data[i]);
  for (int j = 0; j < 4; ++j) {
    CHECK(g1.at(1, j) == 0.0f);
    CHECK(g1.at(3, j) == 0.0f);
  }
}

TEST_CASE("cross_entropy gradient equals softmax minus one-hot over M") {
  std::mt19937 rng(9);
  Tensor logits = Tensor::randn({3, 4}, 1.5, rng);
  std::vector<int> labels = {2, 0, 3};
  GraphT<float> g;
  auto l = g.leaf(logits);
  auto loss = cross_entropy(l, labels, {1, 1, 1});
  g.backward(loss);
  GraphT<float> g2;
  auto p = softmax(g2.leaf(logits));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double expect = (p.value().at(i, j) - (labels[i] == j ? 1.0 : 0.0)) / 3.0;
      CHECK(std::abs(g.grad(l.id).at(i, j) - expect) < 1e-6);
    }
}

TEST_CASE("backward of a linear form gives the data vector") {
  GraphT<float> g;
  auto w = g.leaf(tf({2}, {1, 2}));
  auto x = g.leaf(tf({2}, {3, 4}));
  auto loss = sum(mul(w, x));
  g.backward(loss);
  CHECK(g.grad(w.id).data[0] == 3.0f);
  CHECK(g.grad(w.id).data[1] == 4.0f);
}

TEST_CASE("backward twice raises graph-consumed") {
  GraphT<float> g;
  auto x = g.leaf(tf({2}, {1, 2}));
  auto loss = sum(x);
  g.backward(loss);
  CHECK_THROWS_WITH_AS(g.backward(loss), doctest::Contains("consumed"), Error);
  CHECK_THROWS_AS(sum(x), Error);  // no new ops either
}

TEST_CASE("shape errors name the operation") {
  GraphT<float> g;
  auto a = g.leaf(Tensor::zeros({2, 3}));
  auto b = g.leaf(Tensor::zeros({2, 3}));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), Error);
  auto c = g.leaf(Tensor::zeros({4}));
  CHECK_THROWS_WITH_AS(add_row(a, c), doctest::Contains("add_row"), Error);
}

// --- finite differences against the double-precision reference -------------

TEST_CASE("finite differences: every op, 20+ random instances") {
  std::mt19937 rng(1234);
  const double tol = 1e-3;

  for (int inst = 0; inst < 20; ++inst) {
    // matmul
    {
      auto w = fd::randu({2, 5}, rng);
      double e = fd::max_rel_err(
          {fd::randu({2, 3}, rng), fd::randu({3, 5}, rng)},
          [&](GraphT<double>& g, std::vector<Val<double>>& v) {
            return sum(mul(matmul(v[0], v[1]), g.leaf(w)));
          });
      CHECK(e < tol);
    }
    // matmul_nt
    {
      auto w = fd::randu({2, 4}, rng);
      double e = fd::max_rel_err(
          {fd::randu({2, 3}, rng), fd::randu({4, 3}, rng)},
          [&](GraphT<double>& g, std::vector<Val<double>>& v) {
            return sum(mul(matmul_nt(v[0], v[1]), g.leaf(w)));
          });
      CHECK(e < tol);
    }
    // add / mul (elementwise)
    {
      auto w = fd::randu({3, 4}, rng);
      double e = fd::max_rel_err(
          {fd::randu({3, 4}, rng), fd::randu({3, 4}, rng)},
          [&](GraphT<double>& g, std::vector<Val<double>>& v) {
            return sum(mul(add(v[0], mul(v[0], v[1])), g.leaf(w)));
          });
      CHECK(e < tol);
    }
    // add_row / mul_row
    {
      auto w = fd::randu({4, 3}, rng);
      double e = fd::max_rel_err(
          {fd::randu({4, 3}, rng), fd::randu({3}, rng), fd::randu({3}, rng)},
          [&](GraphT<double>& g, std::vector<Val<double>>& v) {
            return sum(mul(add_row(mul_row(v[0], v[1]), v[2]), g.leaf(w)));
          });
      CHECK(e < tol);
    }
    // relu, inputs bounded away from the kink
    {
      auto w = fd::randu({4, 4}, rng);
      double e = fd::max_rel_err({fd::randu_away_from({4, 4}, rng, 0.05)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(relu(v[0]), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    // scale
    {
      double e = fd::max_rel_err({fd::randu({5}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(scale(v[0], -1.7));
                                 });
      CHECK(e < tol);
    }
    // embedding_lookup (gradient w.r.t. the table)
    {
      auto w = fd::randu({4, 3}, rng);
      std::vector<int> ids = {1, 0, 4, 1};
      double e = fd::max_rel_err({fd::randu({5, 3}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(embedding_lookup(v[0], ids), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    // layer_norm
    {
      auto w = fd::randu({3, 7}, rng);
      double e = fd::max_rel_err({fd::randu({3, 7}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(layer_norm(v[0]), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    // softmax over both axes
    for (int axis = 0; axis < 2; ++axis) {
      auto w = fd::randu({4, 5}, rng);
      double e = fd::max_rel_err({fd::randu({4, 5}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(softmax(v[0], axis), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    // concat along both axes + slices + reshape
    {
      auto w = fd::randu({5, 3}, rng);
      double e = fd::max_rel_err(
          {fd::randu({2, 3}, rng), fd::randu({3, 3}, rng)},
          [&](GraphT<double>& g, std::vector<Val<double>>& v) {
            return sum(mul(concat<double>({v[0], v[1]}, 0), g.leaf(w)));
          });
      CHECK(e < tol);
    }
    {
      auto w = fd::randu({2, 7}, rng);
      double e = fd::max_rel_err(
          {fd::randu({2, 3}, rng), fd::randu({2, 4}, rng)},
          [&](GraphT<double>& g, std::vector<Val<double>>& v) {
            return sum(mul(concat<double>({v[0], v[1]}, 1), g.leaf(w)));
          });
      CHECK(e < tol);
    }
    {
      auto w = fd::randu({3, 2}, rng);
      double e = fd::max_rel_err({fd::randu({3, 6}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(slice_cols(v[0], 2, 4), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    {
      auto w = fd::randu({2, 6}, rng);
      double e = fd::max_rel_err({fd::randu({5, 6}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(slice_rows(v[0], 1, 3), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    {
      auto w = fd::randu({6, 2}, rng);
      double e = fd::max_rel_err({fd::randu({3, 4}, rng)},
                                 [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                   return sum(mul(reshape(v[0], {6, 2}), g.leaf(w)));
                                 });
      CHECK(e < tol);
    }
    // cross_entropy, both reductions, with a masked row
    {
      std::vector<int> labels = {1, 0, 3, 2};
      std::vector<uint8_t> mask = {1, 1, 0, 1};
      for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
        double e = fd::max_rel_err({fd::randu({4, 4}, rng)},
                                   [&](GraphT<double>& g, std::vector<Val<double>>& v) {
                                     return cross_entropy(v[0], labels, mask, red);
                                   });
        CHECK(e < tol);
      }
    }
  }
}

// --- gradient flattening ----------------------------------------------------

TEST_CASE("flatten_gradients concatenates in registration order") {
  ParamSetT<float> ps;
  auto& a = ps.add("a", Tensor::zeros({2}));
  auto& b = ps.add("b", Tensor::zeros({2, 2}));
  a.grad = tf({2}, {1, 2});
  a.grad_valid = true;
  b.grad = tf({2, 2}, {3, 4, 5, 6});
  b.grad_valid = true;
  auto gv = ps.flatten_gradients();
  CHECK(gv.values == std::vector<float>{1, 2, 3, 4, 5, 6});
  CHECK((int64_t)gv.values.size() == ps.total_size());
}

TEST_CASE("flatten of zero gradients is the zero vector of full length") {
  ParamSetT<float> ps;
  ps.add("a", Tensor::zeros({3}));
  ps.add("b", Tensor::zeros({2, 2}));
  GraphT<float> g;
  auto a = g.param(ps.at(0));
  auto b = g.param(ps.at(1));
  auto loss = scale(sum(add(sum(a), sum(b))), 0.0);
  g.backward(loss);
  auto gv = ps.flatten_gradients();
  CHECK((int64_t)gv.values.size() == 7);
  for (float v : gv.values) CHECK(v == 0.0f);
}

TEST_CASE("unflatten(flatten(g)) round-trips") {
  std::mt19937 rng(21);
  ParamSetT<float> ps;
  ps.add("w", Tensor::randn({3, 4}, 1.0, rng));
  ps.add("b", Tensor::randn({4}, 1.0, rng));
  ps.at(0).grad = Tensor::randn({3, 4}, 1.0, rng);
  ps.at(0).grad_valid = true;
  ps.at(1).grad = Tensor::randn({4}, 1.0, rng);
  ps.at(1).grad_valid = true;
  auto gv = ps.flatten_gradients();
  auto back = ps.unflatten(gv);
  for (size_t i = 0; i < ps.count(); ++i)
    for (int64_t j = 0; j < back[i].numel(); ++j)
      CHECK(back[i].data[j] == ps.at(i).grad.data[j]);
}

TEST_CASE("flatten without backward raises incomplete-gradient") {
  ParamSetT<float> ps;
  ps.add("w", Tensor::zeros({2}));
  CHECK_THROWS_WITH_AS(ps.flatten_gradients(), doctest::Contains("no populated gradient"),
                       Error);
}

// --- Adam -------------------------------------------------------------------

TEST_CASE("adam with zero gradient on a fresh state leaves parameters unchanged") {
  ParamSetT<float> ps;
  auto& p = ps.add("w", tf({3}, {1, 2, 3}));
  p.grad_valid = true;  // grads stay zero
  AdamState st;
  st.lr = 0.1;
  adam_step(ps, st);
  CHECK(p.value.data == std::vector<float>{1, 2, 3});
  CHECK(st.step == 1);
}

TEST_CASE("first adam step moves each weight by about the learning rate") {
  ParamSetT<float> ps;
  auto& p = ps.add("w", Tensor::zeros({4}));
  p.grad = tf({4}, {0.3f, -2.0f, 5.0f, -0.01f});
  p.grad_valid = true;
  AdamState st;
  st.lr = 1e-2;
  adam_step(ps, st);
  for (int i = 0; i < 4; ++i) {
    double mag = std::abs(p.value.data[i]);
    CHECK(mag == doctest::Approx(st.lr).epsilon(1e-3));
    CHECK(std::signbit(p.value.data[i]) != std::signbit(p.grad.data[i]));
  }
}

TEST_CASE("adam rejects NaN gradients and names the parameter") {
  ParamSetT<float> ps;
  auto& p = ps.add("head_bias", Tensor::zeros({2}));
  p.grad.data[1] = std::nanf("");
  p.grad_valid = true;
  AdamState st;
  CHECK_THROWS_WITH_AS(adam_step(ps, st), doctest::Contains("head_bias"), Error);
}

TEST_CASE("identical seeds give bitwise-identical training trajectories") {
  auto run = [](uint32_t seed) {
    std::mt19937 rng(seed);
    ParamSetT<float> ps;
    ps.add("w", Tensor::randn({4, 4}, 0.5, rng));
    ps.add("b", Tensor::zeros({4}));
    AdamState st;
    st.lr = 1e-2;
    std::vector<float> losses;
    for (int step = 0; step < 10; ++step) {
      Tensor x = Tensor::randn({3, 4}, 1.0, rng);
      ps.zero_grad();
      GraphT<float> g;
      auto h = add_row(matmul(g.leaf(x), g.param(ps.at(0))), g.param(ps.at(1)));
      auto loss = cross_entropy(h, {0, 1, 2}, {1, 1, 1});
      losses.push_back(loss.scalar());
      g.backward(loss);
      clip_global_norm(ps, 1.0);
      adam_step(ps, st);
    }
    return std::make_pair(losses, ps.flatten_values());
  };
  auto [l1, p1] = run(99);
  auto [l2, p2] = run(99);
  CHECK(l1 == l2);
  CHECK(p1 == p2);
}

TEST_CASE("global-norm clipping rescales only oversized gradients") {
  ParamSetT<float> ps;
  auto& p = ps.add("w", Tensor::zeros({2}));
  p.grad = tf({2}, {3, 4});
  p.grad_valid = true;
  double norm = clip_global_norm(ps, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(p.grad.data[0] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(p.grad.data[1] == doctest::Approx(0.8).epsilon(1e-6));

  p.grad = tf({2}, {0.3f, 0.4f});
  norm = clip_global_norm(ps, 1.0);
  CHECK(norm == doctest::Approx(0.5));
  CHECK(p.grad.data[0] == 0.3f);  // untouched below the threshold
}
