#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "agpo/gradcheck.hpp"
#include "agpo/graph.hpp"
#include "agpo/rng.hpp"

using namespace agpo;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.data) x = rng.uniform_range(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("forward: hand-evaluated examples") {
  Graph g;
  Node x = g.leaf("x", {3}, true);
  g.set_root(g.sum(x));
  Tensor xv({3}, {1, 2, 3});
  Bindings b(g);
  b.set("x", xv);
  CHECK(g.forward(b).value() == 6.0);

  Graph g2;
  Node y = g2.leaf("y", {1}, true);
  g2.set_root(g2.log(g2.exp(y)));
  Tensor yv = Tensor::scalar(0.5);
  Bindings b2(g2);
  b2.set("y", yv);
  CHECK(g2.forward(b2).value() == doctest::Approx(0.5).epsilon(1e-15));

  Graph g3;
  Node z = g3.leaf("z", {3}, true);
  g3.set_root(g3.mean(g3.clip(z, 0.8, 1.2)));
  Tensor zv({3}, {0.5, 1.0, 1.5});
  Bindings b3(g3);
  b3.set("z", zv);
  CHECK(g3.forward(b3).value() == 1.0);  // mean(0.8, 1.0, 1.2)
}

TEST_CASE("forward: deterministic for fixed inputs") {
  Graph g;
  Node x = g.leaf("x", {4}, true);
  g.set_root(g.sum(g.exp(g.tanh(x))));
  Rng rng(7);
  Tensor xv = random_tensor({4}, rng);
  Bindings b(g);
  b.set("x", xv);
  CHECK(g.forward(b).value() == g.forward(b).value());
}

TEST_CASE("gradient: analytic examples") {
  // d/dx sum(x^2) at [1,2] -> [2,4]
  Graph g;
  Node x = g.leaf("x", {2}, true);
  g.set_root(g.sum(g.mul(x, x)));
  Tensor xv({2}, {1, 2});
  Bindings b(g);
  b.set("x", xv);
  EvalResult r = g.gradient(b);
  CHECK(r.grads[0].data[0] == 2.0);
  CHECK(r.grads[0].data[1] == 4.0);
}

TEST_CASE("gradient: max(0,-x) subgradient convention") {
  auto grad_at = [](double x0) {
    Graph g;
    Node x = g.leaf("x", {1}, true);
    g.set_root(g.max_with(g.neg(x), 0.0));
    Tensor xv = Tensor::scalar(x0);
    Bindings b(g);
    b.set("x", xv);
    return g.gradient(b).grads[0].data[0];
  };
  CHECK(grad_at(0.5) == 0.0);    // clipped region
  CHECK(grad_at(-0.5) == -1.0);  // active region
  CHECK(grad_at(0.0) == -1.0);   // boundary treated as interior
}

TEST_CASE("gradient: clip boundary treated as interior") {
  auto grad_at = [](double x0) {
    Graph g;
    Node x = g.leaf("x", {1}, true);
    g.set_root(g.sum(g.clip(x, 0.0, 1.0)));
    Tensor xv = Tensor::scalar(x0);
    Bindings b(g);
    b.set("x", xv);
    return g.gradient(b).grads[0].data[0];
  };
  CHECK(grad_at(0.5) == 1.0);
  CHECK(grad_at(-0.2) == 0.0);
  CHECK(grad_at(1.3) == 0.0);
  CHECK(grad_at(0.0) == 1.0);
  CHECK(grad_at(1.0) == 1.0);
}

TEST_CASE("gradient: stop_grad blocks exactly") {
  Graph g;
  Node x = g.leaf("x", {3}, true);
  Node y = g.leaf("y", {3}, true);
  g.set_root(g.sum(g.mul(x, g.stop_grad(y))));
  Rng rng(11);
  Tensor xv = random_tensor({3}, rng);
  Tensor yv = random_tensor({3}, rng);
  Bindings b(g);
  b.set("x", xv);
  b.set("y", yv);
  EvalResult r = g.gradient(b);
  for (int k = 0; k < 3; ++k) {
    CHECK(r.grads[0].data[k] == yv.data[k]);
    CHECK(r.grads[1].data[k] == 0.0);  // exactly zero
  }
}

TEST_CASE("gradient: matmul against hand-computed values") {
  // f = sum(A @ B), dA[i,k] = sum_j B[k,j], dB[k,j] = sum_i A[i,k]
  Graph g;
  Node A = g.leaf("A", {2, 3}, true);
  Node B = g.leaf("B", {3, 2}, true);
  g.set_root(g.sum(g.matmul(A, B)));
  Tensor Av({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor Bv({3, 2}, {1, -1, 2, -2, 3, -3});
  Bindings b(g);
  b.set("A", Av);
  b.set("B", Bv);
  EvalResult r = g.gradient(b);
  // row sums of B: [0, 0, 0]; dA should be all zeros (B rows sum to 0)
  for (int k = 0; k < 6; ++k) CHECK(r.grads[0].data[k] == 0.0);
  // column sums of A: [5, 7, 9] broadcast over B's columns
  CHECK(r.grads[1].data[0] == 5.0);
  CHECK(r.grads[1].data[1] == 5.0);
  CHECK(r.grads[1].data[2] == 7.0);
  CHECK(r.grads[1].data[3] == 7.0);
  CHECK(r.grads[1].data[4] == 9.0);
  CHECK(r.grads[1].data[5] == 9.0);
}

TEST_CASE("gather: rows, elements, and single-row matrices") {
  Graph g;
  Node m = g.leaf("m", {3, 2}, true);
  Node rows = g.gather(m, {2, 0});
  CHECK(g.node_shape(rows) == std::vector<int>{2, 2});
  g.set_root(g.sum(g.mul(rows, rows)));
  Tensor mv({3, 2}, {1, 2, 3, 4, 5, 6});
  Bindings b(g);
  b.set("m", mv);
  CHECK(g.forward(b).value() == 25 + 36 + 1 + 4);
  EvalResult r = g.gradient(b);
  CHECK(r.grads[0].data[0] == 2.0);   // row 0 gathered once
  CHECK(r.grads[0].data[2] == 0.0);   // row 1 never gathered
  CHECK(r.grads[0].data[4] == 10.0);  // row 2

  Graph g2;
  Node v = g2.leaf("v", {4}, true);
  Node el = g2.gather(v, {3, 3, 1});
  CHECK(g2.node_shape(el) == std::vector<int>{3});
  g2.set_root(g2.sum(el));
  Tensor vv({4}, {10, 20, 30, 40});
  Bindings b2(g2);
  b2.set("v", vv);
  CHECK(g2.forward(b2).value() == 100.0);
  EvalResult r2 = g2.gradient(b2);
  CHECK(r2.grads[0].data[3] == 2.0);  // duplicated index accumulates
  CHECK(r2.grads[0].data[1] == 1.0);
  CHECK(r2.grads[0].data[0] == 0.0);

  Graph g3;
  Node rowvec = g3.leaf("r", {1, 4}, true);
  Node picked = g3.gather(rowvec, {2});
  CHECK(g3.node_shape(picked) == std::vector<int>{1});
  g3.set_root(g3.sum(picked));
  Tensor rv({1, 4}, {5, 6, 7, 8});
  Bindings b3(g3);
  b3.set("r", rv);
  CHECK(g3.forward(b3).value() == 7.0);
}

TEST_CASE("errors: rejected with the offending construct identified") {
  Graph g;
  Node a = g.leaf("a", {2}, true);
  Node c = g.leaf("c", {3}, true);
  CHECK_THROWS_AS(g.add(a, c), std::invalid_argument);
  CHECK_THROWS_AS(g.matmul(a, c), std::invalid_argument);  // rank-1 operands

  // log of non-positive value rejected at evaluation
  Graph g2;
  Node x = g2.leaf("x", {1}, true);
  g2.set_root(g2.log(x));
  Tensor bad = Tensor::scalar(-1.0);
  Bindings b(g2);
  b.set("x", bad);
  CHECK_THROWS_AS(g2.forward(b), std::domain_error);

  // non-scalar root rejected by gradient
  Graph g3;
  Node y = g3.leaf("y", {2}, true);
  g3.set_root(g3.mul(y, y));
  Tensor yv({2}, {1, 2});
  Bindings b3(g3);
  b3.set("y", yv);
  CHECK_THROWS_AS(g3.gradient(b3), std::invalid_argument);
}

TEST_CASE("check_gradient: finite-difference oracle on sum(x^2)") {
  Rng rng(123);
  for (int rep = 0; rep < 5; ++rep) {
    Graph g;
    Node x = g.leaf("x", {6}, true);
    g.set_root(g.sum(g.mul(x, x)));
    Tensor xv = random_tensor({6}, rng);
    Bindings b(g);
    b.set("x", xv);
    GradCheckReport rep_out = check_gradient(g, b, 1e-5, 1e-4);
    CHECK(rep_out.pass);
    CHECK(rep_out.components_checked == 6);
  }
}

TEST_CASE("check_gradient: constant graph yields empty passing report") {
  Graph g;
  Node c = g.leaf("c", {2}, false);
  g.set_root(g.sum(c));
  Tensor cv({2}, {1, 2});
  Bindings b(g);
  b.set("c", cv);
  GradCheckReport rep = check_gradient(g, b, 1e-5, 1e-4);
  CHECK(rep.pass);
  CHECK(rep.components_checked == 0);
}

TEST_CASE("check_gradient: negative control catches a wrong rule") {
  Graph g;
  Node x = g.leaf("x", {3}, true);
  g.set_root(g.sum(g.mul(x, x)));
  Tensor xv({3}, {0.3, -0.4, 0.9});
  Bindings b(g);
  b.set("x", xv);
  EvalResult r = g.gradient(b);
  std::vector<Tensor> tampered = r.grads;
  tampered[0].data[1] += 0.5;  // simulate a broken backward rule
  GradCheckReport rep = check_gradient(g, b, 1e-5, 1e-3, &tampered);
  CHECK_FALSE(rep.pass);
  REQUIRE(!rep.failures.empty());
  CHECK(rep.failures[0].component == 1);
}

namespace {

// Random expression over a couple of rank-1 leaves, using the elementwise
// op set plus reductions. Log arguments are kept positive by construction
// (exp(x) + 0.5). stop_grad is excluded: it redefines the gradient away
// from the true derivative, so the finite-difference oracle does not apply
// to it (its contract is tested exactly elsewhere).
Node random_expr(Graph& g, std::vector<Node>& leaves, Rng& rng, int depth) {
  if (depth <= 0) return leaves[rng.uniform_int(static_cast<int>(leaves.size()))];
  switch (rng.uniform_int(9)) {
    case 0: return g.add(random_expr(g, leaves, rng, depth - 1),
                         random_expr(g, leaves, rng, depth - 1));
    case 1: return g.mul(random_expr(g, leaves, rng, depth - 1),
                         random_expr(g, leaves, rng, depth - 1));
    case 2: return g.add(random_expr(g, leaves, rng, depth - 1),
                         rng.uniform_range(-1, 1));
    case 3: return g.mul(random_expr(g, leaves, rng, depth - 1),
                         rng.uniform_range(-2, 2));
    case 4: return g.exp(g.mul(random_expr(g, leaves, rng, depth - 1), 0.5));
    case 5: return g.log(g.add(g.exp(random_expr(g, leaves, rng, depth - 1)), 0.5));
    case 6: return g.tanh(random_expr(g, leaves, rng, depth - 1));
    case 7: return g.clip(random_expr(g, leaves, rng, depth - 1), -0.8, 0.8);
    default: return g.max_with(random_expr(g, leaves, rng, depth - 1), 0.1);
  }
}

}  // namespace

TEST_CASE("property: random graphs match finite differences away from kinks") {
  Rng rng(20240915);
  int checked_instances = 0;
  for (int inst = 0; inst < 80; ++inst) {
    Graph g;
    std::vector<Node> leaves = {g.leaf("x", {4}, true), g.leaf("y", {4}, true)};
    g.set_root(g.mean(random_expr(g, leaves, rng, 4)));
    Tensor xv = random_tensor({4}, rng);
    Tensor yv = random_tensor({4}, rng);
    Bindings b(g);
    b.set("x", xv);
    b.set("y", yv);

    Workspace ws;
    g.forward(ws, b);
    // fd is invalid near kinks; the margin covers the leaf step (1e-5)
    // amplified through chained scalings of the generated expression
    if (g.min_kink_distance(ws) < 1e-3) continue;

    GradCheckReport rep = check_gradient(g, b, 1e-5, 1e-3);
    INFO("instance ", inst, " max_rel_err=", rep.max_rel_err);
    CHECK(rep.pass);
    ++checked_instances;
  }
  CHECK(checked_instances >= 40);
}

TEST_CASE("property: gradient is additive over shared leaves") {
  Rng rng(42);
  for (int inst = 0; inst < 20; ++inst) {
    Graph g;
    std::vector<Node> leaves = {g.leaf("x", {4}, true), g.leaf("y", {4}, true)};
    Node f = g.mean(random_expr(g, leaves, rng, 3));
    Node h = g.mean(random_expr(g, leaves, rng, 3));
    Node both = g.add(f, h);
    Tensor xv = random_tensor({4}, rng);
    Tensor yv = random_tensor({4}, rng);
    Bindings b(g);
    b.set("x", xv);
    b.set("y", yv);

    g.set_root(f);
    EvalResult rf = g.gradient(b);
    g.set_root(h);
    EvalResult rh = g.gradient(b);
    g.set_root(both);
    EvalResult rb = g.gradient(b);
    for (int li = 0; li < 2; ++li)
      for (int k = 0; k < 4; ++k)
        CHECK(std::abs(rb.grads[li].data[k] -
                       (rf.grads[li].data[k] + rh.grads[li].data[k])) <= 1e-12);
  }
}
