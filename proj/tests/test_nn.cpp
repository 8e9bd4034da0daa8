#include <doctest.h>

#include "musedit/nn/modules.hpp"
#include "musedit/nn/optim.hpp"
#include "test_helpers.hpp"

using namespace musedit;
using nn::GradSink;
using nn::ParamStore;
using nn::Tape;
using nn::V;
using testutil::gradcheck_params;
using testutil::random_mat;

TEST_SUITE_BEGIN("nn");

namespace {

// builds a scalar loss from a parameterized graph and checks every param grad
void check_graph(const std::function<V(Tape&)>& build, ParamStore& ps, int samples,
                 double tol, uint64_t seed) {
  GradSink sink(ps);
  Tape t(ps, &sink);
  V loss = build(t);
  t.backward(loss);
  auto loss_fn = [&]() {
    Tape tf(ps, nullptr);
    return tf.value(build(tf))(0, 0);
  };
  auto stats = gradcheck_params(ps, sink, loss_fn, samples, seed);
  CHECK(stats.checked > 0);
  CHECK(stats.max_rel_err < tol);
}

}  // namespace

TEST_CASE("elementwise and reduction gradients") {
  Rng rng(1);
  ParamStore ps;
  const int a = ps.add("a", random_mat(4, 6, rng));
  const int b = ps.add("b", random_mat(4, 6, rng, 0.5));
  check_graph(
      [&](Tape& t) {
        V x = t.param(a);
        V y = t.param(b);
        V h = t.mul(t.silu(x), t.tanh_(y));
        h = t.add(h, t.square(t.sub(x, y)));
        h = t.add(h, t.softplus(t.scale(x, 0.3)));
        h = t.mul(h, t.exp_(t.scale(y, 0.1)));
        return t.mean(h);
      },
      ps, 40, 2e-6, 7);
}

TEST_CASE("matmul family and norms") {
  Rng rng(2);
  ParamStore ps;
  const int w = ps.add("w", random_mat(5, 3, rng));
  const int u = ps.add("u", random_mat(5, 4, rng));
  check_graph(
      [&](Tape& t) {
        V a = t.param(w);
        V b = t.param(u);
        V s = t.matmul_tn(a, b);         // 3 x 4
        V g = t.matmul_nt(b, s);         // 5 x 3
        V h = t.matmul(g, s);            // 5 x 4
        return t.mse(h, t.constant(Mat::Ones(5, 4)));
      },
      ps, 40, 2e-6, 8);
}

TEST_CASE("layer norm, softmax, logsumexp gradients") {
  Rng rng(3);
  ParamStore ps;
  const int x = ps.add("x", random_mat(6, 5, rng));
  const int g = ps.add("g", Mat::Ones(6, 1) + 0.1 * random_mat(6, 1, rng));
  const int be = ps.add("be", random_mat(6, 1, rng, 0.2));
  check_graph(
      [&](Tape& t) {
        V h = t.layer_norm(t.param(x), t.param(g), t.param(be));
        V sm = t.softmax_rows(h);
        V lse = t.row_logsumexp(t.mul(h, sm));
        V d = t.diag_as_col(t.matmul_nt(sm, sm));
        return t.add(t.mean(lse), t.mean(d));
      },
      ps, 50, 5e-6, 9);
}

TEST_CASE("conv1d and conv1d_transpose gradients") {
  Rng rng(4);
  ParamStore ps;
  const int x = ps.add("x", random_mat(3, 17, rng));
  const int w = ps.add("w", random_mat(5, 3 * 4, rng, 0.4));   // k=4
  const int b = ps.add("b", random_mat(5, 1, rng, 0.1));
  const int wt = ps.add("wt", random_mat(5, 2 * 4, rng, 0.4));  // cout=2, k=4
  const int bt = ps.add("bt", random_mat(2, 1, rng, 0.1));
  check_graph(
      [&](Tape& t) {
        V h = t.conv1d(t.param(x), t.param(w), t.param(b), 4, 2, 1);
        h = t.silu(h);
        V y = t.conv1d_transpose(h, t.param(wt), t.param(bt), 4, 2, 1);
        V p = t.avg_pool1d(y, 2, 2);
        return t.mean(t.square(p));
      },
      ps, 60, 2e-5, 10);
}

TEST_CASE("shape ops, gather, overlap_add gradients") {
  Rng rng(5);
  ParamStore ps;
  const int tb = ps.add("tb", random_mat(4, 9, rng));
  const int x = ps.add("x", random_mat(4, 10, rng));
  check_graph(
      [&](Tape& t) {
        V e = t.cols_from_table(t.param(tb), {1, 3, 3, 7});
        V part = t.slice_cols(t.param(x), 2, 4);
        V joined = t.concat_rows({e, part});
        V padded = t.pad_cols(t.slice_rows(joined, 0, 4), 1, 1);
        V c1 = t.slice_cols(padded, 0, 4);
        V c2 = t.slice_cols(padded, 2, 4);
        V fused = t.overlap_add({c1, c2}, {0, 2},
                                {{1.0, 1.0, 0.75, 0.25}, {0.25, 0.75, 1.0, 1.0}}, 6);
        V n = t.l2_normalize_col(t.slice_cols(fused, 1, 1));
        V bc = t.broadcast_col(n, 3);
        return t.sum(t.mul(bc, bc));
      },
      ps, 50, 3e-5, 11);
}

TEST_CASE("attention module gradient") {
  Rng rng(6);
  ParamStore ps;
  nn::Attention attn(ps, "at", 8, 6, 4, rng);
  const int q = ps.add("q", random_mat(8, 7, rng, 0.5));
  const int ctx = ps.add("ctx", random_mat(6, 5, rng, 0.5));
  std::vector<bool> mask{true, true, true, true, false};
  check_graph(
      [&](Tape& t) {
        V out = attn(t, t.param(q), t.param(ctx), &mask);
        return t.mean(t.square(out));
      },
      ps, 60, 2e-5, 12);
}

TEST_CASE("masked keys do not influence attention output") {
  Rng rng(7);
  ParamStore ps;
  nn::Attention attn(ps, "at", 8, 8, 4, rng);
  Mat q = random_mat(8, 5, rng);
  Mat ctx = random_mat(8, 6, rng);
  std::vector<bool> mask{true, true, true, true, false, false};
  Tape t1(ps, nullptr);
  Mat out1 = t1.value(attn(t1, t1.constant(q), t1.constant(ctx), &mask));
  ctx.col(4).setConstant(123.0);  // garbage in masked keys
  ctx.col(5).setConstant(-55.0);
  Tape t2(ps, nullptr);
  Mat out2 = t2.value(attn(t2, t2.constant(q), t2.constant(ctx), &mask));
  CHECK((out1 - out2).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("adam converges on a quadratic") {
  ParamStore ps;
  Rng rng(8);
  const int x = ps.add("x", random_mat(3, 2, rng));
  nn::Adam opt(ps, 0.05);
  GradSink sink(ps);
  const Mat target = random_mat(3, 2, rng);
  for (int i = 0; i < 400; ++i) {
    sink.zero();
    Tape t(ps, &sink);
    V loss = t.mse(t.param(x), t.constant(target));
    t.backward(loss);
    opt.step(sink);
  }
  CHECK((ps.value(x) - target).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("adam id subsets leave other parameters untouched") {
  ParamStore ps;
  Rng rng(9);
  const int a = ps.add("a", random_mat(2, 2, rng));
  const int b = ps.add("b", random_mat(2, 2, rng));
  const Mat b0 = ps.value(b);
  nn::Adam opt(ps, std::vector<int>{a}, 0.1);
  GradSink sink(ps);
  sink.grad(a).setConstant(1.0);
  sink.grad(b).setConstant(1.0);
  opt.step(sink);
  CHECK((ps.value(b) - b0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ps.value(a)).allFinite());
}

TEST_CASE("rng determinism and state round-trip") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.gaussian() == b.gaussian());
  const std::string state = a.save_state();
  std::vector<double> expect;
  for (int i = 0; i < 10; ++i) expect.push_back(a.uniform());
  Rng c(0);
  c.load_state(state);
  for (int i = 0; i < 10; ++i) CHECK(c.uniform() == expect[i]);
}

TEST_CASE("input gradients flow to tracked leaves") {
  ParamStore ps;
  Rng rng(10);
  Tape t(ps, nullptr);
  Mat x0 = random_mat(3, 4, rng);
  V x = t.input(x0);
  V loss = t.sum(t.square(x));
  t.backward(loss);
  CHECK((t.grad_of(x) - 2.0 * x0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_SUITE_END();
