#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "congen/autograd.hpp"
#include "congen/params.hpp"
#include "gradcheck.hpp"

using namespace congen;
using D = double;

namespace {

Mat<D> random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat<D> m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("sum of a parameter tensor has all-ones gradient") {
  ParamStore<D> ps;
  auto& p = ps.add("w", 3, 4, Init::Zero);
  Rng rng(1);
  p.value = random_mat(3, 4, rng);
  Tape<D> t;
  Var<D> loss = sum_all(t.param(p));
  t.backward(loss);
  CHECK(p.grad.isApproxToConstant(1.0, 1e-12));
}

TEST_CASE("unreached parameters keep exact zero gradients") {
  ParamStore<D> ps;
  auto& used = ps.add("used", 2, 2, Init::Zero);
  auto& unused = ps.add("unused", 2, 2, Init::Zero);
  Rng rng(2);
  used.value = random_mat(2, 2, rng);
  unused.value = random_mat(2, 2, rng);
  Tape<D> t;
  t.param(unused);  // bound but not on the loss path
  Var<D> loss = sum_all(mul(t.param(used), t.param(used)));
  t.backward(loss);
  CHECK(unused.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(used.grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("detached values get zero gradient") {
  ParamStore<D> ps;
  auto& p = ps.add("w", 2, 3, Init::Zero);
  Rng rng(3);
  p.value = random_mat(2, 3, rng);
  Tape<D> t;
  Var<D> x = t.param(p);
  Var<D> loss = sum_all(mul(detach(x), x));
  t.backward(loss);
  // only the non-detached factor contributes: dL/dx = detach(x).value
  CHECK((p.grad - p.value).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parent index outside the recorded graph aborts") {
  Tape<D> t;
  CHECK_THROWS(t.make(Mat<D>::Zero(1, 1), {5}, nullptr, true));
}

TEST_CASE("softmax rows sum to one and are nonnegative") {
  Rng rng(4);
  Tape<D> t;
  Var<D> x = t.leaf(random_mat(5, 7, rng, 3.0));
  Var<D> y = softmax_rows(x);
  for (int r = 0; r < 5; ++r) {
    CHECK(y.value().row(r).minCoeff() >= 0.0);
    CHECK(std::abs(y.value().row(r).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("elementwise and matmul ops pass finite-difference checks") {
  ParamStore<D> ps;
  auto& a = ps.add("a", 3, 4, Init::Zero);
  auto& b = ps.add("b", 4, 2, Init::Zero);
  auto& c = ps.add("c", 3, 2, Init::Zero);
  auto& bias = ps.add("bias", 1, 2, Init::Zero);
  Rng rng(5);
  a.value = random_mat(3, 4, rng);
  b.value = random_mat(4, 2, rng);
  c.value = random_mat(3, 2, rng);
  bias.value = random_mat(1, 2, rng);

  auto build = [&](Tape<D>& t) {
    Var<D> prod = matmul(t.param(a), t.param(b));
    Var<D> mixed = mul(prod, sigmoid(t.param(c)));
    Var<D> biased = add_rowvec(mixed, t.param(bias));
    Var<D> nl = tanh_fn(add(biased, relu(t.param(c))));
    return mean_all(mul(nl, nl));
  };
  const auto res = testing::check_gradients(ps, build);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("softmax, log-softmax, slicing and concat pass finite differences") {
  ParamStore<D> ps;
  auto& a = ps.add("a", 4, 6, Init::Zero);
  Rng rng(6);
  a.value = random_mat(4, 6, rng, 2.0);

  auto build = [&](Tape<D>& t) {
    Var<D> x = t.param(a);
    Var<D> sm = softmax_rows(slice_cols(x, 0, 3));
    Var<D> lsm = log_softmax_rows(slice_cols(x, 3, 3));
    Var<D> joined = concat_cols<D>({sm, lsm});
    Var<D> head = slice_rows(joined, 1, 2);
    Var<D> stacked = concat_rows<D>({head, scale(head, 0.5)});
    return mean_all(mul(stacked, stacked));
  };
  const auto res = testing::check_gradients(ps, build);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("layer norm passes finite differences") {
  ParamStore<D> ps;
  auto& x = ps.add("x", 3, 8, Init::Zero);
  auto& g = ps.add("g", 1, 8, Init::One);
  auto& b = ps.add("b", 1, 8, Init::Zero);
  Rng rng(7);
  x.value = random_mat(3, 8, rng, 2.0);
  g.value = random_mat(1, 8, rng).array() + 1.5;
  b.value = random_mat(1, 8, rng);

  auto build = [&](Tape<D>& t) {
    Var<D> y = layer_norm_rows(t.param(x), t.param(g), t.param(b));
    return mean_all(mul(y, tanh_fn(y)));
  };
  const auto res = testing::check_gradients(ps, build);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("gather, pick and div_by pass finite differences") {
  ParamStore<D> ps;
  auto& table = ps.add("table", 6, 4, Init::Zero);
  Rng rng(8);
  table.value = random_mat(6, 4, rng);

  auto build = [&](Tape<D>& t) {
    Var<D> rows = gather_rows(t.param(table), {0, 3, 3, 5});
    Var<D> num = pick(mul(rows, rows), 1, 2);
    Var<D> den = affine(sum_all(sigmoid(rows)), 1.0, 0.5);
    Var<D> logp = log_elem(sigmoid(pick(rows, 2, 1)));
    return add(div_by(num, den), scale(logp, -0.25));
  };
  const auto res = testing::check_gradients(ps, build);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel < 1e-4);
}

TEST_CASE("repeated bindings of one parameter accumulate into one gradient") {
  ParamStore<D> ps;
  auto& w = ps.add("w", 2, 2, Init::Zero);
  Rng rng(9);
  w.value = random_mat(2, 2, rng);
  auto build = [&](Tape<D>& t) {
    Var<D> a = t.param(w);
    Var<D> b = t.param(w);  // same node
    return sum_all(matmul(a, b));
  };
  const auto res = testing::check_gradients(ps, build);
  CHECK(res.max_rel < 1e-4);
}
