// Finite-difference checks for every differentiable primitive and for a
// composed conv -> attention -> LSTM -> head toy network.

#include <gtest/gtest.h>

#include <random>

#include "introdrive/grad_check.hpp"
#include "introdrive/layers.hpp"
#include "introdrive/tensor.hpp"

using namespace introdrive;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = uni(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

constexpr double kEps = 1e-5;
constexpr double kPrimitiveTol = 1e-5;
constexpr double kComposedTol = 1e-4;

}  // namespace

TEST(GradCheck, QuadraticIsNearlyExact) {
  Tensor x = Tensor::from({1}, {3.0});
  auto f = [&](Tape* tape) { return square(tape, x); };
  Tape probe;
  probe.watch(x.set_requires_grad(true));
  Tensor y = f(&probe);
  probe.backward(y);
  EXPECT_DOUBLE_EQ(probe.grad(x)[0], 6.0);
  EXPECT_LT(grad_check(f, {&x}, kEps), 1e-8);
}

TEST(GradCheck, EpsOutOfRangeRejected) {
  Tensor x = Tensor::from({1}, {1.0});
  auto f = [&](Tape* tape) { return square(tape, x); };
  EXPECT_THROW(grad_check(f, {&x}, 1e-8), ContractError);
  EXPECT_THROW(grad_check(f, {&x}, 1e-2), ContractError);
}

TEST(GradCheck, NanParameterIsEvaluationError) {
  Tensor x = Tensor::from({2}, {1.0, std::nan("")});
  auto f = [&](Tape* tape) { return sum(tape, square(tape, x)); };
  EXPECT_THROW(grad_check(f, {&x}, kEps), EvalError);
}

TEST(GradPrimitives, ElementwiseAndReductions) {
  std::mt19937_64 rng(31);
  Tensor a = random_tensor({7}, rng);
  Tensor b = random_tensor({7}, rng);

  struct Case {
    const char* name;
    std::function<Tensor(Tape*)> f;
  };
  const std::vector<Case> cases = {
      {"add", [&](Tape* t) { return sum(t, add(t, a, b)); }},
      {"sub", [&](Tape* t) { return sum(t, sub(t, a, b)); }},
      {"mul", [&](Tape* t) { return sum(t, mul(t, a, b)); }},
      {"scale", [&](Tape* t) { return sum(t, scale(t, a, -2.5)); }},
      {"square", [&](Tape* t) { return sum(t, square(t, a)); }},
      {"relu", [&](Tape* t) { return sum(t, relu(t, a)); }},
      {"sigmoid", [&](Tape* t) { return sum(t, sigmoid(t, a)); }},
      {"tanh", [&](Tape* t) { return sum(t, tanh_op(t, a)); }},
      {"mean", [&](Tape* t) { return mean(t, mul(t, a, b)); }},
      {"slice", [&](Tape* t) { return sum(t, square(t, slice(t, a, 2, 4))); }},
      {"concat",
       [&](Tape* t) { return sum(t, square(t, concat(t, {a, b}))); }},
      {"pick", [&](Tape* t) { return pick(t, square(t, a), 3); }},
  };
  for (const auto& c : cases) {
    EXPECT_LT(grad_check(c.f, {&a, &b}, kEps), kPrimitiveTol) << c.name;
  }
}

TEST(GradPrimitives, SoftmaxFamily) {
  std::mt19937_64 rng(32);
  Tensor z = random_tensor({9}, rng, -2.0, 2.0);
  Tensor w = random_tensor({9}, rng);
  auto f_soft = [&](Tape* t) { return sum(t, mul(t, softmax(t, z), w)); };
  EXPECT_LT(grad_check(f_soft, {&z}, kEps), kPrimitiveTol);

  auto f_logsoft = [&](Tape* t) { return sum(t, mul(t, log_softmax(t, z), w)); };
  EXPECT_LT(grad_check(f_logsoft, {&z}, kEps), kPrimitiveTol);

  auto f_entropy = [&](Tape* t) { return entropy_op(t, softmax(t, z)); };
  EXPECT_LT(grad_check(f_entropy, {&z}, kEps), kPrimitiveTol);

  std::vector<double> p = {0.5, 0.2, 0.1, 0.05, 0.05, 0.025, 0.025, 0.04, 0.01};
  auto f_kl = [&](Tape* t) { return kl_const_p(t, p, softmax(t, z)); };
  EXPECT_LT(grad_check(f_kl, {&z}, kEps), kPrimitiveTol);
}

TEST(GradPrimitives, LinearAlgebra) {
  std::mt19937_64 rng(33);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tensor v = random_tensor({5}, rng);
  Tensor s = random_tensor({1}, rng);

  auto f_matmul = [&](Tape* t) { return sum(t, square(t, matmul(t, a, b))); };
  EXPECT_LT(grad_check(f_matmul, {&a, &b}, kEps), kPrimitiveTol);

  auto f_rowvec = [&](Tape* t) { return sum(t, square(t, add_rowvec(t, matmul(t, a, b), v))); };
  EXPECT_LT(grad_check(f_rowvec, {&a, &b, &v}, kEps), kPrimitiveTol);

  auto f_transpose = [&](Tape* t) { return sum(t, square(t, transpose2d(t, a))); };
  EXPECT_LT(grad_check(f_transpose, {&a}, kEps), kPrimitiveTol);

  auto f_bcast = [&](Tape* t) { return sum(t, square(t, add_scalar_bcast(t, v, s))); };
  EXPECT_LT(grad_check(f_bcast, {&v, &s}, kEps), kPrimitiveTol);

  Tensor table = random_tensor({6, 3}, rng);
  auto f_embed = [&](Tape* t) { return sum(t, square(t, embed_row(t, table, 4))); };
  EXPECT_LT(grad_check(f_embed, {&table}, kEps), kPrimitiveTol);
}

TEST(GradPrimitives, ConvolutionMatchesFiniteDifferences) {
  std::mt19937_64 rng(34);
  Tensor input = random_tensor({3, 5, 5}, rng);
  Tensor kernel = random_tensor({4, 3, 3, 3}, rng);
  Tensor bias = random_tensor({4}, rng);
  auto f = [&](Tape* t) {
    return sum(t, add_channel_bias(t, conv2d(t, input, kernel, 1, 1, 0, 0), bias));
  };
  EXPECT_LT(grad_check(f, {&input, &kernel, &bias}, kEps), kPrimitiveTol);

  // strided + padded variant
  auto f2 = [&](Tape* t) { return sum(t, square(t, conv2d(t, input, kernel, 2, 2, 1, 1))); };
  EXPECT_LT(grad_check(f2, {&input, &kernel}, kEps), kPrimitiveTol);
}

TEST(GradPrimitives, LstmStepAllWeights) {
  ParamStore ps;
  std::mt19937_64 rng(35);
  LstmCell cell(ps, "cell", 4, 5, rng);
  Tensor y = random_tensor({4}, rng);
  Tensor h0 = random_tensor({5}, rng, -0.5, 0.5);
  Tensor c0 = random_tensor({5}, rng, -0.5, 0.5);
  Tensor mixer = random_tensor({5}, rng);
  auto f = [&](Tape* t) {
    auto s1 = lstm_step(t, cell, y, h0, c0);
    auto s2 = lstm_step(t, cell, y, s1.h, s1.c);
    return sum(t, mul(t, s2.h, mixer));
  };
  EXPECT_LT(grad_check(f, {&cell.gates().weight(), &cell.gates().bias(), &y, &h0, &c0}, kEps),
            kPrimitiveTol);
}

// Composed toy network: conv -> spatial attention -> LSTM -> head, with an
// entropy term in the objective. All parameters checked at once.
TEST(GradComposed, ConvAttentionLstmHead) {
  std::mt19937_64 rng(36);
  ParamStore ps;
  Tensor input = random_tensor({2, 6, 8}, rng);
  Tensor kernel = random_tensor({3, 2, 3, 3}, rng, -0.4, 0.4);
  Tensor kbias = random_tensor({3}, rng, -0.1, 0.1);
  Tensor attn_w = random_tensor({3, 1}, rng);
  Tensor attn_b = random_tensor({1}, rng);
  LstmCell cell(ps, "cell", 3, 4, rng);
  Tensor head_w = random_tensor({7, 1}, rng);
  Tensor head_b = random_tensor({1}, rng);

  auto f = [&](Tape* t) {
    Tensor fm = relu(t, add_channel_bias(t, conv2d(t, input, kernel, 1, 1, 0, 0), kbias));
    const int d = fm.dim(0), l = fm.dim(1) * fm.dim(2);
    Tensor cube = transpose2d(t, reshape(t, fm, {d, l}));         // l x d
    Tensor scores = reshape(t, matmul(t, cube, attn_w), {l});     // affine score per region
    Tensor alpha = softmax(t, add_scalar_bcast(t, scores, attn_b));
    Tensor context = reshape(t, matmul(t, reshape(t, alpha, {1, l}), cube), {d});
    auto st = lstm_step(t, cell, context, Tensor::zeros({4}), Tensor::zeros({4}));
    Tensor joint = concat(t, {context, st.h});
    Tensor out = add_rowvec(t, matmul(t, reshape(t, joint, {1, 7}), head_w), head_b);
    return add(t, sum(t, square(t, out)), scale(t, entropy_op(t, alpha), 0.3));
  };

  std::vector<Tensor*> params = {&kernel, &kbias,  &attn_w,
                                 &attn_b, &head_w, &head_b,
                                 &cell.gates().weight(), &cell.gates().bias()};
  std::int64_t n_params = 0;
  for (auto* p : params) n_params += p->size();
  ASSERT_LE(n_params, 500);
  EXPECT_LT(grad_check(f, params, kEps), kComposedTol);
}
