#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fpdm/tensor/gradcheck.hpp"
#include "fpdm/tensor/ops.hpp"
#include "fpdm/tensor/random.hpp"
#include "fpdm/tensor/serialize.hpp"

using namespace fpdm;
namespace o = fpdm::ops;

namespace {

TensorF vec(std::vector<float> v) {
  const std::size_t n = v.size();
  return TensorF({n}, std::move(v));
}
TensorD vecd(std::vector<double> v) {
  const std::size_t n = v.size();
  return TensorD({n}, std::move(v));
}

// Weighted sum so every output coordinate reaches the loss with a distinct weight.
template <typename T>
Var<T> probe_loss(const Var<T>& y, std::uint64_t seed) {
  Rng rng(seed);
  return o::sum(o::mul(y, Var<T>::constant(randn<T>(y.shape(), rng))));
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(TensorF({2, 3}, std::vector<float>(5)), UsageError);
  EXPECT_THROW(TensorF(Shape{0}), UsageError);
  EXPECT_THROW(TensorF(Shape{}), UsageError);
  TensorF t({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
}

TEST(Eval, IdentityAndAffineNoGrad) {
  auto x = Var<float>::constant(vec({1, 2, 3}));
  EXPECT_EQ(x.value().vec(), (std::vector<float>{1, 2, 3}));
  auto y = o::add_scalar(o::scale(Var<float>::constant(vec({0})), 0.5), 1.0);
  EXPECT_FALSE(y.on_tape());
  EXPECT_EQ(y.value().item(), 1.0f);
}

TEST(Eval, SquareGradient) {
  Tape<float> tape;
  auto x = tape.variable(vec({3}));
  auto y = o::mul(x, x);
  EXPECT_EQ(y.value().item(), 9.0f);
  EXPECT_FLOAT_EQ(tape.backward_full(y).wrt(x).item(), 6.0f);
}

TEST(Eval, SoftmaxSymmetry) {
  Tape<float> tape;
  auto x = tape.variable(TensorF({1, 2}, 0.0f));
  auto s = o::softmax(x);
  EXPECT_FLOAT_EQ(s.value()[0], 0.5f);
  EXPECT_FLOAT_EQ(s.value()[1], 0.5f);
  auto g = tape.backward_full(o::sum(s)).wrt(x);
  EXPECT_NEAR(g[0], 0.0f, 1e-7);
  EXPECT_NEAR(g[1], 0.0f, 1e-7);
}

TEST(Backward, LinearParamGradient) {
  ParamStore<float> ps;
  ps.add("theta", vec({1, 2}));
  Tape<float> tape;
  Context<float> ctx(ps, &tape);
  auto loss = o::sum(o::mul(ctx.param("theta"), Var<float>::constant(vec({3, 4}))));
  auto g = tape.backward(loss);
  ASSERT_EQ(g.count("theta"), 1u);
  EXPECT_EQ(g.at("theta").vec(), (std::vector<float>{3, 4}));
}

TEST(Backward, LossMustBeOnTape) {
  Tape<float> tape;
  auto c = Var<float>::constant(vec({1}));
  EXPECT_THROW(tape.backward(c), UsageError);
  Tape<float> other;
  auto y = o::sum(other.variable(vec({1, 2})));
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(Backward, NonScalarLossRejected) {
  Tape<float> tape;
  auto x = tape.variable(vec({1, 2}));
  EXPECT_THROW(tape.backward(o::scale(x, 2.0)), UsageError);
}

TEST(Backward, NoGradIterationsDoNotChangeOneStepGradient) {
  // f(x) = W x + xt; three no-grad steps then one with-grad step.
  Rng rng(3);
  ParamStore<double> ps;
  ps.add("W", randn<double>({4, 4}, rng, 0.3));
  const TensorD xt = randn<double>({1, 4}, rng);
  auto step = [&](const Context<double>& ctx, const Var<double>& x) {
    return o::add(o::matmul(x, ctx.param("W")), Var<double>::constant(xt));
  };
  for (int n : {0, 3, 7}) {
    Context<double> ng(ps);
    Var<double> x = Var<double>::constant(TensorD({1, 4}, 0.0));
    for (int i = 0; i < n; ++i) x = step(ng, x);
    Tape<double> tape;
    auto ctx = ng.with_tape(&tape);
    auto out = step(ctx, x);
    const std::size_t nodes = tape.size();
    auto g = tape.backward(o::sum(out));
    // d sum(x W) / dW[i][j] = x[i]
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g.at("W")[i * 4 + j], x.value()[i], 1e-12);
    }
    EXPECT_EQ(nodes, 5u);  // leaf W, constant x, matmul, constant xt, add
  }
}

TEST(Backward, UntouchedParamsGetZeroEntryNoGradParamsNone) {
  ParamStore<float> ps;
  ps.add("a", vec({1}));
  ps.add("b", vec({2}));
  Context<float> ng(ps);
  auto pre = o::scale(ng.param("b"), 3.0);
  Tape<float> tape;
  auto ctx = ng.with_tape(&tape);
  auto loss = o::sum(o::mul(ctx.param("a"), pre));
  auto g = tape.backward(loss);
  EXPECT_EQ(g.count("a"), 1u);
  EXPECT_EQ(g.count("b"), 0u);
  EXPECT_FLOAT_EQ(g.at("a").item(), 6.0f);
}

TEST(Tape, ReplayMatchesAndNoGradRecordsNothing) {
  Rng rng(11);
  ParamStore<float> ps;
  ps.add("w", randn({8, 8}, rng));
  ps.add("b", randn({8}, rng));
  ps.add("g", randn({8}, rng));
  const TensorF x = randn({2, 3, 8}, rng);
  auto f = [&](const Context<float>& ctx) {
    auto h = o::layer_norm_affine(Var<float>::constant(x), ctx.param("g"), ctx.param("b"));
    auto y = o::gelu(o::linear(h, ctx.param("w"), ctx.param("b")));
    return o::attention(y, o::silu(y), y, 2);
  };
  Tape<float> tape;
  auto with = f(Context<float>(ps, &tape));
  auto without = f(Context<float>(ps));
  EXPECT_TRUE(bit_equal(with.value(), without.value()));
  EXPECT_TRUE(tape.replay_matches());
  const std::size_t n = tape.size();
  for (int i = 0; i < 10; ++i) f(Context<float>(ps));
  EXPECT_EQ(tape.size(), n);
}

TEST(Tape, MixingTapesIsAnError) {
  Tape<float> a, b;
  auto x = a.variable(vec({1}));
  auto y = b.variable(vec({1}));
  EXPECT_THROW(o::add(x, y), UsageError);
}

TEST(Numeric, NonFiniteNamesPrimitive) {
  auto x = Var<float>::constant(vec({1e30f}));
  try {
    o::mul(x, x);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("mul"), std::string::npos);
  }
}

TEST(Broadcast, AddGradientSumsOverBroadcastAxes) {
  Tape<double> tape;
  auto a = tape.variable(TensorD({2, 3}, 1.0));
  auto b = tape.variable(TensorD({3}, 2.0));
  auto full = tape.backward_full(o::sum(o::add(a, b)));
  const TensorD gb = full.wrt(b), ga = full.wrt(a);
  for (double v : gb.vec()) EXPECT_DOUBLE_EQ(v, 2.0);
  for (double v : ga.vec()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(GradCheck, SquareAtOne) {
  FdOptions opt;
  opt.h = 1e-4;
  auto r = finite_difference_check<double>([](const Var<double>& x) { return o::sum(o::mul(x, x)); },
                                           vecd({1.0}), opt);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(GradCheck, LayerNormThenLinear) {
  Rng rng(5);
  ParamStore<float> ps;
  ps.add("w", randn({6, 4}, rng, 0.5));
  ps.add("b", randn({4}, rng, 0.1));
  ps.add("gain", rand_uniform({6}, rng, 0.5, 1.5));
  ps.add("bias", randn({6}, rng, 0.1));
  const TensorD x = randn<double>({3, 6}, rng);
  auto f = [&](const auto& ctx) {
    using T = typename std::decay_t<decltype(ctx)>::value_type;
    auto h = o::layer_norm_affine(Var<T>::constant(x.cast<T>()), ctx.param("gain"), ctx.param("bias"));
    return probe_loss(o::linear(h, ctx.param("w"), ctx.param("b")), 9);
  };
  EXPECT_LT(finite_difference_check_f64_reference(f, ps).max_rel_err, 1e-3);
}

TEST(GradCheck, CorruptedRuleIsDetected) {
  auto bad = std::make_shared<CustomOp<double>>();
  bad->name = "bad_square";
  bad->forward = [](const TensorD& x) {
    TensorD y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] * x[i];
    return y;
  };
  bad->vjp = [](const TensorD& x, const TensorD&, const TensorD& g) {
    TensorD out = g;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g[i] * x[i];  // should be 2x
    return out;
  };
  auto r = finite_difference_check<double>(
      [&](const Var<double>& x) { return o::sum(o::custom<double>(x, bad)); }, vecd({0.7, -1.3, 2.0}));
  EXPECT_GT(r.max_rel_err, 0.1);
}

TEST(GradCheck, RandomMlpMatchesFiniteDifferences) {
  Rng rng(21);
  ParamStore<float> ps;
  ps.add("w1", randn({5, 16}, rng, 0.5));
  ps.add("b1", randn({16}, rng, 0.1));
  ps.add("w2", randn({16, 3}, rng, 0.5));
  ps.add("b2", randn({3}, rng, 0.1));
  const TensorD x = randn<double>({4, 5}, rng);
  auto f = [&](const auto& ctx) {
    using T = typename std::decay_t<decltype(ctx)>::value_type;
    auto h = o::gelu(o::linear(Var<T>::constant(x.cast<T>()), ctx.param("w1"), ctx.param("b1")));
    return probe_loss(o::linear(h, ctx.param("w2"), ctx.param("b2")), 2);
  };
  EXPECT_LT(finite_difference_check_f64_reference(f, ps).max_rel_err, 1e-3);
}

TEST(GradCheck, Float64ModeIsTight) {
  Rng rng(21);
  ParamStore<double> ps;
  ps.add("w1", randn<double>({5, 16}, rng, 0.5));
  ps.add("b1", randn<double>({16}, rng, 0.1));
  const TensorD x = randn<double>({4, 5}, rng);
  ParamFn<double> f = [&](const Context<double>& ctx) {
    return probe_loss(o::silu(o::linear(Var<double>::constant(x), ctx.param("w1"), ctx.param("b1"))), 4);
  };
  FdOptions opt;
  opt.h = 1e-5;
  EXPECT_LT(finite_difference_check<double>(f, ps, opt).max_rel_err, 1e-7);
}

TEST(Serialize, PayloadRoundTripIsByteExact) {
  Rng rng(1);
  NamedTensors ts{{"a", randn({2, 3}, rng)}, {"block.w", randn({7}, rng)}};
  std::stringstream s1;
  write_payload(s1, ts);
  const std::string bytes = s1.str();
  EXPECT_EQ(bytes.substr(0, 4), "FPDM");
  auto back = read_payload(s1);
  std::stringstream s2;
  write_payload(s2, back);
  EXPECT_EQ(s2.str(), bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(bit_equal(back[1].second, ts[1].second));
}

TEST(Serialize, RejectsGarbage) {
  std::stringstream s("XXXX");
  EXPECT_THROW(read_payload(s), UsageError);
}

TEST(ParamStore, NamesUniqueShapesFixed) {
  ParamStore<float> ps;
  ps.add("a", vec({1, 2}));
  EXPECT_THROW(ps.add("a", vec({1})), UsageError);
  EXPECT_THROW(ps.set("a", vec({1})), UsageError);
  ps.set("a", vec({3, 4}));
  EXPECT_EQ(ps.get("a")[1], 4.0f);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore<float> ps;
  ps.add("p", vec({1.0f, -1.0f}));
  GradMap<float> g{{"p", vec({0.5f, -2.0f})}};
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(ps, g, cfg, 1);
  EXPECT_NEAR(ps.get("p")[0], 0.9f, 1e-6);
  EXPECT_NEAR(ps.get("p")[1], -0.9f, 1e-6);
  EXPECT_EQ(ps.moments().size(), 2u);
}

TEST(Merge, GradientsSumByName) {
  GradMap<float> a{{"x", vec({1, 2})}}, b{{"x", vec({3, 4})}, {"y", vec({1})}};
  auto m = merge_gradients<float>({a, b});
  EXPECT_EQ(m.at("x").vec(), (std::vector<float>{4, 6}));
  EXPECT_EQ(m.at("y").item(), 1.0f);
}
