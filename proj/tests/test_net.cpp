#include <gtest/gtest.h>

#include <cmath>

#include "fpdm/net/network.hpp"

using namespace fpdm;
using namespace fpdm::net;
namespace o = fpdm::ops;

namespace {

NetworkConfig small_points() {
  NetworkConfig c;
  c.width = 32;
  c.heads = 4;
  c.freq_dim = 32;
  c.n_classes = 3;
  return c;
}

NetworkConfig small_images() {
  NetworkConfig c = small_points();
  c.input = InputKind::kImage;
  c.image_size = 8;
  c.patch = 2;
  return c;
}

// Every parameter nudged off its initial value so gated paths are live.
ParamStore<float> live_params(const Network<float>& net, std::uint64_t seed) {
  ParamStore<float> ps = net.init(seed);
  Rng rng(seed + 100);
  for (const auto& n : ps.names()) {
    TensorF t = ps.get(n);
    const TensorF d = randn<float>(t.shape(), rng, 0.05);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] += d[i];
    ps.set(n, std::move(t));
  }
  return ps;
}

void set_identity_injection(ParamStore<float>& ps, std::size_t w) {
  TensorF eye({w, w});
  for (std::size_t i = 0; i < w; ++i) eye[i * w + i] = 1.0f;
  ps.set("fp.inject.w", eye);
  ps.set("fp.inject.b", TensorF({w}));
}

TensorF points(std::size_t b, std::uint64_t seed) {
  Rng rng(seed);
  return randn<float>({b, 2}, rng);
}

}  // namespace

TEST(Config, WidthMustDivideHeads) {
  NetworkConfig c = small_points();
  c.heads = 5;
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_THROW(Network<float>{c}, UsageError);
}

TEST(Config, UntestedDepthsAreFlagged) {
  NetworkConfig c = small_points();
  c.n_pre = 3;
  EXPECT_EQ(c.warnings().size(), 1u);
  c.n_pre = 4;
  EXPECT_TRUE(c.warnings().empty());
}

TEST(Conditioning, TimestepZeroFeatures) {
  const TensorF f = timestep_features<float>({0}, 16);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(f[i], 1.0f);
    EXPECT_EQ(f[8 + i], 0.0f);
  }
}

TEST(Conditioning, DeterministicAndRangeChecked) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = net.init(1);
  const Context<float> ctx(ps);
  const TensorF a = net.embed_conditioning(ctx, {5, 5}, {1, kNullClass}).value();
  const TensorF b = net.embed_conditioning(ctx, {5, 5}, {1, kNullClass}).value();
  EXPECT_TRUE(bit_equal(a, b));
  EXPECT_THROW(net.embed_conditioning(ctx, {1000}, {0}), UsageError);
  EXPECT_THROW(net.embed_conditioning(ctx, {-1}, {0}), UsageError);
  EXPECT_THROW(net.embed_conditioning(ctx, {0}, {3}), UsageError);
}

TEST(Conditioning, ClassRowsStartEqual) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = net.init(1);
  const Context<float> ctx(ps);
  const TensorF e = net.embed_conditioning(ctx, {7, 7}, {0, 2}).value();
  const std::size_t w = 32;
  for (std::size_t i = 0; i < w; ++i) EXPECT_EQ(e[i], e[w + i]);
}

TEST(Conditioning, NullClassIsItsOwnRow) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = live_params(net, 1);
  const Context<float> ctx(ps);
  const TensorF e = net.embed_conditioning(ctx, {7, 7, 7, 7}, {0, 1, 2, kNullClass}).value();
  const std::size_t w = 32;
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      double d = 0;
      for (std::size_t i = 0; i < w; ++i) d += std::abs(e[a * w + i] - e[b * w + i]);
      EXPECT_GT(d, 0.0) << a << " vs " << b;
    }
  }
  EXPECT_EQ(ps.get("class_table").dim(0), 4u);
}

TEST(Conditioning, EndpointsDifferInMostCoordinates) {
  const std::size_t d = 256;
  const TensorF f = timestep_features<float>({0, 999}, d);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < d; ++i) differ += std::abs(f[i] - f[d + i]) > 1e-3 ? 1 : 0;
  EXPECT_GE(differ, d / 2);
}

TEST(PreForward, EmptyStackIsIdentity) {
  NetworkConfig c = small_points();
  c.n_pre = 0;
  const Network<float> net(c);
  const ParamStore<float> ps = net.init(2);
  const Context<float> ctx(ps);
  const Var<float> x = net.embed_input(ctx, Var<float>::constant(points(3, 1)));
  EXPECT_TRUE(bit_equal(net.pre_forward(ctx, x).value(), x.value()));
}

TEST(PreForward, ZeroGateBlockIsIdentity) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = net.init(2);
  const Context<float> ctx(ps);
  const Var<float> x = net.embed_input(ctx, Var<float>::constant(points(3, 1)));
  EXPECT_TRUE(bit_equal(net.pre_forward(ctx, x).value(), x.value()));
}

TEST(PreForward, TwoBlocksComposeInOrder) {
  NetworkConfig c = small_points();
  c.n_pre = 2;
  const Network<float> net(c);
  const ParamStore<float> ps = live_params(net, 3);
  const Context<float> ctx(ps);
  const Var<float> x = net.embed_input(ctx, Var<float>::constant(points(3, 1)));
  const Var<float> seq = plain_block(ctx, "pre.1", plain_block(ctx, "pre.0", x, c), c);
  EXPECT_TRUE(bit_equal(net.pre_forward(ctx, x).value(), seq.value()));
}

TEST(PreForward, RejectsWrongShape) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = net.init(2);
  const Context<float> ctx(ps);
  EXPECT_THROW(net.pre_forward(ctx, Var<float>::constant(TensorF({2, 1, 16}))), UsageError);
  EXPECT_THROW(net.embed_input(ctx, Var<float>::constant(TensorF({2, 3}))), UsageError);
}

TEST(PreForward, IndependentOfTimestep) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = live_params(net, 4);
  const Context<float> ctx(ps);
  const TensorF x = points(4, 9);
  const TensorF a = net.pre_forward(ctx, net.embed_input(ctx, Var<float>::constant(x))).value();
  // Only the conditioning path sees t; pre and post never take it.
  const Var<float> c0 = net.embed_conditioning(ctx, {0, 0, 0, 0}, {0, 0, 0, 0});
  const Var<float> c1 = net.embed_conditioning(ctx, {900, 900, 900, 900}, {0, 0, 0, 0});
  const Var<float> xt = net.inject(ctx, Var<float>::constant(a));
  const TensorF f0 = net.fp_step(ctx, xt, xt, net.implicit_modulation(ctx, c0)).value();
  const TensorF f1 = net.fp_step(ctx, xt, xt, net.implicit_modulation(ctx, c1)).value();
  EXPECT_TRUE(bit_equal(a, net.pre_forward(ctx, net.embed_input(ctx, Var<float>::constant(x))).value()));
  EXPECT_GT(max_abs_diff(f0, f1), 1e-6);
}

TEST(Inject, IdentityAndZeroProjections) {
  const Network<float> net(small_points());
  ParamStore<float> ps = live_params(net, 5);
  const Context<float> ctx(ps);
  const Var<float> x = net.embed_input(ctx, Var<float>::constant(points(3, 2)));
  set_identity_injection(ps, 32);
  EXPECT_TRUE(bit_equal(net.inject(ctx, x).value(), x.value()));
  ps.set("fp.inject.w", TensorF({32, 32}));
  ps.set("fp.inject.b", TensorF({32}));
  const TensorF z = net.inject(ctx, x).value();
  for (float v : z.vec()) EXPECT_EQ(v, 0.0f);
}

TEST(Inject, OncePerTimestepAcrossIterations) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = live_params(net, 6);
  const Context<float> ctx(ps);
  const Var<float> c = net.embed_conditioning(ctx, {10, 10}, {0, 1});
  const Var<float> xt = net.inject(ctx, net.pre_forward(ctx, net.embed_input(ctx, Var<float>::constant(points(2, 3)))));
  const Modulation<float> mod = net.implicit_modulation(ctx, c);
  Var<float> z = xt;
  const long passes = ctx.counters().block_passes;
  for (int i = 0; i < 5; ++i) z = net.fp_step(ctx, z, xt, mod, i);
  EXPECT_EQ(ctx.counters().inject_calls, 1);
  EXPECT_EQ(ctx.counters().block_passes - passes, 5);
}

TEST(FpStep, PureAndWeightShared) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = live_params(net, 7);
  const Context<float> ctx(ps);
  const Var<float> c = net.embed_conditioning(ctx, {10, 500}, {0, kNullClass});
  const Var<float> xt = net.inject(ctx, net.pre_forward(ctx, net.embed_input(ctx, Var<float>::constant(points(2, 4)))));
  const Modulation<float> mod = net.implicit_modulation(ctx, c);
  const TensorF a = net.fp_step(ctx, xt, xt, mod, 0).value();
  const TensorF b = net.fp_step(ctx, xt, xt, mod, 7).value();
  EXPECT_TRUE(bit_equal(a, b));

  // Every iteration reads the same parameter names.
  ParamStore<float> shadow = ps;
  Tape<float> tape;
  const Context<float> rec(shadow, &tape);
  const Var<float> c2 = net.embed_conditioning(rec, {10, 500}, {0, kNullClass});
  const Modulation<float> m2 = net.implicit_modulation(rec, c2);
  Var<float> z = Var<float>::constant(xt.value());
  for (int i = 0; i < 3; ++i) z = net.fp_step(rec, z, Var<float>::constant(xt.value()), m2, i);
  const GradMap<float> g = tape.backward(o::sum(z));
  bool block_seen = false;
  for (const auto& [name, t] : g) {
    block_seen = block_seen || name.rfind("fp.block.", 0) == 0;
    EXPECT_TRUE(name.rfind("fp.block.", 0) == 0 || name.rfind("t_embed.", 0) == 0 || name == "class_table") << name;
  }
  EXPECT_TRUE(block_seen);
}

TEST(FpStep, RejectsShapeMismatch) {
  const Network<float> net(small_points());
  const ParamStore<float> ps = net.init(1);
  const Context<float> ctx(ps);
  const Modulation<float> mod = net.implicit_modulation(ctx, net.embed_conditioning(ctx, {1}, {0}));
  EXPECT_THROW(net.fp_step(ctx, Var<float>::constant(TensorF({1, 1, 32})), Var<float>::constant(TensorF({2, 1, 32})),
                           mod),
               UsageError);
}

TEST(FpStep, AtInitTheMapReturnsTheInjection) {
  // Zero gates make f(x) = x_tilde for any x, so the first iterate is the fixed point.
  const Network<float> net(small_points());
  const ParamStore<float> ps = net.init(8);
  const Context<float> ctx(ps);
  const Modulation<float> mod = net.implicit_modulation(ctx, net.embed_conditioning(ctx, {3, 4}, {0, 1}));
  Rng rng(1);
  const Var<float> x = Var<float>::constant(randn<float>({2, 1, 32}, rng));
  const Var<float> xt = Var<float>::constant(randn<float>({2, 1, 32}, rng));
  EXPECT_TRUE(bit_equal(net.fp_step(ctx, x, xt, mod).value(), xt.value()));
}

TEST(PostForward, ShapesMatchData) {
  for (const NetworkConfig& c : {small_points(), small_images()}) {
    const Network<float> net(c);
    const ParamStore<float> ps = live_params(net, 9);
    const Context<float> ctx(ps);
    Shape s{3};
    for (auto e : c.sample_shape()) s.push_back(e);
    Rng rng(3);
    const TensorF x = randn<float>(s, rng);
    const TensorF v = net.forward(ctx, x, {1, 2, 3}, {0, 1, kNullClass}, 2).value();
    EXPECT_EQ(v.shape(), s);
  }
}

TEST(PostForward, ZeroFinalProjectionGivesZero) {
  const Network<float> net(small_images());
  const ParamStore<float> ps = net.init(10);
  const Context<float> ctx(ps);
  Rng rng(4);
  const TensorF v = net.forward(ctx, randn<float>({2, 8, 8}, rng), {5, 900}, {0, 1}, 3).value();
  for (float e : v.vec()) EXPECT_EQ(e, 0.0f);
}

TEST(PostForward, IdentityHeadUnpatches) {
  NetworkConfig c = small_points();
  c.n_post = 0;
  c.final_norm = false;
  c.width = 4;
  c.heads = 2;
  const Network<float> net(c);
  ParamStore<float> ps = net.init(1);
  TensorF w({4, 2});
  w[0] = 1.0f;  // row 0 -> out 0
  w[3] = 1.0f;  // row 1 -> out 1
  ps.set("final.w", w);
  ps.set("final.b", TensorF({2}));
  const Context<float> ctx(ps);
  const TensorF xs({2, 1, 4}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8});
  const TensorF v = net.post_forward(ctx, Var<float>::constant(xs)).value();
  EXPECT_EQ(v.vec(), (std::vector<float>{1, 2, 5, 6}));
}

TEST(Patching, RoundTripsImages) {
  const NetworkConfig c = small_images();
  Rng rng(5);
  const TensorF x = randn<float>({2, 8, 8}, rng);
  const Var<float> tok = patchify(Var<float>::constant(x), c);
  EXPECT_EQ(tok.shape(), (Shape{2, 16, 4}));
  EXPECT_TRUE(bit_equal(unpatchify(tok, c).value(), x));
  // Patch (0, 1) holds pixels (0..1, 2..3).
  EXPECT_EQ(tok.value()[1 * 4 + 0], x[0 * 8 + 2]);
  EXPECT_EQ(tok.value()[1 * 4 + 3], x[1 * 8 + 3]);
}

TEST(Baseline, TiedWeightsMatchOneIteration) {
  for (const NetworkConfig& c : {small_points(), small_images()}) {
    const Network<float> net(c);
    ParamStore<float> ps = live_params(net, 11);
    set_identity_injection(ps, c.width);
    const ExplicitBaseline<float> tied(c, c.n_pre + 1 + c.n_post, {Network<float>::kBlock});
    const Context<float> ctx(ps);
    Shape s{3};
    for (auto e : c.sample_shape()) s.push_back(e);
    Rng rng(6);
    const TensorF x = randn<float>(s, rng);
    const std::vector<int> t{0, 400, 999}, l{0, kNullClass, 2};
    EXPECT_TRUE(bit_equal(net.forward(ctx, x, t, l, 1).value(), tied.forward(ctx, x, t, l).value()));
  }
}

TEST(Baseline, CountsBlockPasses) {
  const NetworkConfig c = small_points();
  const ExplicitBaseline<float> base(c, 5);
  const ParamStore<float> ps = base.init(1);
  const Context<float> ctx(ps);
  base.forward(ctx, points(2, 1), {1, 2}, {0, 1});
  EXPECT_EQ(ctx.counters().block_passes, 5);
  EXPECT_THROW(ExplicitBaseline<float>(c, 0), UsageError);
  EXPECT_THROW(ExplicitBaseline<float>(c, 2), UsageError);
}

TEST(Counts, ImplicitBlockIsExplicitBlockPlusInjection) {
  const NetworkConfig c = small_points();
  const Network<float> net(c);
  const ParamStore<float> ps = net.init(1);
  const ExplicitBaseline<float> base(c, 3);
  const ParamStore<float> bs = base.init(1);
  EXPECT_EQ(ps.numel("fp.block.") + ps.numel("fp.inject."), bs.numel("mid.0.") + c.width * c.width + c.width);
  EXPECT_EQ(ps.numel(), bs.numel() + c.width * c.width + c.width);
}

TEST(Counts, TwentyEightBlockRatio) {
  NetworkConfig c;
  c.width = 128;
  c.n_pre = c.n_post = 1;
  const std::size_t fpdm = Network<float>(c).init(1).numel();
  const std::size_t base = ExplicitBaseline<float>(c, 28).init(1).numel();
  EXPECT_LT(double(fpdm) / double(base), 0.13);
}
