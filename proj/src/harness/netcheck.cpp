#include "fpdm/harness/netcheck.hpp"

#include "fpdm/net/network.hpp"
#include "fpdm/tensor/random.hpp"

namespace fpdm::harness {
namespace o = fpdm::ops;

NetCheckOptions default_netcheck() {
  NetCheckOptions n;
  n.model.width = 64;
  n.model.heads = 4;
  n.model.n_pre = 1;
  n.model.n_post = 1;
  n.model.freq_dim = 64;
  n.model.n_classes = 3;
  return n;
}

namespace {

template <typename T>
ParamStore<T> jittered(const net::Network<T>& net, double jitter, Rng& rng) {
  ParamStore<T> ps = net.init(rng());
  for (const auto& name : ps.names()) {
    Tensor<T> t = ps.get(name);
    const Tensor<T> d = randn<T>(t.shape(), rng, jitter);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] += d[i];
    ps.set(name, std::move(t));
  }
  return ps;
}

}  // namespace

FdReport network_gradcheck(const NetCheckOptions& opts, std::uint64_t seed) {
  Rng rng(seed);
  const auto& cfg = opts.model;
  Shape shape{opts.batch};
  for (auto e : cfg.sample_shape()) shape.push_back(e);
  const TensorD x = randn<double>(shape, rng);
  const TensorD target = randn<double>(shape, rng);
  std::vector<int> t(opts.batch), labels(opts.batch);
  std::uniform_int_distribution<int> td(0, int(cfg.timesteps) - 1);
  for (std::size_t i = 0; i < opts.batch; ++i) {
    t[i] = td(rng);
    labels[i] = cfg.n_classes > 0 && i % 2 == 0 ? int(i / 2 % cfg.n_classes) : net::kNullClass;
  }
  FdOptions fd;
  fd.probes = opts.probes;
  fd.seed = mix_seed(seed, 1);

  if (opts.f64) {
    const net::Network<double> net(cfg);
    const ParamStore<double> ps = jittered(net, opts.jitter, rng);
    fd.h = 1e-5;
    const ParamFn<double> f = [&](const Context<double>& ctx) {
      return o::mse(net.forward(ctx, x, t, labels, opts.iters), Var<double>::constant(target));
    };
    return finite_difference_check(f, ps, fd);
  }
  const net::Network<float> netf(cfg);
  const net::Network<double> netd(cfg);
  const ParamStore<float> ps = jittered(netf, opts.jitter, rng);
  const TensorF xf = x.cast<float>(), tf = target.cast<float>();
  const TensorD xd = xf.cast<double>(), tdd = tf.cast<double>();
  struct Loss {
    const net::Network<float>& nf;
    const net::Network<double>& nd;
    const TensorF& xf;
    const TensorF& tf;
    const TensorD& xd;
    const TensorD& td;
    const std::vector<int>& t;
    const std::vector<int>& labels;
    int iters;
    Var<float> operator()(const Context<float>& ctx) const {
      return o::mse(nf.forward(ctx, xf, t, labels, iters), Var<float>::constant(tf));
    }
    Var<double> operator()(const Context<double>& ctx) const {
      return o::mse(nd.forward(ctx, xd, t, labels, iters), Var<double>::constant(td));
    }
  };
  fd.h = 1e-4;
  return finite_difference_check_f64_reference(Loss{netf, netd, xf, tf, xd, tdd, t, labels, opts.iters}, ps, fd);
}

}  // namespace fpdm::harness
