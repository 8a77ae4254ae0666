#include "fpdm/solver/sjfb.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace fpdm::solver {
namespace o = fpdm::ops;

SjfbConfig SjfbConfig::stochastic_draws(int N, int M) {
  SjfbConfig c;
  c.stochastic = true;
  c.N = N;
  c.M = M;
  c.validate();
  return c;
}

SjfbConfig SjfbConfig::fixed(int n, int m) {
  SjfbConfig c;
  c.stochastic = false;
  c.fixed_n = n;
  c.fixed_m = m;
  c.N = n;
  c.M = m;
  c.validate();
  return c;
}

void SjfbConfig::validate() const {
  if (stochastic) {
    if (N < 0) throw UsageError("S-JFB needs N >= 0");
    if (M < 1) throw UsageError("S-JFB needs M >= 1");
  } else {
    if (fixed_n < 0) throw UsageError("S-JFB needs n >= 0");
    if (fixed_m < 1) throw UsageError("S-JFB needs m >= 1");
  }
}

Draw draw(const SjfbConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!cfg.stochastic) return {cfg.fixed_n, cfg.fixed_m};
  std::uniform_int_distribution<int> dn(0, cfg.N);
  std::uniform_int_distribution<int> dm(1, cfg.M);
  Draw d;
  d.n = dn(rng);
  d.m = dm(rng);
  return d;
}

template <typename T>
SjfbResult<T> sjfb_run(ImplicitProblem<T>& problem, const ParamStore<T>& params, Draw d) {
  if (d.n < 0 || d.m < 1) throw UsageError("S-JFB draw needs n >= 0 and m >= 1");
  Tape<T> tape;
  const Context<T> rec(params, &tape);
  const Context<T> ng = rec.no_grad();
  SjfbResult<T> out;
  out.draw = d;

  Var<T> x = detach(problem.begin(rec));
  for (int i = 0; i < d.n; ++i) {
    Var<T> next;
    try {
      next = problem.step(ng, x, i);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string("no-grad phase diverged: ") + e.what(), out.deltas, i);
    }
    const double delta = residual(next.value(), x.value());
    out.deltas.push_back(delta);
    if (!std::isfinite(delta) || delta > kDivergenceDelta) {
      throw DivergenceError("no-grad phase crossed the divergence guard", out.deltas, i + 1);
    }
    x = std::move(next);
  }
  x = detach(x);
  for (int j = 0; j < d.m; ++j) {
    Var<T> next = problem.step(rec, x, d.n + j);
    const double delta = residual(next.value(), x.value());
    out.deltas.push_back(delta);
    if (!std::isfinite(delta) || delta > kDivergenceDelta) {
      throw DivergenceError("with-grad phase crossed the divergence guard", out.deltas, d.n + j + 1);
    }
    x = std::move(next);
  }
  const Var<T> loss = problem.loss(rec, x);
  out.loss = double(loss.value().item());
  out.grads = tape.backward(loss);
  out.tape_nodes = tape.size();
  return out;
}

template <typename T>
net::Modulation<T> detach_mod(const net::Modulation<T>& m) {
  return {detach(m.shift1), detach(m.scale1), detach(m.gate1), detach(m.shift2), detach(m.scale2), detach(m.gate2)};
}

template <typename T>
Var<T> FpdmProblem<T>::begin(const Context<T>& rec) {
  const Var<T> c = net_.embed_conditioning(rec, batch_.t, batch_.labels);
  const Var<T> x_pre = net_.pre_forward(rec, net_.embed_input(rec, Var<T>::constant(batch_.x_t)));
  x_tilde_ = net_.inject(rec, x_pre);
  x_tilde_ng_ = detach(x_tilde_);
  mod_ = net_.implicit_modulation(rec, c);
  mod_ng_ = detach_mod(mod_);
  return x_tilde_;
}

template <typename T>
Var<T> FpdmProblem<T>::step(const Context<T>& ctx, const Var<T>& x, int iteration) {
  if (ctx.recording()) return net_.fp_step(ctx, x, x_tilde_, mod_, iteration);
  return net_.fp_step(ctx, x, x_tilde_ng_, mod_ng_, iteration);
}

template <typename T>
Var<T> FpdmProblem<T>::loss(const Context<T>& rec, const Var<T>& x_star) {
  return o::mse(net_.post_forward(rec, x_star), Var<T>::constant(batch_.target));
}

template <typename T>
SjfbResult<T> sjfb_train_step(const net::Network<T>& net, const ParamStore<T>& params, const TrainBatch<T>& batch,
                              const SjfbConfig& cfg, Rng& rng) {
  FpdmProblem<T> problem(net, batch);
  return sjfb_run(problem, params, draw(cfg, rng));
}

namespace {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

Mat to_mat(const TensorD& t, std::size_t rows, std::size_t cols) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = t[i * cols + j];
  }
  return m;
}

TensorD from_mat(const Mat& m) {
  TensorD t({std::size_t(m.rows()), std::size_t(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[std::size_t(i * m.cols() + j)] = m(i, j);
  }
  return t;
}

}  // namespace

LinearSystem make_linear_system(std::size_t d, double rho, std::uint64_t seed) {
  if (d == 0 || !(rho >= 0) || rho >= 1) throw UsageError("linear system needs d > 0 and 0 <= rho < 1");
  Rng rng(seed);
  LinearSystem sys;
  sys.d = d;
  // Symmetric A = Q diag(lambda) Q^T with |lambda| <= rho and lambda_0 = rho,
  // so the operator norm equals the spectral radius.
  const Mat g = to_mat(randn<double>({d, d}, rng), d, d);
  const Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();
  std::uniform_real_distribution<double> lam(-rho, rho);
  Eigen::VectorXd ev(static_cast<Eigen::Index>(d));
  ev(0) = rho;
  for (Eigen::Index i = 1; i < Eigen::Index(d); ++i) ev(i) = lam(rng);
  sys.A = from_mat(q * ev.asDiagonal() * q.transpose());
  sys.B = randn<double>({d, d}, rng, 1.0 / std::sqrt(double(d)));
  sys.u = randn<double>({1, d}, rng);
  sys.y = randn<double>({1, d}, rng);
  return sys;
}

TensorD linear_fixed_point(const LinearSystem& sys) {
  const std::size_t d = sys.d;
  const Mat a = to_mat(sys.A, d, d), b = to_mat(sys.B, d, d);
  const RowVec u = to_mat(sys.u, 1, d);
  const Mat ima = Mat::Identity(Eigen::Index(d), Eigen::Index(d)) - a;
  // x (I - A) = u B  <=>  (I - A)^T x^T = (u B)^T
  const Eigen::VectorXd xt = ima.transpose().partialPivLu().solve((u * b).transpose());
  return from_mat(xt.transpose());
}

GradMap<double> exact_implicit_gradient(const LinearSystem& sys) {
  const std::size_t d = sys.d;
  const Mat a = to_mat(sys.A, d, d);
  const RowVec u = to_mat(sys.u, 1, d), y = to_mat(sys.y, 1, d);
  const RowVec x = to_mat(linear_fixed_point(sys), 1, d);
  const RowVec g = x - y;
  const Mat ima = Mat::Identity(Eigen::Index(d), Eigen::Index(d)) - a;
  // dL = (x dA + u dB) (I - A)^-1 g^T, so with r = (I - A)^-1 g^T:
  const Eigen::VectorXd r = ima.partialPivLu().solve(g.transpose());
  GradMap<double> out;
  out.emplace("A", from_mat(x.transpose() * r.transpose()));
  out.emplace("B", from_mat(u.transpose() * r.transpose()));
  return out;
}

ParamStore<double> LinearProblem::params(const LinearSystem& sys) {
  ParamStore<double> ps;
  ps.add("A", sys.A);
  ps.add("B", sys.B);
  return ps;
}

Var<double> LinearProblem::begin(const Context<double>& rec) {
  inj_ = o::matmul(Var<double>::constant(sys_.u), rec.param("B"));
  inj_ng_ = detach(inj_);
  return inj_ng_;
}

Var<double> LinearProblem::step(const Context<double>& ctx, const Var<double>& x, int) {
  return o::add(o::matmul(x, ctx.param("A")), ctx.recording() ? inj_ : inj_ng_);
}

Var<double> LinearProblem::loss(const Context<double>&, const Var<double>& x_star) {
  return o::scale(o::mse(x_star, Var<double>::constant(sys_.y)), 0.5 * double(sys_.d));
}

double gradient_cosine(const GradMap<double>& a, const GradMap<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [name, ga] : a) {
    auto it = b.find(name);
    if (it == b.end()) throw UsageError("gradient_cosine: missing entry " + name);
    for (std::size_t i = 0; i < ga.numel(); ++i) {
      dot += ga[i] * it->second[i];
      na += ga[i] * ga[i];
      nb += it->second[i] * it->second[i];
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<JfbRow> jfb_gradient_comparison(const LinearSystem& sys, const std::vector<int>& ns,
                                            const std::vector<int>& ms) {
  const ParamStore<double> ps = LinearProblem::params(sys);
  const GradMap<double> exact = exact_implicit_gradient(sys);
  std::vector<JfbRow> rows;
  for (int n : ns) {
    for (int m : ms) {
      LinearProblem problem(sys);
      const auto r = sjfb_run(problem, ps, Draw{n, m});
      rows.push_back({n, m, gradient_cosine(r.grads, exact)});
    }
  }
  return rows;
}

#define FPDM_INSTANTIATE_SJFB(T)                                                                        \
  template SjfbResult<T> sjfb_run(ImplicitProblem<T>&, const ParamStore<T>&, Draw);                     \
  template class FpdmProblem<T>;                                                                        \
  template SjfbResult<T> sjfb_train_step(const net::Network<T>&, const ParamStore<T>&, const TrainBatch<T>&, \
                                         const SjfbConfig&, Rng&);

FPDM_INSTANTIATE_SJFB(float)
FPDM_INSTANTIATE_SJFB(double)

#undef FPDM_INSTANTIATE_SJFB

}  // namespace fpdm::solver
