#pragma once

#include <vector>

#include "fpdm/net/network.hpp"
#include "fpdm/solver/solver.hpp"
#include "fpdm/tensor/random.hpp"

namespace fpdm::solver {

struct SjfbConfig {
  int N = 6;  // max no-grad iterations
  int M = 6;  // max with-grad iterations
  bool stochastic = true;
  int fixed_n = 0;
  int fixed_m = 1;

  static SjfbConfig stochastic_draws(int N, int M);
  static SjfbConfig fixed(int n, int m);
  void validate() const;
};

struct Draw {
  int n = 0;
  int m = 1;
};

// n uniform on {0..N}, m uniform on {1..M}; fixed values in fixed mode.
Draw draw(const SjfbConfig& cfg, Rng& rng);

// A fixed-point problem trained through its last m iterations.
template <typename T>
class ImplicitProblem {
 public:
  virtual ~ImplicitProblem() = default;
  // Recorded preparation (injection etc.); returns the initial state.
  virtual Var<T> begin(const Context<T>& rec) = 0;
  // One iteration; ctx is either the recording context or its no-grad twin.
  virtual Var<T> step(const Context<T>& ctx, const Var<T>& x, int iteration) = 0;
  virtual Var<T> loss(const Context<T>& rec, const Var<T>& x_star) = 0;
};

template <typename T>
struct SjfbResult {
  double loss = 0.0;
  GradMap<T> grads;
  Draw draw;
  std::size_t tape_nodes = 0;
  std::vector<double> deltas;  // no-grad then with-grad residuals
};

// n no-grad iterations from the (detached) initial state, then m recorded
// iterations from the detached result; backward runs through those m only.
// Divergence during the no-grad phase raises DivergenceError carrying the
// residual history and the number of iterations reached.
template <typename T>
SjfbResult<T> sjfb_run(ImplicitProblem<T>& problem, const ParamStore<T>& params, Draw d);

// Training inputs for one S-JFB step on the denoiser.
template <typename T>
struct TrainBatch {
  Tensor<T> x_t;
  std::vector<int> t;
  std::vector<int> labels;
  Tensor<T> target;  // v
};

template <typename T>
class FpdmProblem : public ImplicitProblem<T> {
 public:
  FpdmProblem(const net::Network<T>& net, const TrainBatch<T>& batch) : net_(net), batch_(batch) {}
  Var<T> begin(const Context<T>& rec) override;
  Var<T> step(const Context<T>& ctx, const Var<T>& x, int iteration) override;
  Var<T> loss(const Context<T>& rec, const Var<T>& x_star) override;

 private:
  const net::Network<T>& net_;
  const TrainBatch<T>& batch_;
  Var<T> x_tilde_, x_tilde_ng_;
  net::Modulation<T> mod_, mod_ng_;
};

template <typename T>
SjfbResult<T> sjfb_train_step(const net::Network<T>& net, const ParamStore<T>& params, const TrainBatch<T>& batch,
                              const SjfbConfig& cfg, Rng& rng);

// Linear test double f(x) = x A + u B for a fixed input u, with loss
// 0.5 |x* - y|^2. Row vectors of length d.
struct LinearSystem {
  std::size_t d = 8;
  TensorD A, B, u, y;
};

// Random symmetric A with spectral radius exactly rho; random B, u, y.
LinearSystem make_linear_system(std::size_t d, double rho, std::uint64_t seed);
// Closed-form fixed point u B (I - A)^-1.
TensorD linear_fixed_point(const LinearSystem& sys);
// Implicit-function-theorem gradient of the loss at the exact fixed point.
GradMap<double> exact_implicit_gradient(const LinearSystem& sys);

// Iteration starts at the injection u B, as the network starts at x_tilde.
class LinearProblem : public ImplicitProblem<double> {
 public:
  explicit LinearProblem(const LinearSystem& sys) : sys_(sys) {}
  static ParamStore<double> params(const LinearSystem& sys);
  Var<double> begin(const Context<double>& rec) override;
  Var<double> step(const Context<double>& ctx, const Var<double>& x, int iteration) override;
  Var<double> loss(const Context<double>& rec, const Var<double>& x_star) override;

 private:
  const LinearSystem& sys_;
  Var<double> inj_, inj_ng_;
};

// Cosine similarity of two gradient maps flattened in name order; 0 when
// either is all zeros.
double gradient_cosine(const GradMap<double>& a, const GradMap<double>& b);

struct JfbRow {
  int n = 0;
  int m = 1;
  double cosine = 0.0;
};

std::vector<JfbRow> jfb_gradient_comparison(const LinearSystem& sys, const std::vector<int>& ns = {0, 4, 8, 16},
                                            const std::vector<int>& ms = {1, 2, 4});

}  // namespace fpdm::solver
