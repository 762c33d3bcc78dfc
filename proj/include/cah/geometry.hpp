#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "cah/tensor.hpp"

namespace cah {

// Axis-aligned coordinate box; every chart in the library lives on one.
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vec& x, double slack = 0.0) const;
  double diagonal() const { return (hi - lo).norm(); }
  Vec clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

enum class DerivativeMode { Analytic, FiniteDifference };

// Riemannian metric on a single chart.
//
// Components are supplied as a callback. Derivatives come either from analytic
// callbacks or from central differences: first derivatives use step
// `fd_step()` (default 1e-6 x box diagonal), second derivatives use a
// fourth-order stencil with step `fd_step_second()`.
class MetricField {
 public:
  using MetricFn = std::function<Mat(const Vec&)>;
  using FirstDerivativeFn = std::function<Tensor3(const Vec&)>;   // (c,a,b) = d_c g_ab
  using SecondDerivativeFn = std::function<Tensor4(const Vec&)>;  // (c,d,a,b) = d_c d_d g_ab

  MetricField(int dim, Box domain, MetricFn metric, std::string name = "metric");

  // Switches to analytic derivatives. Second derivatives fall back to central
  // differences of `first` when `second` is empty.
  MetricField& with_derivatives(FirstDerivativeFn first, SecondDerivativeFn second = {});
  MetricField& with_fd_step(double eps);
  MetricField& with_fd_step_second(double eps);

  int dim() const { return dim_; }
  const Box& domain() const { return domain_; }
  const std::string& name() const { return name_; }
  DerivativeMode mode() const { return first_ ? DerivativeMode::Analytic : DerivativeMode::FiniteDifference; }
  double fd_step() const { return fd_step_; }
  double fd_step_second() const { return fd_step_second_; }

  // Throws OutOfDomain / NotPositiveDefinite.
  Mat metric(const Vec& x) const;
  Mat metric_unchecked(const Vec& x) const { return metric_(x); }
  Tensor3 first_derivatives(const Vec& x) const;
  Tensor4 second_derivatives(const Vec& x) const;

  void require_inside(const Vec& x) const;

 private:
  int dim_;
  Box domain_;
  MetricFn metric_;
  FirstDerivativeFn first_;
  SecondDerivativeFn second_;
  std::string name_;
  double fd_step_;
  double fd_step_second_ = 1e-3;
};

using MetricPtr = std::shared_ptr<const MetricField>;

double inner(const Mat& g, const Vec& a, const Vec& b);

// Gamma(a,b,c) = Gamma^a_bc of the Levi-Civita connection.
Tensor3 christoffel(const MetricField& metric, const Vec& x);
Tensor3 christoffel_unchecked(const MetricField& metric, const Vec& x);

// w^a = Gamma^a_bc X^b Y^c
Vec contract_christoffel(const Tensor3& gamma, const Vec& X, const Vec& Y);

// Rm(a,b,c,d) = g(R(d_a,d_b)d_c, d_d) with R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y].
// In this convention Rm(X,Y,Y,X) is the sectional curvature for orthonormal X, Y.
Tensor4 riemann(const MetricField& metric, const Vec& x);
Tensor4 riemann_unchecked(const MetricField& metric, const Vec& x);

// T(A,B,C,D) = T(F_A, F_B, F_C, F_D) for the columns F_A of `frame`.
Tensor4 frame_components(const Tensor4& t, const Mat& frame);

// Sectional curvature of span{X, Y}.
double sectional_curvature(const MetricField& metric, const Vec& x, const Vec& X, const Vec& Y);

// Embedded submanifold S^r given by a parametrisation u -> x(u) of an r-box.
class SubmanifoldSpec {
 public:
  using EmbeddingFn = std::function<Vec(const Vec&)>;
  using JacobianFn = std::function<Mat(const Vec&)>;   // n x r
  using HessianFn = std::function<Tensor3(const Vec&)>; // (a,i,j) = d_i d_j x^a

  SubmanifoldSpec(MetricPtr ambient, int dim, Box parameters, EmbeddingFn embedding);

  SubmanifoldSpec& with_jacobian(JacobianFn jacobian);
  SubmanifoldSpec& with_hessian(HessianFn hessian);

  const MetricField& ambient() const { return *ambient_; }
  const MetricPtr& ambient_ptr() const { return ambient_; }
  int dim() const { return dim_; }
  int codim() const { return ambient_->dim() - dim_; }
  const Box& parameters() const { return parameters_; }

  Vec point(const Vec& u) const { return embedding_(u); }
  // Throws RankDeficient when the Jacobian drops rank.
  Mat jacobian(const Vec& u) const;
  Tensor3 hessian(const Vec& u) const;

  // g-orthonormal n x n frame: the first r columns span T_xS (Gram-Schmidt of
  // the Jacobian columns), the rest complete it from the chart axes in index order.
  Mat adapted_frame(const Vec& u) const;
  // g-orthogonal projector onto the normal space, in chart components.
  Mat normal_projector(const Vec& u) const;
  // Parameter components of a tangent vector given in chart components.
  Vec tangent_parameters(const Vec& u, const Vec& X) const;

  // Nearest point in chart coordinates (Gauss-Newton from a coarse scan).
  Vec project(const Vec& x) const;
  // Projects and throws InvalidArgument if the chart distance exceeds tolerance.
  Vec snap(const Vec& x, double tolerance = 1e-6) const;

 private:
  MetricPtr ambient_;
  int dim_;
  Box parameters_;
  EmbeddingFn embedding_;
  JacobianFn jacobian_;
  HessianFn hessian_;
};

// sigma(X, Y) for X = J a, Y = J b, returned as a chart vector normal to S.
Vec second_fundamental_form(const SubmanifoldSpec& sub, const Vec& u, const Vec& a, const Vec& b);

// Riemannian vector bundle (V^s, fiber metric, D) over a chart of M together
// with a V-valued symmetric 2-tensor h. Sections are expressed in the global
// trivialisation of the chart, so D_c e_b = A(c,a,b) e_a.
class BundleData {
 public:
  using FiberMetricFn = std::function<Mat(const Vec&)>;            // s x s
  using ConnectionFn = std::function<Tensor3(const Vec&)>;         // (c, alpha, beta)
  using ConnectionDerivativeFn = std::function<Tensor4(const Vec&)>; // (d, c, alpha, beta)
  using TensorFn = std::function<Tensor3(const Vec&)>;             // (alpha, a, b)
  using TensorDerivativeFn = std::function<Tensor4(const Vec&)>;   // (c, alpha, a, b)

  BundleData(MetricPtr base, int rank, FiberMetricFn fiber_metric, ConnectionFn connection, TensorFn h);

  BundleData& with_connection_derivative(ConnectionDerivativeFn d);
  BundleData& with_h_derivative(TensorDerivativeFn d);

  // Trivial rank-s bundle with identity fiber metric, zero connection and the given h.
  static BundleData flat(MetricPtr base, int rank, TensorFn h);

  const MetricField& base() const { return *base_; }
  const MetricPtr& base_ptr() const { return base_; }
  int rank() const { return rank_; }

  Mat fiber_metric(const Vec& x) const { return fiber_metric_(x); }
  Tensor3 connection(const Vec& x) const { return connection_(x); }
  Tensor4 connection_derivative(const Vec& x) const;
  Tensor3 h(const Vec& x) const { return h_(x); }
  Tensor4 h_derivative(const Vec& x) const;

  // h(X, Y) as fiber components.
  Vec h_apply(const Tensor3& h, const Vec& X, const Vec& Y) const;

  // RV(c,d,alpha,beta): R^V(d_c, d_d) e_beta = RV(c,d,alpha,beta) e_alpha.
  Tensor4 curvature(const Vec& x) const;
  // (c, alpha, a, b) = (D_c h)_ab^alpha, with Levi-Civita on the TM slots.
  Tensor4 h_covariant_derivative(const Vec& x) const;

  double symmetry_residual(const Vec& x) const;
  // max |d_c fib(a,b) - fib(D_c a, b) - fib(a, D_c b)| over the trivialising frame.
  double compatibility_residual(const Vec& x) const;

  // fiber-orthonormal frame from the trivialising axes.
  Mat orthonormal_fiber_frame(const Vec& x) const;

 private:
  MetricPtr base_;
  int rank_;
  FiberMetricFn fiber_metric_;
  ConnectionFn connection_;
  ConnectionDerivativeFn connection_derivative_;
  TensorFn h_;
  TensorDerivativeFn h_derivative_;
};

// Split of a frame index range into n tangent and s normal slots.
struct FrameSplit {
  int tangent_count = 0;
  int normal_count = 0;
  int total() const { return tangent_count + normal_count; }
  bool is_tangent(int A) const { return A < tangent_count; }
};

// A_eta as a chart-component matrix: g(A X, Y) = fib(h(X, Y), eta).
Mat shape_operator(const BundleData& bundle, const Vec& x, const Vec& eta);

// Element of T^perp S (+) V over one point.
struct DirectSumVector {
  Vec normal;  // chart components, orthogonal to T_xS
  Vec fiber;   // trivialisation components
};

struct DirectSumSection {
  std::function<Vec(const Vec&)> normal;
  std::function<Vec(const Vec&)> fiber;
  DirectSumVector at(const Vec& u) const;
};

// D~_X s = (nabla^perp_X xi - (A_eta X)^perp,  h(X, xi) + D_X eta)
// for X = J a. `bundle` may be null for s = 0.
DirectSumVector direct_sum_connection(const SubmanifoldSpec& sub, const BundleData* bundle, const Vec& u,
                                      const Vec& a, const DirectSumSection& section);

double direct_sum_inner(const SubmanifoldSpec& sub, const BundleData* bundle, const Vec& u,
                        const DirectSumVector& p, const DirectSumVector& q);

// Fourth-order central derivative of f along direction `dir` at x.
Vec directional_derivative(const std::function<Vec(const Vec&)>& f, const Vec& x, const Vec& dir, double h);

}  // namespace cah
