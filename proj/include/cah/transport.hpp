#pragma once

#include <functional>
#include <vector>

#include "cah/geometry.hpp"
#include "cah/integrate.hpp"

namespace cah {

// Piecewise degree-5 Lagrange interpolation of vector samples on a strictly
// increasing grid (six nearest nodes, clamped at the ends).
class SampledSeries {
 public:
  SampledSeries() = default;
  SampledSeries(std::vector<double> t, std::vector<Vec> values);

  Vec value(double t) const;
  Vec derivative(double t) const;
  const std::vector<double>& times() const { return t_; }
  const std::vector<Vec>& values() const { return values_; }
  bool empty() const { return t_.empty(); }

 private:
  void weights(double t, int& first, int& count, double* w, double* dw) const;

  std::vector<double> t_;
  std::vector<Vec> values_;
};

// Curve t -> x(t) on [0,1] in chart coordinates, either sampled or analytic.
class CurvePath {
 public:
  using PointFn = std::function<Vec(double)>;

  CurvePath() = default;
  // Grid must be strictly increasing with t.front() == 0 and t.back() == 1.
  CurvePath(std::vector<double> t, std::vector<Vec> x);
  // Without `dx` the velocity uses a fourth-order central difference of x.
  static CurvePath from_function(int dim, PointFn x, PointFn dx = {});

  int dim() const { return dim_; }
  bool is_sampled() const { return !series_.empty(); }
  Vec point(double t) const;
  Vec velocity(double t) const;
  const std::vector<double>& times() const { return series_.times(); }
  const std::vector<Vec>& samples() const { return series_.values(); }

  // t -> x(rep(t)); rep must map [0,1] onto [0,1] monotonically.
  CurvePath reparameterized(std::function<double(double)> rep, std::function<double(double)> drep) const;

 private:
  int dim_ = 0;
  SampledSeries series_;
  PointFn x_;
  PointFn dx_;
};

// Curve t -> v(t) in T_pM, in components with respect to a fixed frame at p.
struct VelocityProfile {
  std::function<Vec(double)> v;
  Vec base;   // p (optional; filled by anti_develop)
  Mat frame;  // frame at p (optional; filled by anti_develop)

  Vec operator()(double t) const { return v(t); }
  static VelocityProfile constant(const Vec& c);
  static VelocityProfile sampled(std::vector<double> t, std::vector<Vec> values);
};

// t -> h(t)_ab^alpha with a,b in the tangent block and alpha in the normal block.
struct HProfile {
  FrameSplit split;
  std::function<Tensor3(double)> h;  // (alpha, a, b)

  Tensor3 operator()(double t) const { return h(t); }
  static HProfile zero(int n, int s);
  static HProfile constant(const Tensor3& h);
};

// Two-parameter family u, t -> Phi(u, t) of curves in a chart. Derivatives in
// t fall back to fourth-order central differences (step 1e-3) when absent.
struct Homotopy {
  using Fn = std::function<Vec(double u, double t)>;

  int dim = 0;
  Fn point;
  Fn dt;
  Fn dtt;
  // S-parameters of Phi(u, 0) when the family starts on a submanifold.
  std::function<Vec(double u)> base;

  Vec velocity(double u, double t) const;
  Vec acceleration(double u, double t) const;
  CurvePath slice(double u) const;
};

// Sampled result of any frame-propagating solve. Frame columns are chart
// components; for generalized developments the first `split.tangent_count`
// columns span the tangent block.
struct Development {
  CurvePath curve;
  std::vector<FrameState> frames;
  FrameSplit split;
  int reorthonormalizations = 0;

  double max_gram_drift() const;
};

// Parallel displacement of a single vector along a curve from t0 to t1.
Vec parallel_transport(const MetricField& metric, const CurvePath& curve, const Vec& w, double t0, double t1,
                       const IntegratorConfig& config = {});

// Parallel frame along a given curve, sampled on the curve grid (or the
// integrator grid for analytic curves).
Development transport_frame(const MetricField& metric, const CurvePath& curve, const Mat& frame,
                            const IntegratorConfig& config = {});

// gamma(0) = p, gamma' = sum_a v_a E_a with E parallel and E(0) = frame.
// Throws ChartExit with the last time inside the chart box.
Development develop(const MetricField& metric, const Vec& p, const Mat& frame, const VelocityProfile& v,
                    const IntegratorConfig& config = {});

// v(t) = P_t^0(gamma) gamma'(t) in components with respect to `frame` at
// gamma(0). An empty frame selects the orthonormalised chart axes.
VelocityProfile anti_develop(const MetricField& metric, const CurvePath& curve, const Mat& frame = Mat(),
                             const IntegratorConfig& config = {});

// Frame E_A along the generalized development of (v, h). The first n frame
// columns span T, the remaining s span N; v has n components and h has
// extents (s, n, n).
Development generalized_develop(const MetricField& metric, const Vec& p, const Mat& frame, const VelocityProfile& v,
                                const HProfile& h, const IntegratorConfig& config = {});

// Chart matrix of D_0^t: sum c_A e_A -> sum c_A E_A(t). t must be a grid time.
Mat generalized_transport(const Development& history, double t);

// Orthonormal frame built from the chart axes.
Mat default_frame(const MetricField& metric, const Vec& p);

}  // namespace cah
