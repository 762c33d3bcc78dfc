#include "cah/transport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cah/errors.hpp"

namespace cah {

// --- SampledSeries --------------------------------------------------------

SampledSeries::SampledSeries(std::vector<double> t, std::vector<Vec> values) : t_(std::move(t)), values_(std::move(values)) {
  if (t_.size() != values_.size()) throw InvalidArgument("samples: grid and value counts differ");
  if (t_.size() < 2) throw InvalidArgument("samples: need at least two samples");
  for (std::size_t k = 1; k < t_.size(); ++k) {
    if (!(t_[k] > t_[k - 1])) throw InvalidArgument("samples: grid must be strictly increasing");
    if (values_[k].size() != values_[0].size()) throw InvalidArgument("samples: inconsistent value sizes");
  }
}

void SampledSeries::weights(double t, int& first, int& count, double* w, double* dw) const {
  const int n = static_cast<int>(t_.size());
  count = std::min(n, 6);
  int k = static_cast<int>(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin()) - 1;
  k = std::clamp(k, 0, n - 2);
  first = std::clamp(k - 2, 0, n - count);
  for (int j = 0; j < count; ++j) {
    const double tj = t_[first + j];
    double prod = 1.0;
    double deriv = 0.0;
    for (int m = 0; m < count; ++m) {
      if (m == j) continue;
      const double denom = tj - t_[first + m];
      // product rule over the remaining factors
      double partial = 1.0 / denom;
      for (int q = 0; q < count; ++q) {
        if (q == j || q == m) continue;
        partial *= (t - t_[first + q]) / (tj - t_[first + q]);
      }
      deriv += partial;
      prod *= (t - t_[first + m]) / denom;
    }
    w[j] = prod;
    dw[j] = deriv;
  }
}

Vec SampledSeries::value(double t) const {
  int first = 0, count = 0;
  double w[6], dw[6];
  weights(t, first, count, w, dw);
  Vec out = Vec::Zero(values_[0].size());
  for (int j = 0; j < count; ++j) out += w[j] * values_[first + j];
  return out;
}

Vec SampledSeries::derivative(double t) const {
  int first = 0, count = 0;
  double w[6], dw[6];
  weights(t, first, count, w, dw);
  Vec out = Vec::Zero(values_[0].size());
  for (int j = 0; j < count; ++j) out += dw[j] * values_[first + j];
  return out;
}

// --- CurvePath ------------------------------------------------------------

CurvePath::CurvePath(std::vector<double> t, std::vector<Vec> x) {
  if (t.empty() || t.front() != 0.0 || t.back() != 1.0) throw InvalidArgument("curve: grid must start at 0 and end at 1");
  dim_ = x.empty() ? 0 : static_cast<int>(x[0].size());
  series_ = SampledSeries(std::move(t), std::move(x));
}

CurvePath CurvePath::from_function(int dim, PointFn x, PointFn dx) {
  if (!x) throw InvalidArgument("curve: point callback required");
  CurvePath c;
  c.dim_ = dim;
  c.x_ = std::move(x);
  c.dx_ = std::move(dx);
  return c;
}

Vec CurvePath::point(double t) const {
  if (is_sampled()) return series_.value(t);
  return x_(t);
}

Vec CurvePath::velocity(double t) const {
  if (is_sampled()) return series_.derivative(t);
  if (dx_) return dx_(t);
  const double h = 1e-3;
  return (x_(t - 2 * h) - 8.0 * x_(t - h) + 8.0 * x_(t + h) - x_(t + 2 * h)) / (12.0 * h);
}

CurvePath CurvePath::reparameterized(std::function<double(double)> rep, std::function<double(double)> drep) const {
  const CurvePath base = *this;
  return from_function(
      dim_, [base, rep](double t) { return base.point(rep(t)); },
      [base, rep, drep](double t) { return Vec(base.velocity(rep(t)) * drep(t)); });
}

// --- profiles -------------------------------------------------------------

VelocityProfile VelocityProfile::constant(const Vec& c) {
  VelocityProfile p;
  p.v = [c](double) { return c; };
  return p;
}

VelocityProfile VelocityProfile::sampled(std::vector<double> t, std::vector<Vec> values) {
  auto series = std::make_shared<SampledSeries>(std::move(t), std::move(values));
  VelocityProfile p;
  p.v = [series](double s) { return series->value(s); };
  return p;
}

HProfile HProfile::zero(int n, int s) {
  HProfile p;
  p.split = {n, s};
  p.h = [n, s](double) { return Tensor3({s, n, n}); };
  return p;
}

HProfile HProfile::constant(const Tensor3& h) {
  HProfile p;
  p.split = {h.extent(1), h.extent(0)};
  p.h = [h](double) { return h; };
  return p;
}

Vec Homotopy::velocity(double u, double t) const {
  if (dt) return dt(u, t);
  const double h = 1e-3;
  return (point(u, t - 2 * h) - 8.0 * point(u, t - h) + 8.0 * point(u, t + h) - point(u, t + 2 * h)) / (12.0 * h);
}

Vec Homotopy::acceleration(double u, double t) const {
  if (dtt) return dtt(u, t);
  const double h = 1e-3;
  if (dt) return (dt(u, t - 2 * h) - 8.0 * dt(u, t - h) + 8.0 * dt(u, t + h) - dt(u, t + 2 * h)) / (12.0 * h);
  return (-point(u, t - 2 * h) + 16.0 * point(u, t - h) - 30.0 * point(u, t) + 16.0 * point(u, t + h) -
          point(u, t + 2 * h)) /
         (12.0 * h * h);
}

CurvePath Homotopy::slice(double u) const {
  const Homotopy self = *this;
  return CurvePath::from_function(
      dim, [self, u](double t) { return self.point(u, t); }, [self, u](double t) { return self.velocity(u, t); });
}

double Development::max_gram_drift() const {
  double m = 0.0;
  for (const auto& f : frames) m = std::max(m, f.gram_drift);
  return m;
}

// --- solvers --------------------------------------------------------------

namespace {

Mat unpack_frame(const Vec& y, int offset, int rows, int cols) {
  return Eigen::Map<const Mat>(y.data() + offset, rows, cols);
}

void pack_frame(Vec& y, int offset, const Mat& frame) {
  Eigen::Map<Mat>(y.data() + offset, frame.rows(), frame.cols()) = frame;
}

void require_frame(const MetricField& metric, const Vec& p, const Mat& frame, int cols, const char* who) {
  const int n = metric.dim();
  if (p.size() != n) throw InvalidArgument(std::string(who) + ": base point dimension mismatch");
  if (frame.rows() != n || frame.cols() != cols) throw InvalidArgument(std::string(who) + ": frame shape mismatch");
  if (gram_drift(frame, metric.metric(p)) > 1e-8) throw InvalidArgument(std::string(who) + ": initial frame is not orthonormal");
}

FrameHygiene frame_hygiene(const MetricField& metric, int n, int cols, std::function<Vec(double, const Vec&)> position,
                           int frame_offset) {
  FrameHygiene hy;
  hy.drift = [&metric, n, cols, position, frame_offset](double t, const Vec& y) {
    return gram_drift(unpack_frame(y, frame_offset, n, cols), metric.metric_unchecked(position(t, y)));
  };
  hy.reorthonormalize = [&metric, n, cols, position, frame_offset](double t, Vec& y) {
    const Mat g = metric.metric_unchecked(position(t, y));
    pack_frame(y, frame_offset, reorthonormalize(unpack_frame(y, frame_offset, n, cols), g));
  };
  return hy;
}

Development collect(const MetricField& metric, const Trajectory& traj, int n, int cols, FrameSplit split,
                    const std::function<Vec(double, const Vec&)>& position, int frame_offset) {
  Development dev;
  dev.split = split;
  dev.reorthonormalizations = traj.reorthonormalizations;
  std::vector<Vec> points;
  points.reserve(traj.t.size());
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    FrameState fs;
    fs.t = traj.t[k];
    fs.x = position(fs.t, traj.y[k]);
    fs.frame = unpack_frame(traj.y[k], frame_offset, n, cols);
    fs.gram_drift = gram_drift(fs.frame, metric.metric_unchecked(fs.x));
    points.push_back(fs.x);
    dev.frames.push_back(std::move(fs));
  }
  std::vector<double> times = traj.t;
  if (times.size() >= 2) dev.curve = CurvePath(std::move(times), std::move(points));
  return dev;
}

std::function<bool(const Vec&)> position_inside(const MetricField& metric, int n) {
  return [&metric, n](const Vec& y) { return metric.domain().contains(y.head(n)); };
}

}  // namespace

Mat default_frame(const MetricField& metric, const Vec& p) {
  return reorthonormalize(Mat::Identity(metric.dim(), metric.dim()), metric.metric(p));
}

Development transport_frame(const MetricField& metric, const CurvePath& curve, const Mat& frame,
                            const IntegratorConfig& config) {
  const int n = metric.dim();
  const int cols = static_cast<int>(frame.cols());
  if (frame.rows() != n) throw InvalidArgument("transport: frame shape mismatch");
  metric.metric(curve.point(0.0));

  OdeRhs rhs = [&](double t, const Vec& y, Vec& dy) {
    const Vec x = curve.point(t);
    const Vec dx = curve.velocity(t);
    if (!metric.domain().contains(x)) {
      std::ostringstream os;
      os << "transport: curve leaves the chart domain at t=" << t;
      throw ChartExit(os.str(), t);
    }
    const Tensor3 gamma = christoffel_unchecked(metric, x);
    dy.resize(y.size());
    for (int c = 0; c < cols; ++c) dy.segment(c * n, n) = -contract_christoffel(gamma, dx, y.segment(c * n, n));
  };
  auto position = [&curve](double t, const Vec&) { return curve.point(t); };

  IvpOptions opts;
  opts.hygiene = frame_hygiene(metric, n, cols, position, 0);
  if (curve.is_sampled()) opts.output_grid = curve.times();
  Vec y0(n * cols);
  pack_frame(y0, 0, frame);
  const Trajectory traj = integrate_ivp(rhs, y0, 0.0, 1.0, config, opts);
  return collect(metric, traj, n, cols, {cols, 0}, position, 0);
}

Vec parallel_transport(const MetricField& metric, const CurvePath& curve, const Vec& w, double t0, double t1,
                       const IntegratorConfig& config) {
  const int n = metric.dim();
  if (w.size() != n) throw InvalidArgument("parallel_transport: vector dimension mismatch");
  if (t0 < 0.0 || t0 > 1.0 || t1 < 0.0 || t1 > 1.0) throw InvalidArgument("parallel_transport: times must lie in [0,1]");
  OdeRhs rhs = [&](double t, const Vec& y, Vec& dy) {
    const Vec x = curve.point(t);
    if (!metric.domain().contains(x)) {
      std::ostringstream os;
      os << "parallel_transport: curve leaves the chart domain at t=" << t;
      throw ChartExit(os.str(), t);
    }
    dy = -contract_christoffel(christoffel_unchecked(metric, x), curve.velocity(t), y);
  };
  IntegratorConfig cfg = config;
  cfg.reortho.kind = ReorthoPolicy::Kind::Never;
  return integrate_ivp(rhs, w, t0, t1, cfg).back();
}

Development develop(const MetricField& metric, const Vec& p, const Mat& frame, const VelocityProfile& v,
                    const IntegratorConfig& config) {
  const int n = metric.dim();
  require_frame(metric, p, frame, n, "develop");
  metric.require_inside(p);

  OdeRhs rhs = [&](double t, const Vec& y, Vec& dy) {
    const Vec x = y.head(n);
    const Mat E = unpack_frame(y, n, n, n);
    const Vec dx = E * v(t);
    const Tensor3 gamma = christoffel_unchecked(metric, x);
    dy.resize(y.size());
    dy.head(n) = dx;
    for (int c = 0; c < n; ++c) dy.segment(n + c * n, n) = -contract_christoffel(gamma, dx, E.col(c));
  };
  auto position = [n](double, const Vec& y) { return Vec(y.head(n)); };

  IvpOptions opts;
  opts.inside = position_inside(metric, n);
  opts.hygiene = frame_hygiene(metric, n, n, position, n);
  Vec y0(n + n * n);
  y0.head(n) = p;
  pack_frame(y0, n, frame);
  const Trajectory traj = integrate_ivp(rhs, y0, 0.0, 1.0, config, opts);
  return collect(metric, traj, n, n, {n, 0}, position, n);
}

VelocityProfile anti_develop(const MetricField& metric, const CurvePath& curve, const Mat& frame,
                             const IntegratorConfig& config) {
  const int n = metric.dim();
  if (curve.dim() != n) throw InvalidArgument("anti_develop: curve dimension mismatch");
  const Vec p = curve.point(0.0);
  const Mat E0 = frame.size() == 0 ? default_frame(metric, p) : frame;
  require_frame(metric, p, E0, n, "anti_develop");

  const Development dev = transport_frame(metric, curve, E0, config);
  std::vector<double> t;
  std::vector<Vec> v;
  for (const auto& fs : dev.frames) {
    const Mat g = metric.metric_unchecked(fs.x);
    t.push_back(fs.t);
    v.push_back(fs.frame.transpose() * g * curve.velocity(fs.t));
  }
  if (t.size() < 2) throw InvalidArgument("anti_develop: degenerate curve grid");
  VelocityProfile out = VelocityProfile::sampled(std::move(t), std::move(v));
  out.base = p;
  out.frame = E0;
  return out;
}

Development generalized_develop(const MetricField& metric, const Vec& p, const Mat& frame, const VelocityProfile& v,
                                const HProfile& h, const IntegratorConfig& config) {
  const int N = metric.dim();
  const int n = h.split.tangent_count;
  const int s = h.split.normal_count;
  if (n + s != N) throw InvalidArgument("generalized_develop: split does not match the target dimension");
  require_frame(metric, p, frame, N, "generalized_develop");
  metric.require_inside(p);

  OdeRhs rhs = [&](double t, const Vec& y, Vec& dy) {
    const Vec x = y.head(N);
    const Mat E = unpack_frame(y, N, N, N);
    const Vec vt = v(t);
    if (vt.size() != n) throw InvalidArgument("generalized_develop: velocity has wrong dimension");
    const Vec dx = E.leftCols(n) * vt;
    const Tensor3 ht = h(t);
    if (s > 0 && (ht.extent(0) != s || ht.extent(1) != n || ht.extent(2) != n))
      throw InvalidArgument("generalized_develop: h profile has wrong extents");
    const Tensor3 gamma = christoffel_unchecked(metric, x);
    dy.resize(y.size());
    dy.head(N) = dx;
    // omega(i, alpha) = <h(v, e_i), e_alpha>
    Mat omega = Mat::Zero(n, s);
    for (int al = 0; al < s; ++al)
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int b = 0; b < n; ++b) acc += ht(al, b, i) * vt[b];
        omega(i, al) = acc;
      }
    Mat dE(N, N);
    for (int A = 0; A < N; ++A) dE.col(A) = -contract_christoffel(gamma, dx, E.col(A));
    if (s > 0) {
      dE.leftCols(n) += E.rightCols(s) * omega.transpose();
      dE.rightCols(s) -= E.leftCols(n) * omega;
    }
    pack_frame(dy, N, dE);
  };
  auto position = [N](double, const Vec& y) { return Vec(y.head(N)); };

  IvpOptions opts;
  opts.inside = position_inside(metric, N);
  opts.hygiene = frame_hygiene(metric, N, N, position, N);
  Vec y0(N + N * N);
  y0.head(N) = p;
  pack_frame(y0, N, frame);
  const Trajectory traj = integrate_ivp(rhs, y0, 0.0, 1.0, config, opts);
  return collect(metric, traj, N, N, h.split, position, N);
}

Mat generalized_transport(const Development& history, double t) {
  if (history.frames.empty()) throw InvalidArgument("generalized_transport: empty history");
  const auto it = std::lower_bound(history.frames.begin(), history.frames.end(), t,
                                   [](const FrameState& fs, double value) { return fs.t < value - 1e-12; });
  if (it == history.frames.end() || std::abs(it->t - t) > 1e-12)
    throw InvalidArgument("generalized_transport: t is not a grid time");
  return it->frame * history.frames.front().frame.inverse();
}

}  // namespace cah
