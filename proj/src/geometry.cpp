#include "cah/geometry.hpp"

#include <cmath>
#include <sstream>

#include "cah/errors.hpp"
#include "cah/integrate.hpp"

namespace cah {

namespace {

std::string format_point(const Vec& x) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

constexpr double kStencil4[5] = {1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0};

}  // namespace

bool Box::contains(const Vec& x, double slack) const {
  if (x.size() != lo.size()) return false;
  for (int i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lo[i] - slack && x[i] <= hi[i] + slack)) return false;
  }
  return true;
}

Vec directional_derivative(const std::function<Vec(const Vec&)>& f, const Vec& x, const Vec& dir, double h) {
  Vec acc;
  for (int k = 0; k < 5; ++k) {
    if (kStencil4[k] == 0.0) continue;
    Vec val = f(x + (k - 2) * h * dir);
    if (acc.size() == 0) acc = Vec::Zero(val.size());
    acc += kStencil4[k] * val;
  }
  return acc / h;
}

// --- MetricField ---------------------------------------------------------

MetricField::MetricField(int dim, Box domain, MetricFn metric, std::string name)
    : dim_(dim), domain_(std::move(domain)), metric_(std::move(metric)), name_(std::move(name)) {
  if (dim_ < 1) throw InvalidArgument("metric: dimension must be >= 1");
  if (domain_.dim() != dim_ || domain_.hi.size() != dim_) throw InvalidArgument("metric: box dimension mismatch");
  fd_step_ = 1e-6 * std::max(domain_.diagonal(), 1e-12);
}

MetricField& MetricField::with_derivatives(FirstDerivativeFn first, SecondDerivativeFn second) {
  first_ = std::move(first);
  second_ = std::move(second);
  return *this;
}

MetricField& MetricField::with_fd_step(double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("metric: eps_fd must be > 0");
  fd_step_ = eps;
  return *this;
}

MetricField& MetricField::with_fd_step_second(double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("metric: second-derivative step must be > 0");
  fd_step_second_ = eps;
  return *this;
}

void MetricField::require_inside(const Vec& x) const {
  if (!domain_.contains(x)) throw OutOfDomain(name_ + ": point " + format_point(x) + " outside chart domain");
}

Mat MetricField::metric(const Vec& x) const {
  require_inside(x);
  Mat g = metric_(x);
  Eigen::LLT<Mat> llt(g);
  if (llt.info() != Eigen::Success || (g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()))
    throw NotPositiveDefinite(name_ + ": metric not symmetric positive definite at " + format_point(x));
  return g;
}

Tensor3 MetricField::first_derivatives(const Vec& x) const {
  if (first_) return first_(x);
  const int n = dim_;
  Tensor3 dg({n, n, n});
  for (int c = 0; c < n; ++c) {
    Vec e = Vec::Zero(n);
    e[c] = fd_step_;
    const Mat diff = (metric_(x + e) - metric_(x - e)) / (2.0 * fd_step_);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) dg(c, a, b) = diff(a, b);
  }
  return dg;
}

Tensor4 MetricField::second_derivatives(const Vec& x) const {
  if (second_) return second_(x);
  const int n = dim_;
  Tensor4 d2({n, n, n, n});
  const double h = fd_step_second_;
  if (first_) {
    // central differences of the analytic first derivatives
    for (int c = 0; c < n; ++c) {
      Vec e = Vec::Zero(n);
      e[c] = 1.0;
      std::vector<Tensor3> samples;
      Tensor3 acc({n, n, n});
      for (int k = 0; k < 5; ++k) {
        if (kStencil4[k] == 0.0) continue;
        const Tensor3 s = first_(x + (k - 2) * h * e);
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += kStencil4[k] * s.data()[i] / h;
      }
      for (int d = 0; d < n; ++d)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) d2(c, d, a, b) = acc(d, a, b);
    }
    // symmetrise in (c,d)
    for (int c = 0; c < n; ++c)
      for (int d = c + 1; d < n; ++d)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            const double m = 0.5 * (d2(c, d, a, b) + d2(d, c, a, b));
            d2(c, d, a, b) = m;
            d2(d, c, a, b) = m;
          }
    return d2;
  }
  const Mat g0 = metric_(x);
  for (int c = 0; c < n; ++c) {
    Vec ec = Vec::Zero(n);
    ec[c] = h;
    // pure second derivative, fourth order
    const Mat pure = (-metric_(x + 2 * ec) + 16.0 * metric_(x + ec) - 30.0 * g0 + 16.0 * metric_(x - ec) -
                      metric_(x - 2 * ec)) /
                     (12.0 * h * h);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) d2(c, c, a, b) = pure(a, b);
    for (int d = c + 1; d < n; ++d) {
      Vec ed = Vec::Zero(n);
      ed[d] = h;
      Mat mixed = Mat::Zero(n, n);
      for (int i = 0; i < 5; ++i) {
        if (kStencil4[i] == 0.0) continue;
        for (int j = 0; j < 5; ++j) {
          if (kStencil4[j] == 0.0) continue;
          mixed += kStencil4[i] * kStencil4[j] * metric_(x + (i - 2) * ec + (j - 2) * ed);
        }
      }
      mixed /= h * h;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          d2(c, d, a, b) = mixed(a, b);
          d2(d, c, a, b) = mixed(a, b);
        }
    }
  }
  return d2;
}

double inner(const Mat& g, const Vec& a, const Vec& b) { return a.dot(g * b); }

// --- Levi-Civita and curvature ---------------------------------------------

namespace {

// Gamma_{d,b,c} (first kind) from dg(c,a,b) = d_c g_ab.
Tensor3 first_kind(const Tensor3& dg, int n) {
  Tensor3 out({n, n, n});
  for (int d = 0; d < n; ++d)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) out(d, b, c) = 0.5 * (dg(b, d, c) + dg(c, d, b) - dg(d, b, c));
  return out;
}

Tensor3 raise_first(const Mat& ginv, const Tensor3& low, int n) {
  Tensor3 out({n, n, n});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += ginv(a, d) * low(d, b, c);
        out(a, b, c) = s;
      }
  return out;
}

struct ConnectionData {
  Mat g;
  Tensor3 gamma;   // (a,b,c)
  Tensor4 dgamma;  // (e,a,b,c) = d_e Gamma^a_bc
};

ConnectionData connection_with_derivative(const MetricField& metric, const Vec& x) {
  const int n = metric.dim();
  ConnectionData out;
  out.g = metric.metric_unchecked(x);
  const Mat ginv = out.g.inverse();
  const Tensor3 dg = metric.first_derivatives(x);
  const Tensor4 d2g = metric.second_derivatives(x);
  const Tensor3 low = first_kind(dg, n);
  out.gamma = raise_first(ginv, low, n);
  out.dgamma = Tensor4({n, n, n, n});
  for (int e = 0; e < n; ++e) {
    // d_e g^{ad} = -g^{ap} d_e g_pq g^{qd}
    Mat dge(n, n);
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) dge(p, q) = dg(e, p, q);
    const Mat dginv = -ginv * dge * ginv;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          double s = 0.0;
          for (int d = 0; d < n; ++d) {
            const double dlow = 0.5 * (d2g(e, b, d, c) + d2g(e, c, d, b) - d2g(e, d, b, c));
            s += dginv(a, d) * low(d, b, c) + ginv(a, d) * dlow;
          }
          out.dgamma(e, a, b, c) = s;
        }
  }
  return out;
}

Tensor4 riemann_from(const ConnectionData& cd, int n) {
  // R^e_{c a b} = d_a G^e_bc - d_b G^e_ac + G^e_af G^f_bc - G^e_bf G^f_ac
  Tensor4 up({n, n, n, n});  // (e,c,a,b)
  for (int e = 0; e < n; ++e)
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double s = cd.dgamma(a, e, b, c) - cd.dgamma(b, e, a, c);
          for (int f = 0; f < n; ++f) s += cd.gamma(e, a, f) * cd.gamma(f, b, c) - cd.gamma(e, b, f) * cd.gamma(f, a, c);
          up(e, c, a, b) = s;
        }
  Tensor4 rm({n, n, n, n});  // (a,b,c,d) = g_de R^e_cab
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          double s = 0.0;
          for (int e = 0; e < n; ++e) s += cd.g(d, e) * up(e, c, a, b);
          rm(a, b, c, d) = s;
        }
  return rm;
}

}  // namespace

Tensor3 christoffel_unchecked(const MetricField& metric, const Vec& x) {
  const int n = metric.dim();
  const Mat ginv = metric.metric_unchecked(x).inverse();
  return raise_first(ginv, first_kind(metric.first_derivatives(x), n), n);
}

Tensor3 christoffel(const MetricField& metric, const Vec& x) {
  metric.metric(x);  // domain and positivity
  return christoffel_unchecked(metric, x);
}

Vec contract_christoffel(const Tensor3& gamma, const Vec& X, const Vec& Y) {
  const int n = gamma.extent(0);
  Vec w = Vec::Zero(n);
  for (int a = 0; a < n; ++a) {
    double s = 0.0;
    for (int b = 0; b < n; ++b) {
      if (X[b] == 0.0) continue;
      for (int c = 0; c < n; ++c) s += gamma(a, b, c) * X[b] * Y[c];
    }
    w[a] = s;
  }
  return w;
}

Tensor4 riemann_unchecked(const MetricField& metric, const Vec& x) {
  return riemann_from(connection_with_derivative(metric, x), metric.dim());
}

Tensor4 riemann(const MetricField& metric, const Vec& x) {
  metric.metric(x);
  return riemann_unchecked(metric, x);
}

Tensor4 frame_components(const Tensor4& t, const Mat& frame) {
  const int n = t.extent(0);
  const int m = static_cast<int>(frame.cols());
  // contract one slot at a time
  Tensor4 a({m, n, n, n});
  for (int A = 0; A < m; ++A)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double s = 0.0;
          for (int i = 0; i < n; ++i) s += frame(i, A) * t(i, j, k, l);
          a(A, j, k, l) = s;
        }
  Tensor4 b({m, m, n, n});
  for (int A = 0; A < m; ++A)
    for (int B = 0; B < m; ++B)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += frame(j, B) * a(A, j, k, l);
          b(A, B, k, l) = s;
        }
  Tensor4 c({m, m, m, n});
  for (int A = 0; A < m; ++A)
    for (int B = 0; B < m; ++B)
      for (int C = 0; C < m; ++C)
        for (int l = 0; l < n; ++l) {
          double s = 0.0;
          for (int k = 0; k < n; ++k) s += frame(k, C) * b(A, B, k, l);
          c(A, B, C, l) = s;
        }
  Tensor4 out({m, m, m, m});
  for (int A = 0; A < m; ++A)
    for (int B = 0; B < m; ++B)
      for (int C = 0; C < m; ++C)
        for (int D = 0; D < m; ++D) {
          double s = 0.0;
          for (int l = 0; l < n; ++l) s += frame(l, D) * c(A, B, C, l);
          out(A, B, C, D) = s;
        }
  return out;
}

double sectional_curvature(const MetricField& metric, const Vec& x, const Vec& X, const Vec& Y) {
  const Tensor4 rm = riemann(metric, x);
  const Mat g = metric.metric(x);
  Mat frame(metric.dim(), 2);
  frame.col(0) = X;
  frame.col(1) = Y;
  const Tensor4 r = frame_components(rm, frame);
  const double area2 = inner(g, X, X) * inner(g, Y, Y) - std::pow(inner(g, X, Y), 2);
  if (!(area2 > 0.0)) throw InvalidArgument("sectional_curvature: X and Y are dependent");
  return r(0, 1, 1, 0) / area2;
}

// --- SubmanifoldSpec -------------------------------------------------------

SubmanifoldSpec::SubmanifoldSpec(MetricPtr ambient, int dim, Box parameters, EmbeddingFn embedding)
    : ambient_(std::move(ambient)), dim_(dim), parameters_(std::move(parameters)), embedding_(std::move(embedding)) {
  if (!ambient_) throw InvalidArgument("submanifold: ambient metric required");
  if (dim_ < 0 || dim_ >= ambient_->dim()) throw InvalidArgument("submanifold: need 0 <= r < n");
  if (parameters_.dim() != dim_) throw InvalidArgument("submanifold: parameter box dimension mismatch");
}

SubmanifoldSpec& SubmanifoldSpec::with_jacobian(JacobianFn jacobian) {
  jacobian_ = std::move(jacobian);
  return *this;
}

SubmanifoldSpec& SubmanifoldSpec::with_hessian(HessianFn hessian) {
  hessian_ = std::move(hessian);
  return *this;
}

Mat SubmanifoldSpec::jacobian(const Vec& u) const {
  const int n = ambient_->dim();
  Mat J(n, dim_);
  if (jacobian_) {
    J = jacobian_(u);
  } else {
    const double h = 1e-3;
    for (int i = 0; i < dim_; ++i) {
      Vec e = Vec::Zero(dim_);
      e[i] = 1.0;
      J.col(i) = directional_derivative(embedding_, u, e, h);
    }
  }
  if (dim_ > 0) {
    Eigen::JacobiSVD<Mat> svd(J);
    const auto& sv = svd.singularValues();
    if (!(sv.minCoeff() > 1e-10 * std::max(1.0, sv.maxCoeff())))
      throw RankDeficient("submanifold: embedding Jacobian is rank deficient at " + format_point(u));
  }
  return J;
}

Tensor3 SubmanifoldSpec::hessian(const Vec& u) const {
  if (hessian_) return hessian_(u);
  const int n = ambient_->dim();
  Tensor3 H({n, dim_, dim_});
  const double h = 1e-3;
  auto jac_col = [this](int j) {
    return [this, j](const Vec& p) -> Vec {
      if (jacobian_) return jacobian_(p).col(j);
      Vec e = Vec::Zero(dim_);
      e[j] = 1.0;
      return directional_derivative(embedding_, p, e, 1e-3);
    };
  };
  for (int i = 0; i < dim_; ++i) {
    Vec e = Vec::Zero(dim_);
    e[i] = 1.0;
    for (int j = 0; j < dim_; ++j) {
      const Vec d = directional_derivative(jac_col(j), u, e, h);
      for (int a = 0; a < n; ++a) H(a, i, j) = d[a];
    }
  }
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < dim_; ++i)
      for (int j = i + 1; j < dim_; ++j) {
        const double m = 0.5 * (H(a, i, j) + H(a, j, i));
        H(a, i, j) = m;
        H(a, j, i) = m;
      }
  return H;
}

Mat SubmanifoldSpec::adapted_frame(const Vec& u) const {
  const int n = ambient_->dim();
  const Vec x = point(u);
  const Mat g = ambient_->metric(x);
  const Mat J = jacobian(u);
  Mat frame(n, n);
  int filled = 0;
  auto push = [&](Vec v) {
    for (int j = 0; j < filled; ++j) v -= inner(g, frame.col(j), v) * frame.col(j);
    for (int j = 0; j < filled; ++j) v -= inner(g, frame.col(j), v) * frame.col(j);
    const double norm = std::sqrt(inner(g, v, v));
    if (norm < 1e-8) return false;
    frame.col(filled++) = v / norm;
    return true;
  };
  for (int i = 0; i < dim_; ++i) {
    if (!push(J.col(i))) throw RankDeficient("submanifold: dependent tangent vectors");
  }
  for (int a = 0; a < n && filled < n; ++a) push(Vec::Unit(n, a));
  return frame;
}

Mat SubmanifoldSpec::normal_projector(const Vec& u) const {
  const int n = ambient_->dim();
  const Mat g = ambient_->metric(point(u));
  if (dim_ == 0) return Mat::Identity(n, n);
  const Mat J = jacobian(u);
  const Mat induced = J.transpose() * g * J;
  return Mat::Identity(n, n) - J * induced.ldlt().solve(J.transpose() * g);
}

Vec SubmanifoldSpec::tangent_parameters(const Vec& u, const Vec& X) const {
  const Mat g = ambient_->metric(point(u));
  const Mat J = jacobian(u);
  return (J.transpose() * g * J).ldlt().solve(J.transpose() * g * X);
}

Vec SubmanifoldSpec::project(const Vec& x) const {
  if (dim_ == 0) return Vec(0);
  // coarse scan over the parameter box
  const int per_dim = dim_ == 1 ? 257 : (dim_ == 2 ? 33 : 9);
  Vec best = 0.5 * (parameters_.lo + parameters_.hi);
  double best_d = (point(best) - x).squaredNorm();
  std::vector<int> idx(dim_, 0);
  while (true) {
    Vec u(dim_);
    for (int i = 0; i < dim_; ++i)
      u[i] = parameters_.lo[i] + (parameters_.hi[i] - parameters_.lo[i]) * idx[i] / (per_dim - 1.0);
    const double d = (point(u) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = u;
    }
    int k = 0;
    while (k < dim_ && ++idx[k] == per_dim) idx[k++] = 0;
    if (k == dim_) break;
  }
  // Gauss-Newton on |x(u) - x|^2
  Vec u = best;
  for (int it = 0; it < 100; ++it) {
    const Vec r = point(u) - x;
    const Mat J = jacobian(u);
    const Vec step = (J.transpose() * J).ldlt().solve(-J.transpose() * r);
    Vec next = parameters_.clamp(u + step);
    double lambda = 1.0;
    while ((point(next) - x).squaredNorm() > r.squaredNorm() && lambda > 1e-6) {
      lambda *= 0.5;
      next = parameters_.clamp(u + lambda * step);
    }
    const double moved = (next - u).norm();
    u = next;
    if (moved < 1e-15 * std::max(1.0, u.norm())) break;
  }
  return u;
}

Vec SubmanifoldSpec::snap(const Vec& x, double tolerance) const {
  const Vec u = project(x);
  const double d = (point(u) - x).norm();
  if (d > tolerance) {
    std::ostringstream os;
    os << "point " << format_point(x) << " is " << d << " from the submanifold (snap tolerance " << tolerance << ")";
    throw InvalidArgument(os.str());
  }
  return u;
}

Vec second_fundamental_form(const SubmanifoldSpec& sub, const Vec& u, const Vec& a, const Vec& b) {
  const int n = sub.ambient().dim();
  const Vec x = sub.point(u);
  const Mat J = sub.jacobian(u);
  const Tensor3 H = sub.hessian(u);
  const Tensor3 gamma = christoffel(sub.ambient(), x);
  Vec acc = contract_christoffel(gamma, J * a, J * b);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < sub.dim(); ++i)
      for (int j = 0; j < sub.dim(); ++j) acc[k] += H(k, i, j) * a[i] * b[j];
  return sub.normal_projector(u) * acc;
}

// --- BundleData -----------------------------------------------------------

BundleData::BundleData(MetricPtr base, int rank, FiberMetricFn fiber_metric, ConnectionFn connection, TensorFn h)
    : base_(std::move(base)),
      rank_(rank),
      fiber_metric_(std::move(fiber_metric)),
      connection_(std::move(connection)),
      h_(std::move(h)) {
  if (!base_) throw InvalidArgument("bundle: base metric required");
  if (rank_ < 0) throw InvalidArgument("bundle: rank must be >= 0");
}

BundleData BundleData::flat(MetricPtr base, int rank, TensorFn h) {
  const int n = base->dim();
  return BundleData(
      base, rank, [rank](const Vec&) { return Mat(Mat::Identity(rank, rank)); },
      [n, rank](const Vec&) { return Tensor3({n, rank, rank}); }, std::move(h))
      .with_connection_derivative([n, rank](const Vec&) { return Tensor4({n, n, rank, rank}); });
}

BundleData& BundleData::with_connection_derivative(ConnectionDerivativeFn d) {
  connection_derivative_ = std::move(d);
  return *this;
}

BundleData& BundleData::with_h_derivative(TensorDerivativeFn d) {
  h_derivative_ = std::move(d);
  return *this;
}

Tensor4 BundleData::connection_derivative(const Vec& x) const {
  if (connection_derivative_) return connection_derivative_(x);
  const int n = base_->dim();
  const int s = rank_;
  Tensor4 out({n, n, s, s});
  const double h = base_->fd_step();
  for (int d = 0; d < n; ++d) {
    Vec e = Vec::Zero(n);
    e[d] = h;
    const Tensor3 p = connection_(x + e);
    const Tensor3 m = connection_(x - e);
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < s; ++a)
        for (int b = 0; b < s; ++b) out(d, c, a, b) = (p(c, a, b) - m(c, a, b)) / (2.0 * h);
  }
  return out;
}

Tensor4 BundleData::h_derivative(const Vec& x) const {
  if (h_derivative_) return h_derivative_(x);
  const int n = base_->dim();
  const int s = rank_;
  Tensor4 out({n, s, n, n});
  const double h = base_->fd_step();
  for (int c = 0; c < n; ++c) {
    Vec e = Vec::Zero(n);
    e[c] = h;
    const Tensor3 p = h_(x + e);
    const Tensor3 m = h_(x - e);
    for (int al = 0; al < s; ++al)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) out(c, al, a, b) = (p(al, a, b) - m(al, a, b)) / (2.0 * h);
  }
  return out;
}

Vec BundleData::h_apply(const Tensor3& h, const Vec& X, const Vec& Y) const {
  const int n = base_->dim();
  Vec out = Vec::Zero(rank_);
  for (int al = 0; al < rank_; ++al) {
    double s = 0.0;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) s += h(al, a, b) * X[a] * Y[b];
    out[al] = s;
  }
  return out;
}

Tensor4 BundleData::curvature(const Vec& x) const {
  const int n = base_->dim();
  const int s = rank_;
  const Tensor3 A = connection(x);
  const Tensor4 dA = connection_derivative(x);
  Tensor4 out({n, n, s, s});
  for (int c = 0; c < n; ++c)
    for (int d = 0; d < n; ++d)
      for (int al = 0; al < s; ++al)
        for (int be = 0; be < s; ++be) {
          double v = dA(c, d, al, be) - dA(d, c, al, be);
          for (int ga = 0; ga < s; ++ga) v += A(c, al, ga) * A(d, ga, be) - A(d, al, ga) * A(c, ga, be);
          out(c, d, al, be) = v;
        }
  return out;
}

Tensor4 BundleData::h_covariant_derivative(const Vec& x) const {
  const int n = base_->dim();
  const int s = rank_;
  const Tensor3 hx = h(x);
  const Tensor4 dh = h_derivative(x);
  const Tensor3 A = connection(x);
  const Tensor3 gamma = christoffel_unchecked(*base_, x);
  Tensor4 out({n, s, n, n});
  for (int c = 0; c < n; ++c)
    for (int al = 0; al < s; ++al)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double v = dh(c, al, a, b);
          for (int be = 0; be < s; ++be) v += A(c, al, be) * hx(be, a, b);
          for (int d = 0; d < n; ++d) v -= gamma(d, c, a) * hx(al, d, b) + gamma(d, c, b) * hx(al, a, d);
          out(c, al, a, b) = v;
        }
  return out;
}

double BundleData::symmetry_residual(const Vec& x) const {
  const Tensor3 hx = h(x);
  const int n = base_->dim();
  double r = 0.0;
  for (int al = 0; al < rank_; ++al)
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) r = std::max(r, std::abs(hx(al, a, b) - hx(al, b, a)));
  return r;
}

double BundleData::compatibility_residual(const Vec& x) const {
  const int n = base_->dim();
  const int s = rank_;
  const Tensor3 A = connection(x);
  const double h = base_->fd_step();
  double r = 0.0;
  for (int c = 0; c < n; ++c) {
    Vec e = Vec::Zero(n);
    e[c] = h;
    const Mat dfib = (fiber_metric_(x + e) - fiber_metric_(x - e)) / (2.0 * h);
    const Mat fib = fiber_metric_(x);
    Mat Ac(s, s);
    for (int a = 0; a < s; ++a)
      for (int b = 0; b < s; ++b) Ac(a, b) = A(c, a, b);
    const Mat rhs = Ac.transpose() * fib + fib * Ac;
    if (s > 0) r = std::max(r, (dfib - rhs).cwiseAbs().maxCoeff());
  }
  return r;
}

Mat BundleData::orthonormal_fiber_frame(const Vec& x) const {
  if (rank_ == 0) return Mat(0, 0);
  return reorthonormalize(Mat::Identity(rank_, rank_), fiber_metric(x));
}

Mat shape_operator(const BundleData& bundle, const Vec& x, const Vec& eta) {
  const int n = bundle.base().dim();
  const Mat g = bundle.base().metric(x);
  const Tensor3 hx = bundle.h(x);
  const Vec eta_low = bundle.fiber_metric(x) * eta;
  Mat H = Mat::Zero(n, n);
  for (int al = 0; al < bundle.rank(); ++al)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) H(a, b) += hx(al, a, b) * eta_low[al];
  return g.ldlt().solve(H);
}

// --- direct-sum connection --------------------------------------------------

DirectSumVector DirectSumSection::at(const Vec& u) const {
  DirectSumVector v;
  v.normal = normal(u);
  v.fiber = fiber ? fiber(u) : Vec(0);
  return v;
}

DirectSumVector direct_sum_connection(const SubmanifoldSpec& sub, const BundleData* bundle, const Vec& u,
                                      const Vec& a, const DirectSumSection& section) {
  const MetricField& M = sub.ambient();
  const int s = bundle ? bundle->rank() : 0;
  const Vec x = sub.point(u);
  const Mat g = M.metric(x);
  const Mat J = sub.jacobian(u);
  const Mat P = sub.normal_projector(u);
  const Vec X = J * a;
  const DirectSumVector here = section.at(u);

  const Vec tangential = here.normal - P * here.normal;
  if (std::sqrt(std::max(0.0, inner(g, tangential, tangential))) > 1e-8 * (1.0 + here.normal.norm()))
    throw InvalidArgument("direct_sum_connection: section is not normal to S");
  if (here.fiber.size() != s) throw InvalidArgument("direct_sum_connection: fiber dimension mismatch");

  const double h = 1e-4;
  const Vec dxi = directional_derivative(section.normal, u, a, h);
  const Tensor3 gamma = christoffel(M, x);

  DirectSumVector out;
  out.normal = P * (dxi + contract_christoffel(gamma, X, here.normal));
  out.fiber = Vec::Zero(s);
  if (s > 0) {
    const Tensor3 hx = bundle->h(x);
    out.fiber += bundle->h_apply(hx, X, here.normal);
    const Vec deta = directional_derivative(section.fiber, u, a, h);
    const Tensor3 A = bundle->connection(x);
    Vec conn = deta;
    for (int al = 0; al < s; ++al)
      for (int be = 0; be < s; ++be)
        for (int c = 0; c < M.dim(); ++c) conn[al] += X[c] * A(c, al, be) * here.fiber[be];
    out.fiber += conn;
    out.normal -= P * (shape_operator(*bundle, x, here.fiber) * X);
  }
  return out;
}

double direct_sum_inner(const SubmanifoldSpec& sub, const BundleData* bundle, const Vec& u, const DirectSumVector& p,
                        const DirectSumVector& q) {
  const Vec x = sub.point(u);
  double v = inner(sub.ambient().metric(x), p.normal, q.normal);
  if (bundle && bundle->rank() > 0) v += inner(bundle->fiber_metric(x), p.fiber, q.fiber);
  return v;
}

}  // namespace cah
