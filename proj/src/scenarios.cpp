#include "cah/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cah/errors.hpp"

namespace cah::scenarios {

namespace {

constexpr double kPi = std::numbers::pi;

Box cube(int dim, double half_width) {
  return Box{Vec::Constant(dim, -half_width), Vec::Constant(dim, half_width)};
}

Box box2(double a0, double b0, double a1, double b1) {
  Box b{Vec(2), Vec(2)};
  b.lo << a0, a1;
  b.hi << b0, b1;
  return b;
}

Box interval(double lo, double hi) { return Box{Vec::Constant(1, lo), Vec::Constant(1, hi)}; }

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Mat rotation_x(double beta) {
  Mat R = Mat::Identity(3, 3);
  R(1, 1) = std::cos(beta);
  R(1, 2) = -std::sin(beta);
  R(2, 1) = std::sin(beta);
  R(2, 2) = std::cos(beta);
  return R;
}

// Columns d/dtheta and d/dphi of the unit embedding.
Mat embedding_jacobian(const Vec& p) {
  const double th = p[0], ph = p[1];
  Mat J(3, 2);
  J.col(0) = vec3(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th));
  J.col(1) = vec3(-std::sin(th) * std::sin(ph), std::sin(th) * std::cos(ph), 0.0);
  return J;
}

// Chart differential at the chart point p of the unit sphere, acting on tangent 3-vectors.
Mat chart_differential(const Vec& p) {
  const double th = p[0], ph = p[1];
  Mat D(2, 3);
  D.row(0) = vec3(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th)).transpose();
  D.row(1) = (vec3(-std::sin(ph), std::cos(ph), 0.0) / std::sin(th)).transpose();
  return D;
}

// Chart coordinates of the unit vector y, with phi continued from phi_ref.
Vec chart_of(const Vec& y, double phi_ref) {
  const double Re = std::cos(phi_ref) * y[0] + std::sin(phi_ref) * y[1];
  const double Im = std::sin(phi_ref) * y[0] - std::cos(phi_ref) * y[1];
  return vec2(std::acos(std::clamp(y[2], -1.0, 1.0)), phi_ref - std::atan2(Im, Re));
}

MetricPtr share(MetricField m) { return std::make_shared<const MetricField>(std::move(m)); }

}  // namespace

MetricPtr euclidean(int dim, double half_width, DerivativeMode mode) {
  MetricField m(dim, cube(dim, half_width), [dim](const Vec&) { return Mat(Mat::Identity(dim, dim)); },
                "euclidean" + std::to_string(dim));
  if (mode == DerivativeMode::Analytic)
    m.with_derivatives([dim](const Vec&) { return Tensor3({dim, dim, dim}); },
                       [dim](const Vec&) { return Tensor4({dim, dim, dim, dim}); });
  return share(std::move(m));
}

MetricPtr sphere(double radius, double theta_margin, DerivativeMode mode) {
  if (!(radius > 0.0) || !(theta_margin > 0.0) || theta_margin >= kPi / 2)
    throw InvalidArgument("sphere: radius > 0 and margin in (0, pi/2) required");
  const double r2 = radius * radius;
  std::ostringstream name;
  name << "sphere(r=" << radius << ")";
  MetricField m(
      2, box2(theta_margin, kPi - theta_margin, -4 * kPi, 4 * kPi),
      [r2](const Vec& x) {
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = r2;
        g(1, 1) = r2 * std::sin(x[0]) * std::sin(x[0]);
        return g;
      },
      name.str());
  if (mode == DerivativeMode::Analytic)
    m.with_derivatives(
        [r2](const Vec& x) {
          Tensor3 d({2, 2, 2});
          d(0, 1, 1) = r2 * std::sin(2 * x[0]);
          return d;
        },
        [r2](const Vec& x) {
          Tensor4 d({2, 2, 2, 2});
          d(0, 0, 1, 1) = 2 * r2 * std::cos(2 * x[0]);
          return d;
        });
  return share(std::move(m));
}

MetricPtr hyperbolic_half_plane(DerivativeMode mode) {
  MetricField m(
      2, box2(-10, 10, 0.05, 20), [](const Vec& x) { return Mat(Mat::Identity(2, 2) / (x[1] * x[1])); },
      "hyperbolic_half_plane");
  if (mode == DerivativeMode::Analytic)
    m.with_derivatives(
        [](const Vec& x) {
          Tensor3 d({2, 2, 2});
          const double v = -2.0 / (x[1] * x[1] * x[1]);
          d(1, 0, 0) = v;
          d(1, 1, 1) = v;
          return d;
        },
        [](const Vec& x) {
          Tensor4 d({2, 2, 2, 2});
          const double v = 6.0 / (x[1] * x[1] * x[1] * x[1]);
          d(1, 1, 0, 0) = v;
          d(1, 1, 1, 1) = v;
          return d;
        });
  return share(std::move(m));
}

MetricPtr flat_strip() {
  MetricField m(2, box2(-10, 10, -1, 5), [](const Vec&) { return Mat(Mat::Identity(2, 2)); }, "flat_strip");
  m.with_derivatives([](const Vec&) { return Tensor3({2, 2, 2}); }, [](const Vec&) { return Tensor4({2, 2, 2, 2}); });
  return share(std::move(m));
}

std::shared_ptr<SubmanifoldSpec> latitude(MetricPtr sphere_metric, double theta0) {
  auto S = std::make_shared<SubmanifoldSpec>(sphere_metric, 1, interval(-kPi, kPi),
                                             [theta0](const Vec& u) { return vec2(theta0, u[0]); });
  S->with_jacobian([](const Vec&) { return Mat(vec2(0.0, 1.0)); });
  S->with_hessian([](const Vec&) { return Tensor3({2, 1, 1}); });
  return S;
}

std::shared_ptr<SubmanifoldSpec> equator(MetricPtr sphere_metric) { return latitude(sphere_metric, kPi / 2); }

std::shared_ptr<SubmanifoldSpec> tilted_equator(MetricPtr sphere_metric, double beta) {
  const Mat R = rotation_x(beta);
  auto S = std::make_shared<SubmanifoldSpec>(sphere_metric, 1, interval(-kPi, kPi), [R](const Vec& u) {
    return chart_of(R * vec3(std::cos(u[0]), std::sin(u[0]), 0.0), u[0]);
  });
  S->with_jacobian([R](const Vec& u) {
    const Vec p = chart_of(R * vec3(std::cos(u[0]), std::sin(u[0]), 0.0), u[0]);
    return Mat(chart_differential(p) * R * vec3(-std::sin(u[0]), std::cos(u[0]), 0.0));
  });
  return S;
}

std::shared_ptr<SubmanifoldSpec> horizontal_line(MetricPtr plane, double height, double half_length) {
  auto S = std::make_shared<SubmanifoldSpec>(plane, 1, interval(-half_length, half_length),
                                             [height](const Vec& u) { return vec2(u[0], height); });
  S->with_jacobian([](const Vec&) { return Mat(vec2(1.0, 0.0)); });
  S->with_hessian([](const Vec&) { return Tensor3({2, 1, 1}); });
  return S;
}

std::shared_ptr<SubmanifoldSpec> rotated_line(MetricPtr plane, double beta, double half_length) {
  const Vec d = vec2(std::cos(beta), std::sin(beta));
  auto S = std::make_shared<SubmanifoldSpec>(plane, 1, interval(-half_length, half_length),
                                             [d](const Vec& u) { return Vec(u[0] * d); });
  S->with_jacobian([d](const Vec&) { return Mat(d); });
  S->with_hessian([](const Vec&) { return Tensor3({2, 1, 1}); });
  return S;
}

std::shared_ptr<SubmanifoldSpec> planar_circle(MetricPtr space, double radius) {
  const int N = space->dim();
  if (N < 2) throw InvalidArgument("planar_circle: ambient dimension must be at least 2");
  auto S = std::make_shared<SubmanifoldSpec>(space, 1, interval(-kPi, kPi), [N, radius](const Vec& u) {
    Vec x = Vec::Zero(N);
    x[0] = radius * std::cos(u[0]);
    x[1] = radius * std::sin(u[0]);
    return x;
  });
  S->with_jacobian([N, radius](const Vec& u) {
    Mat J = Mat::Zero(N, 1);
    J(0, 0) = -radius * std::sin(u[0]);
    J(1, 0) = radius * std::cos(u[0]);
    return J;
  });
  S->with_hessian([N, radius](const Vec& u) {
    Tensor3 H({N, 1, 1});
    H(0, 0, 0) = -radius * std::cos(u[0]);
    H(1, 0, 0) = -radius * std::sin(u[0]);
    return H;
  });
  return S;
}

std::shared_ptr<SubmanifoldSpec> axis_line(MetricPtr space, double half_length) {
  const int N = space->dim();
  auto S = std::make_shared<SubmanifoldSpec>(space, 1, interval(-half_length, half_length), [N](const Vec& u) {
    Vec x = Vec::Zero(N);
    x[0] = u[0];
    return x;
  });
  S->with_jacobian([N](const Vec&) {
    Mat J = Mat::Zero(N, 1);
    J(0, 0) = 1.0;
    return J;
  });
  S->with_hessian([N](const Vec&) { return Tensor3({N, 1, 1}); });
  return S;
}

std::shared_ptr<BundleData> sphere_normal_data(MetricPtr sphere_metric, double radius, double scale, double bump) {
  const MetricPtr base = sphere_metric;
  auto h = [base, radius, scale, bump](const Vec& x) {
    const Mat g = base->metric_unchecked(x);
    const double c = (scale + bump * std::cos(x[0])) / radius;
    Tensor3 t({1, 2, 2});
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) t(0, a, b) = c * g(a, b);
    return t;
  };
  auto V = std::make_shared<BundleData>(BundleData::flat(sphere_metric, 1, h));
  const double r2 = radius * radius;
  V->with_h_derivative([r2, radius, scale, bump](const Vec& x) {
    const double th = x[0];
    const double c = (scale + bump * std::cos(th)) / radius;
    const double dc = -bump * std::sin(th) / radius;
    const double gpp = r2 * std::sin(th) * std::sin(th);
    Tensor4 d({2, 1, 2, 2});
    d(0, 0, 0, 0) = dc * r2;
    d(0, 0, 1, 1) = dc * gpp + c * r2 * std::sin(2 * th);
    return d;
  });
  return V;
}

std::shared_ptr<BundleData> flat_rank2_ricci_data(MetricPtr plane, double kappa) {
  auto connection = [kappa](const Vec& x) {
    Tensor3 A({2, 2, 2});
    A(1, 0, 1) = -kappa * x[0];
    A(1, 1, 0) = kappa * x[0];
    return A;
  };
  auto h = [](const Vec&) {
    Tensor3 t({2, 2, 2});
    t(0, 0, 0) = 1.0;
    t(0, 1, 1) = -1.0;
    t(1, 0, 1) = 1.0;
    t(1, 1, 0) = 1.0;
    return t;
  };
  auto V = std::make_shared<BundleData>(plane, 2, [](const Vec&) { return Mat(Mat::Identity(2, 2)); }, connection, h);
  V->with_connection_derivative([kappa](const Vec&) {
    Tensor4 d({2, 2, 2, 2});
    d(0, 1, 0, 1) = -kappa;
    d(0, 1, 1, 0) = kappa;
    return d;
  });
  V->with_h_derivative([](const Vec&) { return Tensor4({2, 2, 2, 2}); });
  return V;
}

namespace {

BundleMaps identity_maps(int n) {
  BundleMaps m;
  m.phi = [](const Vec& u) { return u; };
  m.phi_jacobian = [](const Vec& u) { return Mat(Mat::Identity(u.size(), u.size())); };
  m.psi_normal = [n](const Vec&) { return Mat(Mat::Identity(n, n)); };
  return m;
}

CahProblem identity_problem(std::string name, std::shared_ptr<SubmanifoldSpec> S, CahMode mode) {
  CahProblem p;
  p.name = std::move(name);
  p.mode = mode;
  p.source = S;
  p.target = S;
  p.maps = identity_maps(S->ambient().dim());
  return p;
}

}  // namespace

CahProblem identity_sphere() { return identity_problem("identity_sphere", equator(sphere()), CahMode::Isometry); }

CahProblem identity_flat() {
  return identity_problem("identity_flat", horizontal_line(euclidean(2)), CahMode::Isometry);
}

CahProblem identity_halfplane(CahMode mode) {
  return identity_problem("identity_halfplane", horizontal_line(flat_strip()), mode);
}

CahProblem identity_hyperbolic() {
  return identity_problem("identity_hyperbolic", horizontal_line(hyperbolic_half_plane(), 1.0), CahMode::Isometry);
}

CahProblem rotation_sphere(double beta) {
  const MetricPtr M = sphere();
  CahProblem p;
  p.name = "rotation_sphere";
  p.source = equator(M);
  p.target = tilted_equator(M, beta);
  p.maps.phi = [](const Vec& u) { return u; };
  p.maps.phi_jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
  p.maps.psi_normal = [beta](const Vec& u) { return oracle_rotation_jacobian(vec2(kPi / 2, u[0]), beta); };
  return p;
}

CahProblem flat_rotation(double beta) {
  const MetricPtr M = euclidean(2);
  CahProblem p;
  p.name = "flat_rotation";
  p.source = horizontal_line(M);
  p.target = rotated_line(M, beta);
  p.maps.phi = [](const Vec& u) { return u; };
  p.maps.phi_jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
  Mat R(2, 2);
  R << std::cos(beta), -std::sin(beta), std::sin(beta), std::cos(beta);
  p.maps.psi_normal = [R](const Vec&) { return R; };
  return p;
}

CahProblem radius_mismatch(double radius) {
  CahProblem p;
  p.name = "radius_mismatch";
  p.source = equator(sphere());
  p.target = equator(sphere(radius));
  p.maps.phi = [radius](const Vec& u) { return Vec(u / radius); };
  p.maps.phi_jacobian = [radius](const Vec&) { return Mat(Mat::Identity(1, 1) / radius); };
  p.maps.psi_normal = [radius](const Vec&) { return Mat(Mat::Identity(2, 2) / radius); };
  return p;
}

CahProblem flattened_target(double factor) {
  if (!(factor > 0.0)) throw InvalidArgument("flattened_target: factor must be positive");
  CahProblem p = radius_mismatch(1.0 / std::sqrt(factor));
  p.name = "flattened_target";
  return p;
}

CahProblem sphere_into_r3(double h_scale, double psi_scale, double bump, CahMode mode) {
  const MetricPtr M = sphere();
  const MetricPtr E = euclidean(3, 3.0);
  CahProblem p;
  p.name = "sphere_into_r3";
  p.mode = mode;
  p.source = equator(M);
  p.bundle = sphere_normal_data(M, 1.0, h_scale, bump);
  p.target = planar_circle(E);
  p.maps.phi = [](const Vec& u) { return u; };
  p.maps.phi_jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
  p.maps.psi_normal = [psi_scale](const Vec& u) { return Mat(psi_scale * embedding_jacobian(vec2(kPi / 2, u[0]))); };
  p.maps.psi_fiber = [psi_scale](const Vec& u) {
    return Mat(-psi_scale * vec3(std::cos(u[0]), std::sin(u[0]), 0.0));
  };
  return p;
}

CahProblem flat_rank2_ricci(double kappa) {
  const MetricPtr M = euclidean(2, 2.0);
  const MetricPtr E = euclidean(4, 4.0);
  CahProblem p;
  p.name = "flat_rank2_ricci";
  p.mode = CahMode::Immersion;
  p.source = horizontal_line(M, 0.0, 1.0);
  p.bundle = flat_rank2_ricci_data(M, kappa);
  p.target = axis_line(E);
  p.maps.phi = [](const Vec& u) { return u; };
  p.maps.phi_jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
  p.maps.psi_normal = [](const Vec&) {
    Mat P = Mat::Zero(4, 2);
    P(0, 0) = 1.0;
    P(1, 1) = 1.0;
    return P;
  };
  p.maps.psi_fiber = [](const Vec&) {
    Mat P = Mat::Zero(4, 2);
    P(2, 0) = 1.0;
    P(3, 1) = 1.0;
    return P;
  };
  return p;
}

std::vector<std::string> problem_names() {
  return {"identity_sphere",  "identity_flat",  "identity_halfplane", "identity_hyperbolic",
          "rotation_sphere",  "flat_rotation",  "radius_mismatch",    "flattened_target",
          "sphere_into_r3",   "flat_rank2_ricci"};
}

double oracle_holonomy_sphere(double theta0) {
  if (!(theta0 > 0.0 && theta0 < kPi)) throw InvalidArgument("oracle_holonomy_sphere: theta0 must lie in (0, pi)");
  return 2 * kPi * (1 - std::cos(theta0));
}

Vec oracle_geodesic(const MetricField& metric, const Vec& p, const Vec& w, double t) {
  const int n = metric.dim();
  const int steps = std::max(1, static_cast<int>(std::ceil(4000 * std::abs(t))));
  const double dt = t / steps;
  auto f = [&](const Vec& y) {
    const Vec x = y.head(n), v = y.tail(n);
    if (!metric.domain().contains(x)) throw ChartExit("oracle_geodesic: left the chart", 0.0);
    const Tensor3 G = christoffel(metric, x);
    Vec out(2 * n);
    out.head(n) = v;
    for (int a = 0; a < n; ++a) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) acc += G(a, b, c) * v[b] * v[c];
      out[n + a] = -acc;
    }
    return out;
  };
  Vec y(2 * n);
  y << p, w;
  for (int k = 0; k < steps; ++k) {
    try {
      const Vec k1 = f(y);
      const Vec k2 = f(y + 0.5 * dt * k1);
      const Vec k3 = f(y + 0.5 * dt * k2);
      const Vec k4 = f(y + dt * k3);
      y += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    } catch (const ChartExit&) {
      throw ChartExit("oracle_geodesic: left the chart", k * dt);
    }
  }
  return y.head(n);
}

Vec sphere_geodesic_closed_form(const Vec& p, const Vec& w, double t) {
  const Vec P = oracle_sphere_embedding(p);
  const Vec W = embedding_jacobian(p) * w;
  const double speed = W.norm();
  if (speed == 0.0) return P;
  return std::cos(speed * t) * P + std::sin(speed * t) * W / speed;
}

Vec oracle_sphere_embedding(const Vec& chart_point, double radius) {
  const double th = chart_point[0], ph = chart_point[1];
  return radius * vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
}

Vec oracle_rotation_chart(const Vec& chart_point, double beta) {
  return chart_of(rotation_x(beta) * oracle_sphere_embedding(chart_point), chart_point[1]);
}

Mat oracle_rotation_jacobian(const Vec& chart_point, double beta) {
  const Vec q = oracle_rotation_chart(chart_point, beta);
  return chart_differential(q) * rotation_x(beta) * embedding_jacobian(chart_point);
}

}  // namespace cah::scenarios
