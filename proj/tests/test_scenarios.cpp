#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cah/compat.hpp"
#include "cah/errors.hpp"
#include "cah/random.hpp"
#include "cah/scenarios.hpp"

using namespace cah;
namespace sc = cah::scenarios;
using std::numbers::pi;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

// Hand-written latitude transport: w_theta' = sin cos phi' w_phi, w_phi' = -cot phi' w_theta,
// classical RK4 with 10^4 steps over one eastward loop.
double latitude_rotation(double theta0) {
  const double s = std::sin(theta0), c = std::cos(theta0), dphi = 2 * pi;
  auto f = [&](const Vec& w) { return v2(s * c * dphi * w[1], -(c / s) * dphi * w[0]); };
  Vec w = v2(1.0, 0.0);
  const int steps = 10000;
  const double h = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const Vec k1 = f(w), k2 = f(w + 0.5 * h * k1), k3 = f(w + 0.5 * h * k2), k4 = f(w + h * k3);
    w += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return std::atan2(w[1] * s, w[0]);
}

}  // namespace

TEST_CASE("holonomy oracle values") {
  CHECK(sc::oracle_holonomy_sphere(pi / 2) == doctest::Approx(2 * pi));
  CHECK(std::abs(std::remainder(sc::oracle_holonomy_sphere(pi / 2), 2 * pi)) < 1e-12);
  CHECK(sc::oracle_holonomy_sphere(pi / 3) == doctest::Approx(pi).epsilon(1e-14));
  CHECK(sc::oracle_holonomy_sphere(1e-6) < 1e-10);
  CHECK_THROWS_AS(sc::oracle_holonomy_sphere(0.0), InvalidArgument);
  CHECK_THROWS_AS(sc::oracle_holonomy_sphere(pi), InvalidArgument);
  for (double theta0 : {pi / 6, pi / 4, pi / 3, 1.2}) {
    CAPTURE(theta0);
    CHECK(std::abs(std::remainder(latitude_rotation(theta0) - sc::oracle_holonomy_sphere(theta0), 2 * pi)) < 1e-8);
  }
}

TEST_CASE("geodesic oracle: euclidean straight lines") {
  const Vec p = v3(0.1, 0.2, 0.3), w = v3(1.0, -0.5, 0.25);
  CHECK((sc::oracle_geodesic(*sc::euclidean(3), p, w, 1.5) - (p + 1.5 * w)).norm() < 1e-10);
}

TEST_CASE("geodesic oracle: great circles on the unit sphere") {
  const MetricPtr S = sc::sphere();
  // north from the equator, stopping short of the chart margin
  const Vec north = sc::oracle_geodesic(*S, v2(pi / 2, 0.0), v2(-1.0, 0.0), 1.2);
  CHECK((north - v2(pi / 2 - 1.2, 0.0)).norm() < 1e-8);
  Rng rng(31);
  for (int k = 0; k < 10; ++k) {
    const Vec p = v2(rng.uniform(1.0, 2.1), rng.uniform(-1, 1));
    const Vec w = rng.unit_vec(2) * 0.6;
    const Vec x = sc::oracle_geodesic(*S, p, w, 1.0);
    CHECK((sc::oracle_sphere_embedding(x) - sc::sphere_geodesic_closed_form(p, w, 1.0)).norm() < 1e-8);
  }
  CHECK_THROWS_AS(sc::oracle_geodesic(*S, v2(pi / 2, 0.0), v2(-1.0, 0.0), 1.4), ChartExit);
}

TEST_CASE("geodesic oracle: vertical rays in the half-plane") {
  const MetricPtr H = sc::hyperbolic_half_plane();
  for (double y0 : {0.5, 1.0, 2.0}) {
    const Vec x = sc::oracle_geodesic(*H, v2(0.3, y0), v2(0.0, y0), 1.0);
    CHECK((x - v2(0.3, y0 * std::exp(1.0))).norm() < 1e-8);
  }
}

TEST_CASE("sphere embedding") {
  CHECK((sc::oracle_sphere_embedding(v2(pi / 2, 0)) - v3(1, 0, 0)).norm() < 1e-15);
  CHECK((sc::oracle_sphere_embedding(v2(pi / 2, pi / 2)) - v3(0, 1, 0)).norm() < 1e-15);
  Rng rng(32);
  const MetricPtr S = sc::sphere();
  for (int k = 0; k < 10; ++k) {
    const Vec x = v2(rng.uniform(0.4, 2.7), rng.uniform(-3, 3));
    CHECK(std::abs(sc::oracle_sphere_embedding(x).norm() - 1) < 1e-15);
    Mat J(3, 2);
    const double h = 1e-5;
    for (int a = 0; a < 2; ++a) {
      const Vec e = Vec::Unit(2, a) * h;
      J.col(a) = (sc::oracle_sphere_embedding(x + e) - sc::oracle_sphere_embedding(x - e)) / (2 * h);
    }
    CHECK((J.transpose() * J - S->metric(x)).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(std::abs(sc::oracle_sphere_embedding(v2(1.0, 0.0), 2.0).norm() - 2.0) < 1e-15);
}

TEST_CASE("rotation oracle maps the equator onto the tilted equator isometrically") {
  const double beta = pi / 6;
  const MetricPtr S = sc::sphere();
  const auto tilted = sc::tilted_equator(S, beta);
  for (double u : {-2.0, -0.5, 0.0, 1.3}) {
    const Vec x = v2(pi / 2, u);
    CHECK((sc::oracle_rotation_chart(x, beta) - tilted->point(Vec::Constant(1, u))).norm() < 1e-12);
  }
  Rng rng(33);
  for (int k = 0; k < 10; ++k) {
    const Vec x = v2(rng.uniform(1.0, 2.1), rng.uniform(-2, 2));
    const Mat J = sc::oracle_rotation_jacobian(x, beta);
    Mat Jfd(2, 2);
    const double h = 1e-6;
    for (int a = 0; a < 2; ++a) {
      const Vec e = Vec::Unit(2, a) * h;
      Jfd.col(a) = (sc::oracle_rotation_chart(x + e, beta) - sc::oracle_rotation_chart(x - e, beta)) / (2 * h);
    }
    CHECK((J - Jfd).cwiseAbs().maxCoeff() < 1e-7);
    const Vec y = sc::oracle_rotation_chart(x, beta);
    CHECK((J.transpose() * S->metric(y) * J - S->metric(x)).cwiseAbs().maxCoeff() < 1e-12);
    // the 3-space images differ by the rotation about the x-axis
    const Vec a = sc::oracle_sphere_embedding(x), b = sc::oracle_sphere_embedding(y);
    CHECK(std::abs(a[0] - b[0]) < 1e-12);
    CHECK(std::abs(b[1] - (std::cos(beta) * a[1] - std::sin(beta) * a[2])) < 1e-12);
    CHECK(std::abs(b[2] - (std::sin(beta) * a[1] + std::cos(beta) * a[2])) < 1e-12);
  }
}

TEST_CASE("catalog metrics") {
  CHECK(sc::sphere()->domain().lo[0] == doctest::Approx(0.3));
  CHECK(sc::sphere()->domain().hi[0] == doctest::Approx(pi - 0.3));
  CHECK_THROWS_AS(sc::sphere(-1.0), InvalidArgument);
  CHECK(sc::flat_strip()->dim() == 2);
  CHECK(sc::euclidean(4)->dim() == 4);
  CHECK(sc::sphere(2.0)->metric(v2(pi / 2, 0))(0, 0) == doctest::Approx(4.0));
  const Vec y = v2(0.0, 0.5);
  CHECK(sc::hyperbolic_half_plane()->metric(y)(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("catalog bundle data") {
  const MetricPtr S = sc::sphere();
  const auto V = sc::sphere_normal_data(S, 1.0, 1.0, 0.1);
  const Vec x = v2(1.0, 0.3);
  const Tensor3 h = V->h(x);
  const Mat g = S->metric(x);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) CHECK(h(0, a, b) == doctest::Approx((1 + 0.1 * std::cos(1.0)) * g(a, b)));
  CHECK(V->symmetry_residual(x) == 0.0);
  const auto R = sc::flat_rank2_ricci_data(sc::euclidean(2), -2.0);
  CHECK(R->rank() == 2);
  CHECK(R->compatibility_residual(v2(0.5, 0.2)) < 1e-12);
  // R^V(d_x, d_y) e_2 = -kappa e_1
  CHECK(R->curvature(v2(0.5, 0.2))(0, 1, 0, 1) == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("compatible catalog problems pass their own checks") {
  struct Entry {
    CahProblem problem;
    std::vector<const char*> conditions;
  };
  const std::vector<Entry> entries = {
      {sc::identity_sphere(), {"curvature", "maps"}},
      {sc::identity_flat(), {"curvature", "maps"}},
      {sc::identity_halfplane(), {"curvature", "maps"}},
      {sc::identity_hyperbolic(), {"curvature", "maps"}},
      {sc::rotation_sphere(), {"curvature", "maps"}},
      {sc::flat_rotation(0.4), {"curvature", "maps"}},
      {sc::sphere_into_r3(), {"gauss", "codazzi", "ricci", "maps"}},
      {sc::flat_rank2_ricci(), {"ricci"}},
  };
  CheckOptions opt;
  opt.curves = 6;
  for (const Entry& e : entries)
    for (const char* cond : e.conditions) {
      CAPTURE(e.problem.name);
      CAPTURE(cond);
      CHECK(run_check(cond, e.problem, opt).pass());
    }
}

TEST_CASE("negative-control catalog problems fail exactly the broken condition") {
  CheckOptions opt;
  opt.curves = 6;
  const CahProblem radius = sc::radius_mismatch(1.1);
  CHECK(check_bundle_maps(radius, opt).pass());
  CHECK_FALSE(check_isometry_curvature(radius, opt).pass());
  const CahProblem flat = sc::flattened_target(0.99);
  CHECK(check_bundle_maps(flat, opt).pass());
  const HypothesisReport f = check_isometry_curvature(flat, opt);
  CHECK_FALSE(f.pass());
  CHECK(f.max_residual == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("problem names are unique") {
  auto names = sc::problem_names();
  CHECK(names.size() == 10);
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}
