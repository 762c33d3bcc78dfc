#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cah/compat.hpp"
#include "cah/errors.hpp"
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

CahProblem flat_zero_h_problem() {
  const MetricPtr E2 = sc::euclidean(2);
  CahProblem p;
  p.name = "flat_zero_h";
  p.mode = CahMode::Immersion;
  p.source = sc::horizontal_line(E2);
  p.bundle = std::make_shared<BundleData>(BundleData::flat(E2, 1, [](const Vec&) { return Tensor3({1, 2, 2}); }));
  p.target = sc::axis_line(sc::euclidean(3), 3.0);
  p.maps.phi = [](const Vec& q) { return q; };
  p.maps.psi_normal = [](const Vec&) {
    Mat m = Mat::Zero(3, 2);
    m(1, 1) = 1.0;
    return m;
  };
  p.maps.psi_fiber = [](const Vec&) {
    Mat m = Mat::Zero(3, 1);
    m(2, 0) = 1.0;
    return m;
  };
  return p;
}

}  // namespace

TEST_CASE("curvature condition on isometry problems") {
  CHECK(check_isometry_curvature(sc::identity_sphere()).max_residual < 1e-8);
  CHECK(check_isometry_curvature(sc::rotation_sphere()).max_residual < 1e-8);
  CHECK(check_isometry_curvature(sc::identity_hyperbolic()).max_residual < 1e-8);
  const HypothesisReport flat = check_isometry_curvature(sc::flat_rotation(0.7));
  CHECK(flat.max_residual < 1e-10);
  CHECK(flat.pass());
}

TEST_CASE("radius mismatch fails with the constant-curvature residual") {
  const HypothesisReport r = check_isometry_curvature(sc::radius_mismatch(1.1));
  CHECK_FALSE(r.pass());
  CHECK(r.max_residual == doctest::Approx(1.0 - 1.0 / 1.21).epsilon(1e-6));
  CHECK(r.curves_sampled == 16);
  CHECK(r.curves_failed == 0);
  CHECK(r.worst_curve >= 0);
  CHECK(r.worst_indices[0] != r.worst_indices[1]);
}

TEST_CASE("curvature check rejects immersion problems") {
  CHECK_THROWS_AS(check_isometry_curvature(sc::sphere_into_r3()), InvalidArgument);
}

TEST_CASE("Gauss condition") {
  CHECK(check_gauss(sc::sphere_into_r3()).max_residual < 1e-6);
  CHECK(check_gauss(flat_zero_h_problem()).max_residual == 0.0);
  // orthonormal frame: K - 0.9^2 = 0.19 at every point
  const HypothesisReport r = check_gauss(sc::sphere_into_r3(0.9));
  CHECK_FALSE(r.pass());
  CHECK(r.max_residual == doctest::Approx(0.19).epsilon(1e-6));
}

TEST_CASE("Gauss check with empty normal bundle is the curvature check") {
  const CheckOptions opt;
  for (const CahProblem& P : {sc::radius_mismatch(1.1), sc::identity_sphere()}) {
    const HypothesisReport a = check_gauss(P, opt);
    const HypothesisReport b = check_isometry_curvature(P, opt);
    CHECK(a.max_residual == b.max_residual);
    CHECK(a.raw_residual == b.raw_residual);
    CHECK(a.worst_indices == b.worst_indices);
  }
}

TEST_CASE("Codazzi condition") {
  CHECK(check_codazzi(sc::sphere_into_r3()).max_residual < 1e-6);
  CHECK(check_codazzi(flat_zero_h_problem()).max_residual < 1e-12);
  // h = (1 + eps cos theta) g: (D_{e_theta} h)(e_phi, e_phi) = -eps sin theta at the curve ends
  const double eps = 0.01;
  const CahProblem P = sc::sphere_into_r3(1.0, 1.0, eps);
  const CheckOptions opt;
  double predicted = 0.0;
  for (const CurvePath& c : sample_curves(P, opt)) predicted = std::max(predicted, eps * std::sin(c.point(1.0)[0]));
  const HypothesisReport r = check_codazzi(P, opt);
  CHECK_FALSE(r.pass());
  CHECK(r.max_residual == doctest::Approx(predicted).epsilon(1e-3));
}

TEST_CASE("Ricci condition") {
  const HypothesisReport rank1 = check_ricci(sc::sphere_into_r3());
  CHECK(rank1.max_residual == 0.0);
  CHECK(rank1.pass());
  CHECK(check_ricci(flat_zero_h_problem()).max_residual == 0.0);
  CHECK(check_ricci(sc::flat_rank2_ricci(-2.0)).max_residual < 1e-6);
  // R^V(e_1, e_2, d_x, d_y) = -kappa and the shape-operator term is 2
  for (double kappa : {0.0, -1.0, -3.0}) {
    const HypothesisReport r = check_ricci(sc::flat_rank2_ricci(kappa));
    CAPTURE(kappa);
    CHECK_FALSE(r.pass());
    CHECK(r.raw_residual == doctest::Approx(std::abs(kappa + 2.0)).epsilon(1e-6));
  }
}

TEST_CASE("bundle map conditions") {
  const HypothesisReport id = check_bundle_maps(sc::identity_sphere());
  CHECK(id.max_residual < 1e-10);
  CHECK(id.components.count("gramian") == 1);
  CHECK(id.components.count("connection") == 1);
  CHECK(id.components.count("second_fundamental_form") == 1);
  CHECK(check_bundle_maps(sc::sphere_into_r3()).max_residual < 1e-6);
  CHECK(check_bundle_maps(sc::rotation_sphere()).max_residual < 1e-6);
  const HypothesisReport scaled = check_bundle_maps(sc::sphere_into_r3(1.0, 1.01));
  CHECK_FALSE(scaled.pass());
  CHECK(scaled.components.at("gramian") == doctest::Approx(1.01 * 1.01 - 1.0).epsilon(1e-6));
}

TEST_CASE("checks are invariant under reparameterisation of the sampled curves") {
  const CahProblem P = sc::sphere_into_r3(0.9, 1.0, 0.02);
  CheckOptions base;
  base.curves = 0;
  const CurvePath c = CurvePath::from_function(
      2, [](double t) { return v2(pi / 2 - 0.6 * t + 0.1 * std::sin(pi * t), 0.2 + 0.4 * t); });
  base.extra = {c};
  CheckOptions rep = base;
  rep.extra = {c.reparameterized([](double t) { return t * t; }, [](double t) { return 2 * t; })};
  for (const char* cond : {"gauss", "codazzi", "ricci"}) {
    CAPTURE(cond);
    CHECK(std::abs(run_check(cond, P, base).max_residual - run_check(cond, P, rep).max_residual) < 1e-8);
  }
}

TEST_CASE("sampling is deterministic given the seed and reported") {
  const CahProblem P = sc::sphere_into_r3(1.0, 1.0, 0.05);
  CheckOptions a;
  a.seed = 17;
  const HypothesisReport r1 = check_codazzi(P, a);
  const HypothesisReport r2 = check_codazzi(P, a);
  CHECK(r1.max_residual == r2.max_residual);
  CHECK(r1.worst_curve == r2.worst_curve);
  CHECK(r1.seed == 17);
  a.threads = 4;
  CHECK(check_codazzi(P, a).max_residual == r1.max_residual);
  CheckOptions b;
  b.seed = 18;
  const auto ca = sample_curves(P, a), cb = sample_curves(P, b);
  CHECK((ca[0].point(1.0) - cb[0].point(1.0)).norm() > 0.0);
}

TEST_CASE("sampled curves start on S and stay in the chart") {
  const CahProblem P = sc::identity_sphere();
  CheckOptions opt;
  opt.curves = 32;
  for (const CurvePath& c : sample_curves(P, opt)) {
    CHECK(std::abs(c.point(0.0)[0] - pi / 2) < 1e-12);
    CHECK(P.source_metric().domain().contains(c.point(1.0)));
  }
}

TEST_CASE("per-curve failures are reported, not thrown") {
  const CahProblem P = sc::identity_sphere();
  CheckOptions opt;
  opt.curves = 2;
  opt.extra = {CurvePath::from_function(2, [](double t) { return v2(pi / 2 - 2.0 * t, 0.0); })};
  const HypothesisReport r = check_isometry_curvature(P, opt);
  CHECK(r.curves_sampled == 3);
  CHECK(r.curves_failed == 1);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].rfind("curve 2:", 0) == 0);
  CHECK(r.max_residual < 1e-8);
}

TEST_CASE("run_check dispatches by name") {
  CHECK(run_check("curvature", sc::identity_sphere()).condition == "curvature");
  CHECK(run_check("maps", sc::identity_sphere()).condition == "maps");
  CHECK_THROWS_AS(run_check("torsion", sc::identity_sphere()), InvalidArgument);
}
