#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cah/config.hpp"
#include "cah/errors.hpp"
#include "cah/random.hpp"
#include "cah/reconstruct.hpp"
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

// Bent curve from the equator point (pi/2, phi0) to x.
CurvePath bent_curve(double phi0, const Vec& x, double bend) {
  const Vec p = v2(pi / 2, phi0);
  const Vec d = x - p;
  const Vec b = v2(-d[1], d[0]) * bend;
  return CurvePath::from_function(
      2, [p, d, b](double t) { return Vec(p + t * d + std::sin(pi * t) * b); },
      [d, b](double t) { return Vec(d + pi * std::cos(pi * t) * b); });
}

Vec random_sphere_point(Rng& rng) { return v2(rng.uniform(0.7, 2.4), rng.uniform(-1.5, 1.5)); }

// Jacobian of f at x by central differences, 3 x 2 for the sphere into flat 3-space.
Mat f_jacobian(const CahProblem& P, const Vec& x, double h) {
  Mat J(P.target_metric().dim(), 2);
  for (int k = 0; k < 2; ++k) {
    Vec e = Vec::Zero(2);
    e[k] = h;
    J.col(k) = (reconstruct_map(P, x + e).f_point - reconstruct_map(P, x - e).f_point) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("identity problem reproduces the endpoint of random curves") {
  Rng rng(21);
  const CahProblem P = sc::identity_sphere();
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double phi0 = rng.uniform(-2.0, 2.0);
    const Vec x = random_sphere_point(rng);
    const Reconstruction r = reconstruct_along(P, bent_curve(phi0, x, rng.uniform(-0.3, 0.3)));
    worst = std::max(worst, (r.f_point - x).norm());
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("identity problems on flat and hyperbolic charts") {
  for (const CahProblem& P : {sc::identity_flat(), sc::identity_hyperbolic()}) {
    const Vec x = v2(0.4, 1.7);
    CHECK((reconstruct_map(P, x).f_point - x).norm() < 1e-8);
  }
}

TEST_CASE("sphere into flat 3-space: f is the standard embedding") {
  Rng rng(22);
  const CahProblem P = sc::sphere_into_r3();
  double radial = 0.0, oracle = 0.0;
  for (int k = 0; k < 50; ++k) {
    const Vec x = random_sphere_point(rng);
    const Reconstruction r = reconstruct_map(P, x);
    radial = std::max(radial, std::abs(r.f_point.norm() - 1.0));
    oracle = std::max(oracle, (r.f_point - sc::oracle_sphere_embedding(x)).norm());
  }
  CHECK(radial < 1e-5);
  CHECK(oracle < 1e-8);
}

TEST_CASE("rotation problem reconstructs the rotation") {
  Rng rng(23);
  const double beta = pi / 6;
  const CahProblem P = sc::rotation_sphere(beta);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const Vec x = random_sphere_point(rng);
    worst = std::max(worst, (reconstruct_map(P, x).f_point - sc::oracle_rotation_chart(x, beta)).norm());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("transported isomorphism preserves the Gramian") {
  Rng rng(24);
  for (const CahProblem& P : {sc::identity_sphere(), sc::rotation_sphere(), sc::sphere_into_r3()}) {
    for (int k = 0; k < 5; ++k) {
      const Reconstruction r = reconstruct_map(P, random_sphere_point(rng));
      CAPTURE(P.name);
      CHECK(r.tau.gram_residual() < 1e-8);
    }
  }
}

TEST_CASE("fiber map of the immersion is the unit normal") {
  const CahProblem P = sc::sphere_into_r3();
  const Vec x = v2(1.1, 0.4);
  const Reconstruction r = reconstruct_map(P, x);
  REQUIRE(r.fiber_map.cols() == 1);
  // h = g with this fiber map requires the inward normal
  CHECK((r.fiber_map.col(0) + sc::oracle_sphere_embedding(x)).norm() < 1e-8);
}

TEST_CASE("f restricted to S is phi") {
  Rng rng(25);
  for (const CahProblem& P : {sc::rotation_sphere(), sc::sphere_into_r3(), sc::radius_mismatch(1.1)}) {
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const Vec u = Vec::Constant(1, rng.uniform(-3.0, 3.0));
      const Reconstruction r = reconstruct_map(P, P.source->point(u));
      worst = std::max(worst, (r.f_point - P.target_point(u)).norm());
    }
    CAPTURE(P.name);
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("f is an isometric immersion: |f_* w| / |w| is one") {
  Rng rng(26);
  for (const CahProblem& P : {sc::sphere_into_r3(), sc::rotation_sphere()}) {
    double worst = 0.0;
    for (int k = 0; k < 8; ++k) {
      const Vec x = random_sphere_point(rng);
      const Mat J = f_jacobian(P, x, 1e-5);
      const Vec w = rng.unit_vec(2);
      const double src = std::sqrt(inner(P.source_metric().metric(x), w, w));
      const Vec fw = J * w;
      const Vec fx = reconstruct_map(P, x).f_point;
      const double dst = std::sqrt(inner(P.target_metric().metric(fx), fw, fw));
      worst = std::max(worst, std::abs(dst / src - 1.0));
    }
    CAPTURE(P.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("f_* on the normal space of S is psi") {
  for (const CahProblem& P : {sc::sphere_into_r3(), sc::rotation_sphere()}) {
    for (double u : {-1.0, 0.5}) {
      const Vec param = Vec::Constant(1, u);
      const Vec x = P.source->point(param);
      const Vec nu = P.source->adapted_frame(param).col(1);
      const double h = 1e-5;
      const Vec df =
          (reconstruct_map(P, x + h * nu).f_point - reconstruct_map(P, x - h * nu).f_point) / (2 * h);
      const Vec expect = P.tilde_psi(param) * nu;
      CAPTURE(P.name);
      CHECK((df - expect).norm() / expect.norm() < 1e-4);
    }
  }
}

TEST_CASE("pulled-back second fundamental form of the reconstruction is h") {
  Rng rng(27);
  const CahProblem P = sc::sphere_into_r3();
  double worst = 0.0;
  const double h = 1e-3;
  for (int k = 0; k < 10; ++k) {
    const Vec x = random_sphere_point(rng);
    const Reconstruction r0 = reconstruct_map(P, x);
    const Vec nu = r0.fiber_map.col(0);
    const Tensor3 expected = P.bundle->h(x);
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) {
        const Vec ea = Vec::Unit(2, a) * h, eb = Vec::Unit(2, b) * h;
        const Vec d2 = (reconstruct_map(P, x + ea + eb).f_point - reconstruct_map(P, x + ea - eb).f_point -
                        reconstruct_map(P, x - ea + eb).f_point + reconstruct_map(P, x - ea - eb).f_point) /
                       (4 * h * h);
        worst = std::max(worst, std::abs(d2.dot(nu) - expected(0, a, b)));
      }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("reconstruction is invariant under reparameterisation") {
  const CahProblem P = sc::rotation_sphere();
  const CurvePath c = bent_curve(0.3, v2(1.0, 0.9), 0.2);
  const CurvePath r = c.reparameterized([](double t) { return t * t * (3 - 2 * t); },
                                        [](double t) { return 6 * t * (1 - t); });
  CHECK((reconstruct_along(P, c).f_point - reconstruct_along(P, r).f_point).norm() < 1e-7);
}

TEST_CASE("velocity-form reconstruction agrees with the curve form") {
  const CahProblem P = sc::identity_sphere();
  SourceVelocity sv;
  sv.param = Vec::Constant(1, 0.2);
  sv.v = VelocityProfile::constant(v2(0.3, 0.6));
  const Reconstruction r = reconstruct_along(P, sv);
  CHECK((r.f_point - r.point).norm() < 1e-8);
  CHECK((r.source.frames.front().x - v2(pi / 2, 0.2)).norm() < 1e-15);
}

TEST_CASE("well-definedness: constant, identity, rotation and flattened target") {
  const Json hj = {{"from", {-0.5}}, {"to", {0.5}}, {"target", {0.7, 0.2}}, {"bend", {0.0, 0.3}}};
  const Json constant = {{"from", {0.1}}, {"to", {0.1}}, {"target", {0.7, 0.2}}, {"bend", {0.0, 0.0}}};
  const WellDefinedReport c = well_definedness(sc::identity_sphere(), parse_homotopy(constant, sc::identity_sphere()));
  CHECK(c.drift == 0.0);
  for (const CahProblem& P : {sc::identity_sphere(), sc::rotation_sphere()}) {
    const WellDefinedReport r = well_definedness(P, parse_homotopy(hj, P), 11, {}, 1e-6, 2);
    CAPTURE(P.name);
    CHECK(r.drift < 1e-6);
    CHECK(r.pass());
    CHECK(r.endpoints.size() == 11);
  }
  const CahProblem F = sc::flattened_target(0.99);
  const WellDefinedReport f = well_definedness(F, parse_homotopy(hj, F));
  CHECK(f.drift > 1e-3);
  CHECK_FALSE(f.pass());
}

TEST_CASE("well-definedness is independent of the thread count") {
  const CahProblem P = sc::flattened_target(0.99);
  const Json hj = {{"from", {-0.5}}, {"to", {0.5}}, {"target", {0.7, 0.2}}, {"bend", {0.0, 0.3}}};
  const Homotopy H = parse_homotopy(hj, P);
  const WellDefinedReport a = well_definedness(P, H, 7, {}, 1e-6, 1);
  const WellDefinedReport b = well_definedness(P, H, 7, {}, 1e-6, 4);
  CHECK(a.drift == b.drift);
  CHECK(a.worst_u == b.worst_u);
}

TEST_CASE("Cartan normal geodesics") {
  SUBCASE("points of S map to phi") {
    CahProblem P = sc::identity_sphere();
    P.mode = CahMode::CartanIsometry;
    const CartanResult c = cartan_normal_map(P, v2(pi / 2, 0.4));
    CHECK((c.reconstruction.f_point - v2(pi / 2, 0.4)).norm() < 1e-10);
    CHECK(c.normal.norm() < 1e-10);
  }
  SUBCASE("identity sphere at colatitude pi/4") {
    CahProblem P = sc::identity_sphere();
    P.mode = CahMode::CartanIsometry;
    const Vec x = v2(pi / 4, 0.3);
    const CartanResult c = cartan_normal_map(P, x);
    CHECK((c.reconstruction.f_point - x).norm() < 1e-6);
    CHECK(c.param[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(c.normal[0] == doctest::Approx(-pi / 4).epsilon(1e-9));
    CHECK(c.unique);
    // agrees with reconstruction along a different, bent curve
    const Reconstruction g = reconstruct_map(P, x, {}, bent_curve(-0.4, x, 0.25));
    CHECK((c.reconstruction.f_point - g.f_point).norm() < 1e-6);
  }
  SUBCASE("flat half-plane over its boundary line") {
    const CahProblem P = sc::identity_halfplane();
    Rng rng(28);
    for (int k = 0; k < 5; ++k) {
      const Vec x = v2(rng.uniform(-2, 2), rng.uniform(0.1, 3.0));
      const CartanResult c = cartan_normal_map(P, x);
      CHECK((c.reconstruction.f_point - x).norm() < 1e-8);
      CHECK(c.param[0] == doctest::Approx(x[0]).epsilon(1e-9));
    }
  }
}

TEST_CASE("reconstruction error paths") {
  const CahProblem P = sc::identity_sphere();
  // start off S
  const CurvePath off = CurvePath::from_function(2, [](double t) { return v2(1.2 + 0.1 * t, 0.0); });
  CHECK_THROWS_AS(reconstruct_along(P, off), InvalidArgument);
  // leaves the chart towards the pole
  const CurvePath exit = CurvePath::from_function(2, [](double t) { return v2(pi / 2 - 1.5 * t, 0.0); });
  try {
    reconstruct_along(P, exit);
    FAIL("expected ChartExit");
  } catch (const ChartExit& e) {
    CHECK(e.exit_time() > 0.8);
    CHECK(e.exit_time() < 0.86);
  }
  // supplied curve must end at x
  CHECK_THROWS_AS(reconstruct_map(P, v2(1.0, 0.0), {}, bent_curve(0.0, v2(1.1, 0.0), 0.0)), InvalidArgument);
  // dimension mismatch of the problem
  CahProblem bad = sc::sphere_into_r3();
  bad.mode = CahMode::Isometry;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  // Newton cannot reach a point beyond the chart
  CahProblem C = sc::identity_sphere();
  C.mode = CahMode::CartanIsometry;
  CHECK_THROWS_AS(cartan_normal_map(C, v2(0.31, 12.0)), GeometryError);
}
