#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cah/errors.hpp"
#include "cah/geometry.hpp"
#include "cah/integrate.hpp"
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

MetricPtr polar_plane() {
  Box box{v2(0.5, -4.0), v2(5.0, 4.0)};
  return std::make_shared<const MetricField>(2, box, [](const Vec& x) {
    Mat g = Mat::Identity(2, 2);
    g(1, 1) = x[0] * x[0];
    return g;
  });
}

double symmetry_defect(const Tensor4& R) {
  const int n = R.extent(0);
  double worst = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          worst = std::max(worst, std::abs(R(a, b, c, d) + R(b, a, c, d)));
          worst = std::max(worst, std::abs(R(a, b, c, d) + R(a, b, d, c)));
          worst = std::max(worst, std::abs(R(a, b, c, d) - R(c, d, a, b)));
          worst = std::max(worst, std::abs(R(a, b, c, d) + R(b, c, a, d) + R(c, a, b, d)));
        }
  return worst / std::max(1.0, R.max_abs());
}

std::vector<MetricPtr> catalog_metrics(DerivativeMode mode) {
  return {sc::euclidean(3, 10.0, mode), sc::sphere(1.0, 0.3, mode), sc::sphere(1.1, 0.3, mode),
          sc::hyperbolic_half_plane(mode)};
}

Vec random_point(Rng& rng, const Box& box) {
  const Vec mid = 0.5 * (box.lo + box.hi);
  const Vec half = 0.45 * (box.hi - box.lo);
  return rng.uniform_vec(mid - half, mid + half);
}

}  // namespace

TEST_CASE("euclidean Christoffel symbols and curvature vanish") {
  const MetricPtr E = sc::euclidean(3);
  const Vec x = Vec::Constant(3, 0.7);
  CHECK(christoffel(*E, x).max_abs() == 0.0);
  CHECK(riemann(*E, x).max_abs() == 0.0);
}

TEST_CASE("polar plane Christoffel symbols at r = 2") {
  const MetricPtr P = polar_plane();
  const Tensor3 G = christoffel(*P, v2(2.0, 0.3));
  CHECK(G(0, 1, 1) == doctest::Approx(-2.0).epsilon(1e-8));
  CHECK(G(1, 0, 1) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(G(1, 1, 0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(std::abs(G(0, 0, 0)) < 1e-8);
  CHECK(riemann(*P, v2(2.0, 0.3)).max_abs() < 1e-5);
}

TEST_CASE("sphere Christoffel symbol at colatitude pi/3") {
  const Tensor3 G = christoffel(*sc::sphere(), v2(pi / 3, 0.2));
  CHECK(G(0, 1, 1) == doctest::Approx(-std::sin(pi / 3) * std::cos(pi / 3)).epsilon(1e-12));
  CHECK(G(1, 0, 1) == doctest::Approx(std::cos(pi / 3) / std::sin(pi / 3)).epsilon(1e-12));
}

TEST_CASE("constant curvature closed forms") {
  const MetricPtr S = sc::sphere();
  const Vec e = v2(pi / 2, 0.0);
  const Tensor4 R = riemann(*S, e);
  // Rm(d_theta, d_phi, d_phi, d_theta) = K sin^2 theta
  CHECK(R(0, 1, 1, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(R(0, 1, 0, 1) == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK(sectional_curvature(*S, e, v2(1, 0), v2(0, 1)) == doctest::Approx(1.0).epsilon(1e-10));
  const MetricPtr S2 = sc::sphere(1.1);
  CHECK(sectional_curvature(*S2, v2(1.0, 0.4), v2(1, 0), v2(0.3, 1)) == doctest::Approx(1 / 1.21).epsilon(1e-10));
  const MetricPtr H = sc::hyperbolic_half_plane();
  CHECK(sectional_curvature(*H, v2(0.0, 1.0), v2(1, 0), v2(0, 1)) == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("Christoffel symmetry, curvature symmetries and first Bianchi at random points") {
  Rng rng(7);
  for (auto mode : {DerivativeMode::Analytic, DerivativeMode::FiniteDifference}) {
    for (const MetricPtr& M : catalog_metrics(mode)) {
      double worst_gamma = 0.0, worst_r = 0.0;
      for (int k = 0; k < 100; ++k) {
        const Vec x = random_point(rng, M->domain());
        const Tensor3 G = christoffel(*M, x);
        for (int a = 0; a < M->dim(); ++a)
          for (int b = 0; b < M->dim(); ++b)
            for (int c = 0; c < M->dim(); ++c) worst_gamma = std::max(worst_gamma, std::abs(G(a, b, c) - G(a, c, b)));
        worst_r = std::max(worst_r, symmetry_defect(riemann(*M, x)));
      }
      CAPTURE(M->name());
      CHECK(worst_gamma < 1e-12);
      CHECK(worst_r < 1e-6);
    }
  }
}

TEST_CASE("finite-difference and analytic derivative modes agree") {
  Rng rng(11);
  const auto analytic = catalog_metrics(DerivativeMode::Analytic);
  const auto numeric = catalog_metrics(DerivativeMode::FiniteDifference);
  for (std::size_t m = 0; m < analytic.size(); ++m) {
    CHECK(numeric[m]->mode() == DerivativeMode::FiniteDifference);
    CHECK(numeric[m]->fd_step() > 0.0);
    double dg = 0.0, dr = 0.0;
    for (int k = 0; k < 20; ++k) {
      const Vec x = random_point(rng, analytic[m]->domain());
      const Tensor3 Ga = christoffel(*analytic[m], x), Gn = christoffel(*numeric[m], x);
      for (std::size_t i = 0; i < Ga.size(); ++i) dg = std::max(dg, std::abs(Ga.data()[i] - Gn.data()[i]));
      const Tensor4 Ra = riemann(*analytic[m], x), Rn = riemann(*numeric[m], x);
      for (std::size_t i = 0; i < Ra.size(); ++i) dr = std::max(dr, std::abs(Ra.data()[i] - Rn.data()[i]));
    }
    CAPTURE(analytic[m]->name());
    CHECK(dg < 1e-7);
    CHECK(dr < 1e-5);
  }
}

TEST_CASE("metric evaluation rejects points outside the box and indefinite matrices") {
  const MetricPtr S = sc::sphere();
  CHECK_THROWS_AS(S->metric(v2(0.1, 0.0)), OutOfDomain);
  MetricField bad(2, Box{v2(-1, -1), v2(1, 1)}, [](const Vec&) {
    Mat g = Mat::Identity(2, 2);
    g(1, 1) = -1.0;
    return g;
  });
  CHECK_THROWS_AS(bad.metric(v2(0, 0)), NotPositiveDefinite);
}

TEST_CASE("second fundamental form of equator, latitude and straight line") {
  const MetricPtr S = sc::sphere();
  const auto eq = sc::equator(S);
  CHECK(second_fundamental_form(*eq, Vec::Constant(1, 0.4), Vec::Constant(1, 1.0), Vec::Constant(1, 1.0)).norm() < 1e-12);
  for (double th0 : {pi / 6, pi / 4, pi / 3}) {
    const auto lat = sc::latitude(S, th0);
    const Vec u = Vec::Constant(1, 0.3);
    const Vec e = Vec::Constant(1, 1.0 / std::sin(th0));
    const Vec sig = second_fundamental_form(*lat, u, e, e);
    const Mat g = S->metric(lat->point(u));
    CHECK(std::sqrt(inner(g, sig, sig)) == doctest::Approx(1.0 / std::tan(th0)).epsilon(1e-10));
    CHECK(std::abs(inner(g, sig, lat->jacobian(u).col(0))) < 1e-12);
  }
  const auto line = sc::horizontal_line(sc::euclidean(2));
  CHECK(second_fundamental_form(*line, Vec::Constant(1, 0.2), Vec::Constant(1, 1.0), Vec::Constant(1, 1.0)).norm() == 0.0);
}

TEST_CASE("second fundamental form from finite-difference Hessian is symmetric and normal") {
  const MetricPtr S = sc::sphere();
  const auto tilted = sc::tilted_equator(S, pi / 5);
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const Vec u = Vec::Constant(1, rng.uniform(-3.0, 3.0));
    const Vec sig = second_fundamental_form(*tilted, u, Vec::Constant(1, 1.0), Vec::Constant(1, 1.0));
    const Mat g = S->metric(tilted->point(u));
    CHECK(std::abs(inner(g, sig, tilted->jacobian(u).col(0))) < 1e-7);
    // a great circle is a geodesic
    CHECK(sig.norm() < 1e-5);
  }
}

TEST_CASE("adapted frame is orthonormal with the tangent block spanning TS") {
  const MetricPtr S = sc::sphere();
  const auto lat = sc::latitude(S, 1.0);
  const Vec u = Vec::Constant(1, 0.5);
  const Mat E = lat->adapted_frame(u);
  CHECK(gram_drift(E, S->metric(lat->point(u))) < 1e-14);
  const Mat J = lat->jacobian(u);
  CHECK(std::abs(E(0, 0) * J(1, 0) - E(1, 0) * J(0, 0)) < 1e-14);
  CHECK(lat->project(v2(1.2, 0.5))[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK_THROWS_AS(lat->snap(v2(1.2, 0.5)), InvalidArgument);
}

TEST_CASE("rank-deficient embeddings are rejected") {
  auto bad = std::make_shared<SubmanifoldSpec>(sc::euclidean(2), 1, Box{Vec::Constant(1, -1), Vec::Constant(1, 1)},
                                               [](const Vec&) { return v2(0.0, 0.0); });
  CHECK_THROWS_AS(bad->jacobian(Vec::Zero(1)), RankDeficient);
}

TEST_CASE("shape operator definitions") {
  const MetricPtr S = sc::sphere();
  const Vec x = v2(1.0, 0.2);
  auto zero = BundleData::flat(S, 1, [](const Vec&) { return Tensor3({1, 2, 2}); });
  CHECK(shape_operator(zero, x, Vec::Constant(1, 1.0)).norm() == 0.0);
  const auto V = sc::sphere_normal_data(S, 1.0);
  CHECK((shape_operator(*V, x, Vec::Constant(1, 1.0)) - Mat::Identity(2, 2)).norm() < 1e-14);

  Rng rng(5);
  Tensor3 h({2, 2, 2});
  for (int al = 0; al < 2; ++al)
    for (int a = 0; a < 2; ++a)
      for (int b = a; b < 2; ++b) h(al, a, b) = h(al, b, a) = rng.uniform(-1, 1);
  Mat fib(2, 2);
  fib << 2.0, 0.3, 0.3, 1.0;
  BundleData W(S, 2, [fib](const Vec&) { return fib; }, [](const Vec&) { return Tensor3({2, 2, 2}); },
               [h](const Vec&) { return h; });
  for (int k = 0; k < 10; ++k) {
    const Vec X = rng.unit_vec(2), Y = rng.unit_vec(2), eta = rng.unit_vec(2);
    const Mat A = shape_operator(W, x, eta);
    const Mat g = S->metric(x);
    CHECK(std::abs(inner(g, A * X, Y) - inner(fib, W.h_apply(h, X, Y), eta)) < 1e-12);
    CHECK(std::abs(inner(g, A * X, Y) - inner(g, X, A * Y)) < 1e-12);
  }
  CHECK(W.symmetry_residual(x) == 0.0);
}

TEST_CASE("bundle connection compatibility residual") {
  const auto R2 = sc::flat_rank2_ricci_data(sc::euclidean(2, 2.0), -2.0);
  CHECK(R2->compatibility_residual(v2(0.3, -0.4)) < 1e-9);
  Mat fib = Mat::Identity(2, 2);
  fib(0, 0) = 2.0;
  BundleData bad(sc::euclidean(2), 2, [](const Vec& x) {
    Mat m = Mat::Identity(2, 2);
    m(0, 0) = 1.0 + x[0] * x[0];
    return m;
  }, [](const Vec&) { return Tensor3({2, 2, 2}); }, [](const Vec&) { return Tensor3({2, 2, 2}); });
  CHECK(bad.compatibility_residual(v2(0.5, 0.0)) > 0.5);
}

TEST_CASE("direct-sum connection decouples when h vanishes") {
  const MetricPtr S = sc::sphere();
  const auto lat = sc::latitude(S, 1.0);
  auto zero = BundleData::flat(S, 1, [](const Vec&) { return Tensor3({1, 2, 2}); });
  DirectSumSection sec{[&](const Vec& u) { return Vec(std::cos(u[0]) * lat->adapted_frame(u).col(1)); },
                       [](const Vec& u) { return Vec(Vec::Constant(1, std::sin(u[0]))); }};
  const Vec u = Vec::Constant(1, 0.4), a = Vec::Constant(1, 1.0);
  const DirectSumVector with = direct_sum_connection(*lat, &zero, u, a, sec);
  const DirectSumVector without = direct_sum_connection(*lat, nullptr, u, a, {sec.normal, {}});
  CHECK((with.normal - without.normal).norm() < 1e-12);
  CHECK(with.fiber[0] == doctest::Approx(std::cos(0.4)).epsilon(1e-9));
}

TEST_CASE("direct-sum connection of a constant normal section in flat space is h(X, xi)") {
  const MetricPtr E = sc::euclidean(2);
  const auto line = sc::horizontal_line(E);
  Tensor3 h({1, 2, 2});
  h(0, 0, 1) = h(0, 1, 0) = 0.7;
  h(0, 0, 0) = 0.3;
  auto V = BundleData::flat(E, 1, [h](const Vec&) { return h; });
  DirectSumSection sec{[](const Vec&) { return v2(0.0, 1.0); }, [](const Vec&) { return Vec(Vec::Zero(1)); }};
  const DirectSumVector d = direct_sum_connection(*line, &V, Vec::Constant(1, 0.1), Vec::Constant(1, 1.0), sec);
  CHECK(d.normal.norm() < 1e-12);
  CHECK(d.fiber[0] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("direct-sum connection is metric compatible along random curves in S") {
  const MetricPtr S = sc::sphere();
  const auto lat = sc::latitude(S, 1.1);
  const auto V = sc::sphere_normal_data(S, 1.0, 1.0, 0.2);
  Rng rng(19);
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const double c1 = rng.uniform(-1, 1), c2 = rng.uniform(-1, 1), c3 = rng.uniform(-1, 1), c4 = rng.uniform(-1, 1);
    DirectSumSection s1{[&, c1](const Vec& u) { return Vec(std::sin(c1 * u[0] + 1) * lat->adapted_frame(u).col(1)); },
                        [c2](const Vec& u) { return Vec(Vec::Constant(1, std::cos(c2 * u[0]))); }};
    DirectSumSection s2{[&, c3](const Vec& u) { return Vec((c3 + u[0] * u[0]) * lat->adapted_frame(u).col(1)); },
                        [c4](const Vec& u) { return Vec(Vec::Constant(1, c4 * u[0] + 0.5)); }};
    const Vec u = Vec::Constant(1, rng.uniform(-2.5, 2.5));
    const Vec a = Vec::Constant(1, rng.uniform(0.5, 1.5));
    auto ip = [&](const Vec& p) { return Vec(Vec::Constant(1, direct_sum_inner(*lat, V.get(), p, s1.at(p), s2.at(p)))); };
    const double lhs = directional_derivative(ip, u, a, 1e-3)[0];
    const double rhs = direct_sum_inner(*lat, V.get(), u, direct_sum_connection(*lat, V.get(), u, a, s1), s2.at(u)) +
                       direct_sum_inner(*lat, V.get(), u, s1.at(u), direct_sum_connection(*lat, V.get(), u, a, s2));
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("D~-parallel sections along S: block formula against hand-derived system") {
  // S = x-axis in the plane with the rank-2 bundle whose h mixes d_y into e_2.
  // By hand: D~ d_y = e_2, D~ e_2 = -d_y, D~ e_1 = 0, so parallel sections
  // rotate in the (d_y, e_2) plane.
  const MetricPtr E = sc::euclidean(2, 2.0);
  const auto line = sc::horizontal_line(E, 0.0, 1.0);
  const auto V = sc::flat_rank2_ricci_data(E, -2.0);
  std::vector<DirectSumSection> basis = {
      {[](const Vec&) { return v2(0, 1); }, [](const Vec&) { return Vec(Vec::Zero(2)); }},
      {[](const Vec&) { return v2(0, 0); }, [](const Vec&) { return v2(1, 0); }},
      {[](const Vec&) { return v2(0, 0); }, [](const Vec&) { return v2(0, 1); }}};
  auto coords = [](const DirectSumVector& d) {
    Vec c(3);
    c << d.normal[1], d.fiber[0], d.fiber[1];
    return c;
  };
  OdeRhs rhs = [&](double t, const Vec& y, Vec& dy) {
    Mat C(3, 3);
    for (int k = 0; k < 3; ++k)
      C.col(k) = coords(direct_sum_connection(*line, V.get(), Vec::Constant(1, t - 0.5), Vec::Constant(1, 1.0), basis[k]));
    dy = -C * y;
  };
  Vec y0(3);
  y0 << 1.0, 0.3, 0.0;
  const Trajectory tr = integrate_ivp(rhs, y0, 0.0, 1.0, IntegratorConfig{});
  const Vec y = tr.back();
  CHECK(y[0] == doctest::Approx(std::cos(1.0)).epsilon(1e-8));
  CHECK(y[1] == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(y[2] == doctest::Approx(-std::sin(1.0)).epsilon(1e-8));
}
