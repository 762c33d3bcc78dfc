#include "cah/compat.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "cah/errors.hpp"
#include "cah/parallel.hpp"
#include "cah/random.hpp"

namespace cah {

std::vector<CurvePath> sample_curves(const CahProblem& problem, const CheckOptions& options) {
  const SubmanifoldSpec& S = *problem.source;
  const Box& chart = problem.source_metric().domain();
  Rng rng(options.seed);
  std::vector<CurvePath> out;
  for (int k = 0; k < options.curves; ++k) {
    const Vec p = S.point(rng.uniform_vec(S.parameters().lo, S.parameters().hi));
    const Vec dir = rng.unit_vec(problem.n());
    double len = options.segment_length;
    for (int shrink = 0; shrink < 30 && !chart.contains(p + len * dir); ++shrink) len *= 0.5;
    const Vec d = len * dir;
    out.push_back(CurvePath::from_function(
        problem.n(), [p, d](double t) { return Vec(p + t * d); }, [d](double) { return d; }));
  }
  for (const auto& c : options.extra) out.push_back(c);
  return out;
}

namespace {

// Frame components at gamma(1) of everything the four conditions compare.
struct Endpoint {
  int n = 0, s = 0;
  Tensor4 R;    // source, n-frame
  Tensor4 Rt;   // tau*R~, (n+s)-frame
  Tensor3 H;    // (xi, a, b)
  Tensor4 DH;   // (c, xi, a, b) = fib((D_c h)(a, b), F_xi)
  Tensor4 RV;   // (xi, eta, a, b) = fib(R^V(a, b) F_xi, F_eta)
  double curvature_scale = 0.0;
};

Endpoint endpoint_data(const CahProblem& problem, const CurvePath& curve, const IntegratorConfig& config) {
  const Reconstruction rec = reconstruct_along(problem, curve, config);
  const MetricField& M = problem.source_metric();
  const MetricField& Mt = problem.target_metric();
  const BundleData* V = problem.immersion() ? problem.bundle.get() : nullptr;
  Endpoint e;
  e.n = problem.n();
  e.s = V ? V->rank() : 0;
  const int n = e.n, s = e.s;
  const Vec& x = rec.point;
  const Mat B = default_frame(M, x);
  Mat frame = Mat::Zero(n + s, n + s);
  frame.topLeftCorner(n, n) = B;
  Mat Fb;
  if (s > 0) {
    Fb = V->orthonormal_fiber_frame(x);
    frame.bottomRightCorner(s, s) = Fb;
  }
  e.R = frame_components(riemann(M, x), B);
  e.Rt = frame_components(riemann(Mt, rec.f_point), rec.tau.matrix * frame);
  e.curvature_scale = std::max(e.R.max_abs(), e.Rt.max_abs());
  if (s == 0) return e;

  const Mat fibF = V->fiber_metric(x) * Fb;
  const Tensor3 h = V->h(x);
  e.H = Tensor3({s, n, n});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const Vec hab = V->h_apply(h, B.col(a), B.col(b));
      for (int xi = 0; xi < s; ++xi) e.H(xi, a, b) = hab.dot(fibF.col(xi));
    }

  const Tensor4 dh = V->h_covariant_derivative(x);
  e.DH = Tensor4({n, s, n, n});
  for (int c = 0; c < n; ++c)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Vec val = Vec::Zero(s);
        for (int c2 = 0; c2 < n; ++c2)
          for (int a2 = 0; a2 < n; ++a2)
            for (int b2 = 0; b2 < n; ++b2) {
              const double w = B(c2, c) * B(a2, a) * B(b2, b);
              if (w == 0.0) continue;
              for (int al = 0; al < s; ++al) val[al] += w * dh(c2, al, a2, b2);
            }
        for (int xi = 0; xi < s; ++xi) e.DH(c, xi, a, b) = val.dot(fibF.col(xi));
      }

  const Tensor4 rv = V->curvature(x);
  e.RV = Tensor4({s, s, n, n});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      Mat Rab = Mat::Zero(s, s);
      for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) {
          const double w = B(c, a) * B(d, b);
          if (w == 0.0) continue;
          for (int al = 0; al < s; ++al)
            for (int be = 0; be < s; ++be) Rab(al, be) += w * rv(c, d, al, be);
        }
      const Mat RF = Rab * Fb;
      for (int xi = 0; xi < s; ++xi)
        for (int eta = 0; eta < s; ++eta) e.RV(xi, eta, a, b) = RF.col(xi).dot(fibF.col(eta));
    }
  return e;
}

using Residual = std::function<double(const Endpoint&, int, int, int, int)>;

struct Slots {
  std::array<int, 4> range;  // extents of the four index slots
  std::array<int, 4> offset{0, 0, 0, 0};
};

HypothesisReport evaluate(const std::string& name, const CahProblem& problem, const CheckOptions& options,
                          const std::function<Slots(int n, int s)>& slots, const Residual& residual) {
  problem.validate();
  HypothesisReport rep;
  rep.condition = name;
  rep.tolerance = options.tolerance;
  rep.seed = options.seed;
  const std::vector<CurvePath> curves = sample_curves(problem, options);
  rep.curves_sampled = static_cast<int>(curves.size());

  std::vector<std::optional<Endpoint>> ends(curves.size());
  std::vector<std::string> errs(curves.size());
  parallel_for(static_cast<int>(curves.size()), options.threads, [&](int k) {
    try {
      ends[k] = endpoint_data(problem, curves[k], options.config);
    } catch (const GeometryError& err) {
      errs[k] = err.what();
    }
  });

  const int n = problem.n();
  const int s = problem.immersion() ? problem.s() : 0;
  const Slots sl = slots(n, s);
  const bool exhaustive = n + s <= 4;
  double scale = 1.0;
  for (const auto& e : ends)
    if (e) scale = std::max(scale, e->curvature_scale);

  for (std::size_t k = 0; k < curves.size(); ++k) {
    if (!ends[k]) {
      ++rep.curves_failed;
      rep.errors.push_back("curve " + std::to_string(k) + ": " + errs[k]);
      continue;
    }
    const Endpoint& e = *ends[k];
    auto visit = [&](int i, int j, int l, int m) {
      const double r = std::abs(residual(e, i + sl.offset[0], j + sl.offset[1], l + sl.offset[2], m + sl.offset[3]));
      if (r > rep.raw_residual || rep.worst_curve < 0) {
        rep.raw_residual = std::max(rep.raw_residual, r);
        rep.worst_curve = static_cast<int>(k);
        rep.worst_indices = {i + sl.offset[0], j + sl.offset[1], l + sl.offset[2], m + sl.offset[3]};
      }
    };
    if (sl.range[0] * sl.range[1] * sl.range[2] * sl.range[3] == 0) continue;
    if (exhaustive) {
      for (int i = 0; i < sl.range[0]; ++i)
        for (int j = 0; j < sl.range[1]; ++j)
          for (int l = 0; l < sl.range[2]; ++l)
            for (int m = 0; m < sl.range[3]; ++m) visit(i, j, l, m);
    } else {
      Rng rng(options.seed + 0x9e3779b97f4a7c15ULL * (k + 1));
      for (int q = 0; q < options.random_quadruples; ++q)
        visit(rng.index(sl.range[0]), rng.index(sl.range[1]), rng.index(sl.range[2]), rng.index(sl.range[3]));
    }
  }
  rep.scale = scale;
  rep.max_residual = rep.raw_residual / scale;
  if (rep.curves_failed == rep.curves_sampled) rep.max_residual = std::numeric_limits<double>::infinity();
  return rep;
}

double gauss_residual(const Endpoint& e, int X, int Y, int Z, int W) {
  double r = e.R(X, Y, Z, W) - e.Rt(X, Y, Z, W);
  for (int xi = 0; xi < e.s; ++xi) r -= e.H(xi, X, W) * e.H(xi, Y, Z) - e.H(xi, X, Z) * e.H(xi, Y, W);
  return r;
}

HypothesisReport gauss_core(const std::string& name, const CahProblem& problem, const CheckOptions& options) {
  return evaluate(
      name, problem, options, [](int n, int) { return Slots{{n, n, n, n}}; }, gauss_residual);
}

}  // namespace

HypothesisReport check_isometry_curvature(const CahProblem& problem, const CheckOptions& options) {
  if (problem.immersion()) throw InvalidArgument("check_isometry_curvature: problem is in immersion mode");
  return gauss_core("curvature", problem, options);
}

HypothesisReport check_gauss(const CahProblem& problem, const CheckOptions& options) {
  return gauss_core("gauss", problem, options);
}

HypothesisReport check_codazzi(const CahProblem& problem, const CheckOptions& options) {
  return evaluate(
      "codazzi", problem, options,
      [](int n, int s) {
        Slots sl{{n, n, n, s}};
        return sl;
      },
      [](const Endpoint& e, int X, int Y, int Z, int xi) {
        return e.DH(X, xi, Y, Z) - e.DH(Y, xi, X, Z) - e.Rt(Z, e.n + xi, X, Y);
      });
}

HypothesisReport check_ricci(const CahProblem& problem, const CheckOptions& options) {
  return evaluate(
      "ricci", problem, options, [](int n, int s) { return Slots{{s, s, n, n}}; },
      [](const Endpoint& e, int xi, int eta, int X, int Y) {
        double shape = 0.0;
        for (int c = 0; c < e.n; ++c) shape += e.H(xi, c, Y) * e.H(eta, c, X) - e.H(eta, c, Y) * e.H(xi, c, X);
        return e.RV(xi, eta, X, Y) - e.Rt(e.n + xi, e.n + eta, X, Y) - shape;
      });
}

HypothesisReport check_bundle_maps(const CahProblem& problem, const CheckOptions& options) {
  problem.validate();
  const SubmanifoldSpec& S = *problem.source;
  const SubmanifoldSpec& St = *problem.target;
  const MetricField& Mt = problem.target_metric();
  const BundleData* V = problem.immersion() ? problem.bundle.get() : nullptr;
  const int n = problem.n(), r = problem.r();
  const int s = V ? V->rank() : 0;

  HypothesisReport rep;
  rep.condition = "maps";
  rep.tolerance = options.tolerance;
  rep.seed = options.seed;
  Rng rng(options.seed);
  std::vector<Vec> params;
  for (int k = 0; k < options.bundle_samples; ++k) params.push_back(rng.uniform_vec(S.parameters().lo, S.parameters().hi));
  rep.curves_sampled = static_cast<int>(params.size());

  std::vector<std::array<double, 3>> res(params.size(), {0.0, 0.0, 0.0});
  std::vector<std::string> errs(params.size());
  parallel_for(static_cast<int>(params.size()), options.threads, [&](int k) {
    try {
      const Vec& u = params[k];
      const Vec x = S.point(u);
      const Vec ut = problem.maps.phi(u);
      const Vec xt = St.point(ut);
      const Mat gt = Mt.metric(xt);
      const Mat E = S.adapted_frame(u);
      const Mat dphi = problem.phi_jacobian(u);
      const Mat Jt = St.jacobian(ut);
      const Mat Pn = problem.maps.psi_normal(u);
      const Mat Pf = s > 0 ? problem.maps.psi_fiber(u) : Mat(Mt.dim(), 0);
      const Mat Fb = s > 0 ? V->orthonormal_fiber_frame(x) : Mat(0, 0);

      std::vector<Vec> tangent_params;
      Mat Ttan(Mt.dim(), r);
      for (int i = 0; i < r; ++i) {
        tangent_params.push_back(S.tangent_parameters(u, E.col(i)));
        Ttan.col(i) = Jt * dphi * tangent_params.back();
      }
      Mat Psi(Mt.dim(), n - r + s);
      Psi.leftCols(n - r) = Pn * E.rightCols(n - r);
      if (s > 0) Psi.rightCols(s) = Pf * Fb;
      double gram = (Psi.transpose() * gt * Psi - Mat::Identity(n - r + s, n - r + s)).cwiseAbs().maxCoeff();
      gram = std::max(gram, (Ttan.transpose() * gt * Ttan - Mat::Identity(r, r)).cwiseAbs().maxCoeff());
      gram = std::max(gram, (Ttan.transpose() * gt * Psi).cwiseAbs().maxCoeff());

      auto gnorm = [&](const Vec& w) { return std::sqrt(std::max(0.0, inner(gt, w, w))); };
      const Tensor3 gamma_t = christoffel(Mt, xt);
      const Mat Pt = St.normal_projector(ut);
      double conn = 0.0;
      std::vector<DirectSumSection> sections;
      for (int mu = r; mu < n; ++mu)
        sections.push_back({[&S, mu](const Vec& p) { return Vec(S.adapted_frame(p).col(mu)); },
                            [s](const Vec&) { return Vec(Vec::Zero(s)); }});
      for (int al = 0; al < s; ++al)
        sections.push_back({[n](const Vec&) { return Vec(Vec::Zero(n)); },
                            [&S, V, al](const Vec& p) { return Vec(V->orthonormal_fiber_frame(S.point(p)).col(al)); }});
      for (const auto& sec : sections) {
        auto image = [&](const Vec& p) -> Vec {
          Vec w = problem.maps.psi_normal(p) * sec.normal(p);
          if (s > 0) w += problem.maps.psi_fiber(p) * sec.fiber(p);
          return w;
        };
        const Vec w = image(u);
        for (int i = 0; i < r; ++i) {
          const DirectSumVector d = direct_sum_connection(S, V, u, tangent_params[i], sec);
          Vec lhs = Pn * d.normal;
          if (s > 0) lhs += Pf * d.fiber;
          const Vec dw = directional_derivative(image, u, tangent_params[i], 1e-4);
          const Vec rhs = Pt * (dw + contract_christoffel(gamma_t, Ttan.col(i), w));
          conn = std::max(conn, gnorm(lhs - rhs));
        }
      }

      double sff = 0.0;
      const Tensor3 h = s > 0 ? V->h(x) : Tensor3();
      for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) {
          Vec lhs = Pn * second_fundamental_form(S, u, tangent_params[i], tangent_params[j]);
          if (s > 0) lhs += Pf * V->h_apply(h, E.col(i), E.col(j));
          const Vec rhs = second_fundamental_form(St, ut, dphi * tangent_params[i], dphi * tangent_params[j]);
          sff = std::max(sff, gnorm(lhs - rhs));
        }
      res[k] = {gram, conn, sff};
    } catch (const GeometryError& err) {
      errs[k] = err.what();
    }
  });

  double gram = 0.0, conn = 0.0, sff = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!errs[k].empty()) {
      ++rep.curves_failed;
      rep.errors.push_back("sample " + std::to_string(k) + ": " + errs[k]);
      continue;
    }
    const double worst = std::max({res[k][0], res[k][1], res[k][2]});
    if (worst > rep.raw_residual || rep.worst_curve < 0) {
      rep.raw_residual = std::max(rep.raw_residual, worst);
      rep.worst_curve = static_cast<int>(k);
    }
    gram = std::max(gram, res[k][0]);
    conn = std::max(conn, res[k][1]);
    sff = std::max(sff, res[k][2]);
  }
  rep.components = {{"gramian", gram}, {"connection", conn}, {"second_fundamental_form", sff}};
  rep.max_residual = rep.raw_residual;
  if (rep.curves_failed == rep.curves_sampled) rep.max_residual = std::numeric_limits<double>::infinity();
  return rep;
}

HypothesisReport run_check(const std::string& condition, const CahProblem& problem, const CheckOptions& options) {
  if (condition == "curvature") return check_isometry_curvature(problem, options);
  if (condition == "gauss") return check_gauss(problem, options);
  if (condition == "codazzi") return check_codazzi(problem, options);
  if (condition == "ricci") return check_ricci(problem, options);
  if (condition == "maps") return check_bundle_maps(problem, options);
  throw InvalidArgument("unknown condition: " + condition);
}

}  // namespace cah
