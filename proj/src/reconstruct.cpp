#include "cah/reconstruct.hpp"

#include <cmath>
#include <sstream>

#include "cah/errors.hpp"
#include "cah/parallel.hpp"

namespace cah {

const char* to_string(CahMode mode) {
  switch (mode) {
    case CahMode::Isometry: return "isometry";
    case CahMode::Immersion: return "immersion";
    case CahMode::CartanIsometry: return "cartan-isometry";
    case CahMode::CartanImmersion: return "cartan-immersion";
  }
  return "unknown";
}

namespace {

Mat unpack(const Vec& y, int offset, int rows, int cols) { return Eigen::Map<const Mat>(y.data() + offset, rows, cols); }

void pack(Vec& y, int offset, const Mat& m) { Eigen::Map<Mat>(y.data() + offset, m.rows(), m.cols()) = m; }

Mat block_diag(const Mat& a, const Mat& b) {
  Mat out = Mat::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace

void CahProblem::validate() const {
  if (!source || !target) throw InvalidArgument("problem: source and target submanifolds required");
  if (!maps.phi || !maps.psi_normal) throw InvalidArgument("problem: phi and psi maps required");
  if (source->dim() != target->dim()) throw InvalidArgument("problem: S and S~ must have equal dimension");
  const int Nt = target_metric().dim();
  if (immersion()) {
    if (!bundle) throw InvalidArgument("problem: immersion mode needs bundle data");
    if (&bundle->base() != &source_metric() && bundle->base().dim() != n())
      throw InvalidArgument("problem: bundle base must be the source manifold");
    if (Nt != n() + s()) throw InvalidArgument("problem: target dimension must be n + s in immersion mode");
    if (s() > 0 && !maps.psi_fiber) throw InvalidArgument("problem: psi on V|_S required in immersion mode");
  } else {
    if (Nt != n()) throw InvalidArgument("problem: target dimension must equal source dimension in isometry mode");
  }
}

Mat CahProblem::phi_jacobian(const Vec& param) const {
  if (maps.phi_jacobian) return maps.phi_jacobian(param);
  const int r = source->dim();
  Mat J(target->dim(), r);
  for (int i = 0; i < r; ++i) {
    Vec e = Vec::Zero(r);
    e[i] = 1.0;
    J.col(i) = directional_derivative(maps.phi, param, e, 1e-3);
  }
  return J;
}

Mat CahProblem::tilde_psi(const Vec& param) const {
  const Vec x = source->point(param);
  const Mat g = source_metric().metric(x);
  const Mat J = source->jacobian(param);
  const Mat Jt = target->jacobian(maps.phi(param));
  const Mat P = source->normal_projector(param);
  const Mat tangential = Jt * phi_jacobian(param) * (J.transpose() * g * J).ldlt().solve(J.transpose() * g);
  return tangential + maps.psi_normal(param) * P;
}

Mat CahProblem::transfer(const Vec& param) const {
  const Mat tp = tilde_psi(param);
  if (!immersion() || s() == 0) return tp;
  Mat out(tp.rows(), tp.cols() + s());
  out << tp, maps.psi_fiber(param);
  return out;
}

Vec CahProblem::target_point(const Vec& param) const { return target->point(maps.phi(param)); }

TargetData CahProblem::target_data() const {
  TargetData td;
  td.metric = target->ambient_ptr();
  const CahProblem self = *this;
  td.point = [self](const Vec& param) { return self.target_point(param); };
  td.lift = [self](const Vec& param, const Mat& frame, const Mat& fiber) {
    const Mat T = self.transfer(param);
    const int n = self.n();
    Mat out(T.rows(), frame.cols() + fiber.cols());
    out.leftCols(frame.cols()) = T.leftCols(n) * frame;
    if (fiber.cols() > 0) out.rightCols(fiber.cols()) = T.rightCols(self.s()) * fiber;
    return out;
  };
  return td;
}

double TransportedIsomorphism::gram_residual() const {
  return (matrix.transpose() * target_gram * matrix - source_gram).cwiseAbs().maxCoeff();
}

namespace {

struct CoupledLayout {
  int n, s, Nt;
  int x() const { return 0; }
  int E() const { return n; }
  int F() const { return n + n * n; }
  int xt() const { return F() + s * s; }
  int Et() const { return xt() + Nt; }
  int size() const { return Et() + Nt * Nt; }
};

Reconstruction coupled(const CahProblem& problem, const Vec& param, const Mat& E0, const CurvePath* curve,
                       const VelocityProfile* velocity, const IntegratorConfig& config) {
  problem.validate();
  const MetricField& M = problem.source_metric();
  const MetricField& Mt = problem.target_metric();
  const BundleData* V = problem.immersion() ? problem.bundle.get() : nullptr;
  const int n = problem.n();
  const int s = V ? V->rank() : 0;
  const CoupledLayout L{n, s, Mt.dim()};

  const Vec x0 = curve ? curve->point(0.0) : problem.source->point(param);
  const Mat F0 = s > 0 ? V->orthonormal_fiber_frame(x0) : Mat(0, 0);
  const Mat Et0 = problem.transfer(param) * block_diag(E0, F0);
  const Vec xt0 = problem.target_point(param);
  Mt.require_inside(xt0);
  if (gram_drift(Et0, Mt.metric(xt0)) > 1e-8)
    throw InvalidArgument("reconstruct: (phi_* + psi) does not map the source frame to an orthonormal target frame");

  auto source_point = [&](double t, const Vec& y) -> Vec { return curve ? curve->point(t) : Vec(y.segment(L.x(), n)); };

  OdeRhs rhs = [&](double t, const Vec& y, Vec& dy) {
    dy.setZero(y.size());
    const Vec x = source_point(t, y);
    if (!M.domain().contains(x)) {
      std::ostringstream os;
      os << "reconstruct: source curve leaves the chart domain near t=" << t;
      throw ChartExit(os.str(), t);
    }
    const Mat E = unpack(y, L.E(), n, n);
    Vec v, xdot;
    if (curve) {
      xdot = curve->velocity(t);
      v = E.transpose() * M.metric_unchecked(x) * xdot;
    } else {
      v = (*velocity)(t);
      xdot = E * v;
    }
    const Tensor3 gamma = christoffel_unchecked(M, x);
    dy.segment(L.x(), n) = xdot;
    Mat dE(n, n);
    for (int a = 0; a < n; ++a) dE.col(a) = -contract_christoffel(gamma, xdot, E.col(a));
    pack(dy, L.E(), dE);

    Mat omega = Mat::Zero(n, s);
    if (s > 0) {
      const Mat F = unpack(y, L.F(), s, s);
      const Tensor3 A = V->connection(x);
      Mat Ax = Mat::Zero(s, s);
      for (int c = 0; c < n; ++c)
        for (int al = 0; al < s; ++al)
          for (int be = 0; be < s; ++be) Ax(al, be) += xdot[c] * A(c, al, be);
      pack(dy, L.F(), -Ax * F);
      // omega(a, alpha) = fib(h(v, E_a), F_alpha) with v as a chart vector
      const Tensor3 hx = V->h(x);
      const Mat Flow = V->fiber_metric(x) * F;
      const Vec vc = E * v;
      for (int a = 0; a < n; ++a) {
        const Vec hva = V->h_apply(hx, vc, E.col(a));
        for (int al = 0; al < s; ++al) omega(a, al) = hva.dot(Flow.col(al));
      }
    }

    const Vec xt = y.segment(L.xt(), L.Nt);
    const Mat Et = unpack(y, L.Et(), L.Nt, L.Nt);
    const Vec xtdot = Et.leftCols(n) * v;
    const Tensor3 gt = christoffel_unchecked(Mt, xt);
    dy.segment(L.xt(), L.Nt) = xtdot;
    Mat dEt(L.Nt, L.Nt);
    for (int A = 0; A < L.Nt; ++A) dEt.col(A) = -contract_christoffel(gt, xtdot, Et.col(A));
    if (s > 0) {
      dEt.leftCols(n) += Et.rightCols(s) * omega.transpose();
      dEt.rightCols(s) -= Et.leftCols(n) * omega;
    }
    pack(dy, L.Et(), dEt);
  };

  IvpOptions opts;
  opts.inside = [&](const Vec& y) {
    if (!curve && !M.domain().contains(y.segment(L.x(), n))) return false;
    return Mt.domain().contains(y.segment(L.xt(), L.Nt));
  };
  opts.hygiene.drift = [&](double t, const Vec& y) {
    const Vec x = source_point(t, y);
    double d = gram_drift(unpack(y, L.E(), n, n), M.metric_unchecked(x));
    if (s > 0) d = std::max(d, gram_drift(unpack(y, L.F(), s, s), V->fiber_metric(x)));
    const Vec xt = y.segment(L.xt(), L.Nt);
    return std::max(d, gram_drift(unpack(y, L.Et(), L.Nt, L.Nt), Mt.metric_unchecked(xt)));
  };
  opts.hygiene.reorthonormalize = [&](double t, Vec& y) {
    const Vec x = source_point(t, y);
    pack(y, L.E(), reorthonormalize(unpack(y, L.E(), n, n), M.metric_unchecked(x)));
    if (s > 0) pack(y, L.F(), reorthonormalize(unpack(y, L.F(), s, s), V->fiber_metric(x)));
    const Vec xt = y.segment(L.xt(), L.Nt);
    pack(y, L.Et(), reorthonormalize(unpack(y, L.Et(), L.Nt, L.Nt), Mt.metric_unchecked(xt)));
  };

  Vec y0(L.size());
  y0.segment(L.x(), n) = x0;
  pack(y0, L.E(), E0);
  if (s > 0) pack(y0, L.F(), F0);
  y0.segment(L.xt(), L.Nt) = xt0;
  pack(y0, L.Et(), Et0);
  const Trajectory traj = integrate_ivp(rhs, y0, 0.0, 1.0, config, opts);

  Reconstruction out;
  out.start_param = param;
  std::vector<Vec> src_pts, tgt_pts;
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    const Vec& y = traj.y[k];
    FrameState fs;
    fs.t = traj.t[k];
    fs.x = source_point(fs.t, y);
    fs.frame = block_diag(unpack(y, L.E(), n, n), s > 0 ? unpack(y, L.F(), s, s) : Mat(0, 0));
    Mat G = M.metric_unchecked(fs.x);
    if (s > 0) G = block_diag(G, V->fiber_metric(fs.x));
    fs.gram_drift = gram_drift(fs.frame, G);
    src_pts.push_back(fs.x);
    out.source.frames.push_back(fs);

    FrameState ft;
    ft.t = traj.t[k];
    ft.x = y.segment(L.xt(), L.Nt);
    ft.frame = unpack(y, L.Et(), L.Nt, L.Nt);
    ft.gram_drift = gram_drift(ft.frame, Mt.metric_unchecked(ft.x));
    tgt_pts.push_back(ft.x);
    out.target.frames.push_back(ft);
  }
  out.source.split = {n, s};
  out.target.split = {n, s};
  out.source.reorthonormalizations = out.target.reorthonormalizations = traj.reorthonormalizations;
  if (traj.t.size() >= 2) {
    out.source.curve = CurvePath(traj.t, src_pts);
    out.target.curve = CurvePath(traj.t, tgt_pts);
  }

  const FrameState& last_s = out.source.frames.back();
  const FrameState& last_t = out.target.frames.back();
  out.point = last_s.x;
  out.f_point = last_t.x;
  out.tau.source_point = last_s.x;
  out.tau.target_point = last_t.x;
  out.tau.matrix = last_t.frame * last_s.frame.inverse();
  Mat G = M.metric_unchecked(last_s.x);
  if (s > 0) G = block_diag(G, V->fiber_metric(last_s.x));
  out.tau.source_gram = G;
  out.tau.target_gram = Mt.metric_unchecked(last_t.x);
  out.fiber_map = out.tau.matrix.rightCols(s);
  return out;
}

}  // namespace

Reconstruction reconstruct_along(const CahProblem& problem, const CurvePath& gamma, const IntegratorConfig& config) {
  if (gamma.dim() != problem.n()) throw InvalidArgument("reconstruct: curve dimension mismatch");
  const Vec param = problem.source->snap(gamma.point(0.0));
  const Mat E0 = problem.source->adapted_frame(param);
  return coupled(problem, param, E0, &gamma, nullptr, config);
}

Reconstruction reconstruct_along(const CahProblem& problem, const SourceVelocity& gamma, const IntegratorConfig& config) {
  const Mat E0 = gamma.frame.size() ? gamma.frame : problem.source->adapted_frame(gamma.param);
  return coupled(problem, gamma.param, E0, nullptr, &gamma.v, config);
}

WellDefinedReport well_definedness(const CahProblem& problem, const Homotopy& homotopy, int slices,
                                   const IntegratorConfig& config, double tolerance, int threads) {
  if (slices < 2) throw InvalidArgument("well_definedness: need at least two slices");
  WellDefinedReport rep;
  rep.tolerance = tolerance;
  rep.u.resize(slices);
  rep.endpoints.resize(slices);
  for (int k = 0; k < slices; ++k) rep.u[k] = static_cast<double>(k) / (slices - 1);
  parallel_for(slices, threads, [&](int k) {
    rep.endpoints[k] = reconstruct_along(problem, homotopy.slice(rep.u[k]), config).f_point;
  });
  for (int k = 1; k < slices; ++k) {
    const double d = (rep.endpoints[k] - rep.endpoints[0]).norm();
    if (d > rep.drift) {
      rep.drift = d;
      rep.worst_u = rep.u[k];
    }
  }
  return rep;
}

CurvePath straight_path_from_s(const CahProblem& problem, const Vec& x) {
  const Vec p = problem.source->point(problem.source->project(x));
  const Vec d = x - p;
  return CurvePath::from_function(
      problem.n(), [p, d](double t) { return Vec(p + t * d); }, [d](double) { return d; });
}

Reconstruction reconstruct_map(const CahProblem& problem, const Vec& x, const IntegratorConfig& config,
                               const std::optional<CurvePath>& gamma) {
  if (gamma) {
    if ((gamma->point(1.0) - x).norm() > 1e-9) throw InvalidArgument("reconstruct_map: supplied curve does not end at x");
    return reconstruct_along(problem, *gamma, config);
  }
  return reconstruct_along(problem, straight_path_from_s(problem, x), config);
}

namespace {

struct Shot {
  Vec end;
  bool ok = false;
};

Shot shoot(const CahProblem& problem, const Vec& z, const IntegratorConfig& config) {
  const int r = problem.r();
  const int n = problem.n();
  Shot out;
  const Vec param = z.head(r);
  if (!problem.source->parameters().contains(param)) return out;
  Vec v = Vec::Zero(n);
  v.tail(n - r) = z.tail(n - r);
  try {
    const Mat frame = problem.source->adapted_frame(param);
    const Development dev =
        develop(problem.source_metric(), problem.source->point(param), frame, VelocityProfile::constant(v), config);
    out.end = dev.frames.back().x;
    out.ok = true;
  } catch (const GeometryError&) {
    out.ok = false;
  }
  return out;
}

struct NewtonResult {
  Vec z;
  int iterations = 0;
  bool converged = false;
};

NewtonResult newton(const CahProblem& problem, const Vec& x, Vec z, const IntegratorConfig& config) {
  const int n = problem.n();
  NewtonResult res;
  Shot cur = shoot(problem, z, config);
  if (!cur.ok) return res;
  for (int it = 0; it < 50; ++it) {
    Vec F = cur.end - x;
    res.iterations = it + 1;
    if (F.norm() < 1e-12 * std::max(1.0, x.norm())) {
      res.z = z;
      res.converged = true;
      return res;
    }
    Mat Jac(n, n);
    const double h = 1e-6;
    bool ok = true;
    for (int k = 0; k < n && ok; ++k) {
      Vec zp = z, zm = z;
      zp[k] += h;
      zm[k] -= h;
      const Shot sp = shoot(problem, zp, config);
      const Shot sm = shoot(problem, zm, config);
      ok = sp.ok && sm.ok;
      if (ok) Jac.col(k) = (sp.end - sm.end) / (2 * h);
    }
    if (!ok) return res;
    const Vec step = Jac.fullPivLu().solve(-F);
    double lambda = 1.0;
    bool improved = false;
    while (lambda > 1e-4) {
      const Vec trial = z + lambda * step;
      const Shot st = shoot(problem, trial, config);
      if (st.ok && (st.end - x).norm() < F.norm()) {
        z = trial;
        cur = st;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) {
      res.z = z;
      res.converged = F.norm() < 1e-9 * std::max(1.0, x.norm());
      return res;
    }
  }
  res.z = z;
  res.converged = (cur.end - x).norm() < 1e-9 * std::max(1.0, x.norm());
  return res;
}

}  // namespace

CartanResult cartan_normal_map(const CahProblem& problem, const Vec& x, const IntegratorConfig& config) {
  problem.validate();
  const int r = problem.r();
  const int n = problem.n();
  const SubmanifoldSpec& S = *problem.source;
  const MetricField& M = problem.source_metric();

  const Vec p0 = S.project(x);
  const Mat frame0 = S.adapted_frame(p0);
  const Mat g0 = M.metric(S.point(p0));
  Vec z0(n);
  z0.head(r) = p0;
  const Vec d = x - S.point(p0);
  for (int mu = r; mu < n; ++mu) z0[mu] = inner(g0, d, frame0.col(mu));

  std::vector<Vec> seeds{z0};
  const Box& box = S.parameters();
  for (int sgn : {1, -1}) {
    Vec z = z0;
    for (int k = 0; k < n; ++k) {
      const double scale = k < r ? 0.02 * (box.hi[k] - box.lo[k]) : 0.05 * std::max(1.0, std::abs(z0[k]));
      z[k] += ((k % 2 == 0) ? sgn : -sgn) * scale;
    }
    seeds.push_back(z);
  }

  std::vector<NewtonResult> found;
  int iterations = 0;
  for (const Vec& seed : seeds) {
    NewtonResult nr = newton(problem, x, seed, config);
    if (found.empty()) iterations = nr.iterations;
    if (!nr.converged) continue;
    bool dup = false;
    for (const auto& f : found) dup = dup || (f.z - nr.z).norm() < 1e-6;
    if (!dup) found.push_back(nr);
  }
  if (found.empty()) throw ConvergenceFailure("cartan_normal_map: Newton shooting did not converge in 50 iterations");

  CartanResult out;
  out.param = found.front().z.head(r);
  out.normal = found.front().z.tail(n - r);
  out.iterations = iterations;
  out.solutions = static_cast<int>(found.size());
  out.unique = found.size() == 1;
  SourceVelocity sv;
  sv.param = out.param;
  sv.frame = S.adapted_frame(out.param);
  Vec v = Vec::Zero(n);
  v.tail(n - r) = out.normal;
  sv.v = VelocityProfile::constant(v);
  out.reconstruction = reconstruct_along(problem, sv, config);
  return out;
}

}  // namespace cah
