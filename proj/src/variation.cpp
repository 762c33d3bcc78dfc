#include "cah/variation.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "cah/errors.hpp"

namespace cah {

namespace {

Vec central4(const std::function<Vec(double)>& f, double x, double h) {
  return (f(x - 2 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2 * h)) / (12.0 * h);
}

Mat unpack(const Vec& y, int offset, int rows, int cols) { return Eigen::Map<const Mat>(y.data() + offset, rows, cols); }

void pack(Vec& y, int offset, const Mat& m) { Eigen::Map<Mat>(y.data() + offset, m.rows(), m.cols()) = m; }

AntisymmetricMatrix unpack_antisym(const Vec& y, int offset, int dim) {
  AntisymmetricMatrix X(dim);
  for (std::size_t k = 0; k < X.packed().size(); ++k) X.packed()[k] = y[offset + static_cast<int>(k)];
  return X;
}

// --- Darboux frame along theta ----------------------------------------------

struct DarbouxSystem {
  const FamilyInput& family;
  int n;
  int r;
  int s;

  Vec theta_velocity_param(double u) const {
    if (family.theta_dot && !family.homotopy) return family.theta_dot(u);
    return central4([this](double w) { return family.theta_param(w); }, u, 1e-4);
  }

  void rhs(double u, const Vec& y, Vec& dy) const {
    const SubmanifoldSpec& sub = *family.sub;
    const Vec param = family.theta_param(u);
    const Vec pdot = theta_velocity_param(u);
    const Vec x = sub.point(param);
    const Mat J = sub.jacobian(param);
    const Vec xdot = J * pdot;
    const Mat g = sub.ambient().metric(x);
    const Tensor3 gamma = christoffel_unchecked(sub.ambient(), x);
    const Mat E = unpack(y, 0, n, n);
    Mat dE(n, n);
    for (int a = 0; a < n; ++a) dE.col(a) = -contract_christoffel(gamma, xdot, E.col(a));
    for (int i = 0; i < r; ++i) {
      const Vec b = sub.tangent_parameters(param, E.col(i));
      const Vec sig = second_fundamental_form(sub, param, pdot, b);
      for (int mu = r; mu < n; ++mu) {
        const double w = inner(g, sig, E.col(mu));
        dE.col(i) += w * E.col(mu);
        dE.col(mu) -= w * E.col(i);
      }
    }
    dy.resize(y.size());
    pack(dy, 0, dE);
    if (s > 0) {
      const Tensor3 A = family.bundle->connection(x);
      Mat Ax = Mat::Zero(s, s);
      for (int c = 0; c < n; ++c)
        for (int al = 0; al < s; ++al)
          for (int be = 0; be < s; ++be) Ax(al, be) += xdot[c] * A(c, al, be);
      pack(dy, n * n, -Ax * unpack(y, n * n, s, s));
    }
  }
};

ThetaFrame make_theta_frame(const FamilyInput& family, double u, const Vec& y, int n, int s) {
  ThetaFrame tf;
  tf.u = u;
  tf.param = family.theta_param(u);
  tf.point = family.sub->point(tf.param);
  tf.frame = unpack(y, 0, n, n);
  tf.fiber = s > 0 ? unpack(y, n * n, s, s) : Mat(0, 0);
  return tf;
}

Vec pack_theta(const ThetaFrame& tf, int n, int s) {
  Vec y(n * n + s * s);
  pack(y, 0, tf.frame);
  if (s > 0) pack(y, n * n, tf.fiber);
  return y;
}

}  // namespace

Vec FamilyInput::theta_param(double u) const {
  if (homotopy) {
    if (homotopy->base) return homotopy->base(u);
    return sub->project(homotopy->point(u, 0.0));
  }
  if (!theta) throw InvalidArgument("family: theta or homotopy required");
  return theta(u);
}

ThetaFrame theta_frame(const FamilyInput& family, double u, const IntegratorConfig& config) {
  if (!family.sub) throw InvalidArgument("family: submanifold required");
  const int n = family.source_dim();
  const int s = family.rank();
  ThetaFrame start;
  start.u = 0.0;
  start.param = family.theta_param(0.0);
  start.point = family.sub->point(start.param);
  start.frame = family.initial_frame.size() ? family.initial_frame : family.sub->adapted_frame(start.param);
  start.fiber = s > 0 ? (family.initial_fiber.size() ? family.initial_fiber
                                                       : family.bundle->orthonormal_fiber_frame(start.point))
                      : Mat(0, 0);
  if (u == 0.0) return start;
  DarbouxSystem sys{family, n, family.sub->dim(), s};
  IntegratorConfig cfg = config;
  cfg.method = Method::Rk4;
  cfg.reortho.kind = ReorthoPolicy::Kind::Never;
  const Trajectory traj =
      integrate_ivp([&sys](double w, const Vec& y, Vec& dy) { sys.rhs(w, y, dy); }, pack_theta(start, n, s), 0.0, u, cfg);
  return make_theta_frame(family, u, traj.back(), n, s);
}

ThetaFrame advance_theta_frame(const FamilyInput& family, const ThetaFrame& from, double u) {
  const int n = family.source_dim();
  const int s = family.rank();
  if (u == from.u) return from;
  DarbouxSystem sys{family, n, family.sub->dim(), s};
  IntegratorConfig cfg;
  cfg.method = Method::Rk4;
  cfg.steps = 1;
  cfg.reortho.kind = ReorthoPolicy::Kind::Never;
  // one step: steps_for(|du|) with steps = 1 is a single step for |du| <= 1
  const Trajectory traj =
      integrate_ivp([&sys](double w, const Vec& y, Vec& dy) { sys.rhs(w, y, dy); }, pack_theta(from, n, s), from.u, u, cfg);
  return make_theta_frame(family, u, traj.back(), n, s);
}

namespace {

// --- source slices ----------------------------------------------------------

// Three source curves at u, u - du, u + du carrying (x, E, F), integrated in
// the same IVP as the variation system.
class SourceSlices {
 public:
  SourceSlices(const FamilyInput& family, double u, const IntegratorConfig& config)
      : family_(family), n_(family.source_dim()), s_(family.rank()) {
    const double du = family.du_first;
    u_ = {u, u - du, u + du};
    frames_[0] = theta_frame(family, u, config);
    frames_[1] = advance_theta_frame(family, frames_[0], u - du);
    frames_[2] = advance_theta_frame(family, frames_[0], u + du);
  }

  int slice_size() const { return n_ + n_ * n_ + s_ * s_; }
  int size() const { return 3 * slice_size(); }
  const ThetaFrame& frame(int k) const { return frames_[k]; }

  Vec initial_state() const {
    Vec y(size());
    for (int k = 0; k < 3; ++k) {
      const int off = k * slice_size();
      y.segment(off, n_) = frames_[k].point;
      pack(y, off + n_, frames_[k].frame);
      if (s_ > 0) pack(y, off + n_ + n_ * n_, frames_[k].fiber);
    }
    return y;
  }

  struct Local {
    Vec x, xdot;
    Mat E, F;
    Vec v, v_t;
    Tensor3 h, h_t;
  };

  Local local(int k, double t, const Vec& y, bool with_h) const {
    const MetricField& M = family_.sub->ambient();
    const int off = k * slice_size();
    Local L;
    L.E = unpack(y, off + n_, n_, n_);
    L.F = s_ > 0 ? unpack(y, off + n_ + n_ * n_, s_, s_) : Mat(0, 0);
    if (family_.homotopy) {
      L.x = family_.homotopy->point(u_[k], t);
      L.xdot = family_.homotopy->velocity(u_[k], t);
      if (!M.domain().contains(L.x)) throw ChartExit(exit_message(t), t);
      const Mat g = M.metric_unchecked(L.x);
      const Tensor3 gamma = christoffel_unchecked(M, L.x);
      L.v = L.E.transpose() * g * L.xdot;
      const Vec acc = family_.homotopy->acceleration(u_[k], t) + contract_christoffel(gamma, L.xdot, L.xdot);
      L.v_t = L.E.transpose() * g * acc;
    } else {
      L.x = y.segment(off, n_);
      if (!M.domain().contains(L.x)) throw ChartExit(exit_message(t), t);
      const double uk = u_[k];
      L.v = family_.v(uk, t);
      L.v_t = family_.v_t ? family_.v_t(uk, t) : central4([&](double w) { return family_.v(uk, w); }, t, 1e-3);
      L.xdot = L.E * L.v;
    }
    if (with_h && s_ > 0) {
      const BundleData& V = *family_.bundle;
      const Tensor3 hx = V.h(L.x);
      const Tensor4 dh = V.h_covariant_derivative(L.x);
      const Mat fib = V.fiber_metric(L.x);
      const Mat Flow = fib * L.F;  // column alpha: lowered F_alpha
      L.h = Tensor3({s_, n_, n_});
      L.h_t = Tensor3({s_, n_, n_});
      for (int a = 0; a < n_; ++a)
        for (int b = a; b < n_; ++b) {
          Vec hab = Vec::Zero(s_);
          Vec dab = Vec::Zero(s_);
          for (int p = 0; p < n_; ++p)
            for (int q = 0; q < n_; ++q) {
              const double w = L.E(p, a) * L.E(q, b);
              if (w == 0.0) continue;
              for (int ga = 0; ga < s_; ++ga) {
                hab[ga] += hx(ga, p, q) * w;
                double d = 0.0;
                for (int c = 0; c < n_; ++c) d += L.xdot[c] * dh(c, ga, p, q);
                dab[ga] += d * w;
              }
            }
          for (int al = 0; al < s_; ++al) {
            const double hv = hab.dot(Flow.col(al));
            const double dv = dab.dot(Flow.col(al));
            L.h(al, a, b) = L.h(al, b, a) = hv;
            L.h_t(al, a, b) = L.h_t(al, b, a) = dv;
          }
        }
    }
    return L;
  }

  void derivative(double t, const Vec& y, Vec& dy) const {
    const MetricField& M = family_.sub->ambient();
    for (int k = 0; k < 3; ++k) {
      const int off = k * slice_size();
      const Local L = local(k, t, y, false);
      const Tensor3 gamma = christoffel_unchecked(M, L.x);
      dy.segment(off, n_) = L.xdot;
      Mat dE(n_, n_);
      for (int a = 0; a < n_; ++a) dE.col(a) = -contract_christoffel(gamma, L.xdot, L.E.col(a));
      pack(dy, off + n_, dE);
      if (s_ > 0) {
        const Tensor3 A = family_.bundle->connection(L.x);
        Mat Ax = Mat::Zero(s_, s_);
        for (int c = 0; c < n_; ++c)
          for (int al = 0; al < s_; ++al)
            for (int be = 0; be < s_; ++be) Ax(al, be) += L.xdot[c] * A(c, al, be);
        pack(dy, off + n_ + n_ * n_, -Ax * L.F);
      }
    }
  }

  SliceCoefficients evaluate(double t, const Vec& y, bool with_rv) const {
    const bool need_h = s_ > 0;
    const Local L0 = local(0, t, y, need_h);
    const Local Lm = local(1, t, y, need_h);
    const Local Lp = local(2, t, y, need_h);
    const double du = family_.du_first;
    SliceCoefficients c;
    c.v = L0.v;
    c.v_t = L0.v_t;
    if (family_.homotopy) {
      c.v_u = (Lp.v - Lm.v) / (2.0 * du);
      c.v_ut = (Lp.v_t - Lm.v_t) / (2.0 * du);
    } else {
      const double u = u_[0];
      c.v_u = family_.v_u ? family_.v_u(u, t) : Vec((family_.v(u + du, t) - family_.v(u - du, t)) / (2.0 * du));
      if (family_.v_ut) {
        c.v_ut = family_.v_ut(u, t);
      } else {
        const double dm = family_.du_mixed;
        auto vt = [&](double w) {
          return family_.v_t ? family_.v_t(w, t) : central4([&](double q) { return family_.v(w, q); }, t, 1e-3);
        };
        c.v_ut = (vt(u + dm) - vt(u - dm)) / (2.0 * dm);
      }
    }
    if (need_h) {
      c.h = L0.h;
      c.h_t = L0.h_t;
      c.h_u = Tensor3({s_, n_, n_});
      for (std::size_t k = 0; k < c.h_u.size(); ++k) c.h_u.data()[k] = (Lp.h.data()[k] - Lm.h.data()[k]) / (2.0 * du);
      if (with_rv) {
        const Tensor4 RV = family_.bundle->curvature(L0.x);
        const Mat fib = family_.bundle->fiber_metric(L0.x);
        c.rv = Tensor4({s_, s_, n_, n_});
        // rv(al, be, c, d) = fib(R^V(E_c, E_d) F_al, F_be)
        for (int cc = 0; cc < n_; ++cc)
          for (int dd = 0; dd < n_; ++dd) {
            Mat Rcd = Mat::Zero(s_, s_);
            for (int p = 0; p < n_; ++p)
              for (int q = 0; q < n_; ++q) {
                const double w = L0.E(p, cc) * L0.E(q, dd);
                if (w == 0.0) continue;
                for (int ga = 0; ga < s_; ++ga)
                  for (int de = 0; de < s_; ++de) Rcd(ga, de) += w * RV(p, q, ga, de);
              }
            const Mat block = L0.F.transpose() * fib * Rcd * L0.F;  // (be, al)
            for (int al = 0; al < s_; ++al)
              for (int be = 0; be < s_; ++be) c.rv(al, be, cc, dd) = block(be, al);
          }
      }
    } else {
      c.h = Tensor3({0, n_, n_});
      c.h_t = c.h;
      c.h_u = c.h;
    }
    return c;
  }

 private:
  std::string exit_message(double t) const {
    std::ostringstream os;
    os << "variation: source slice leaves the chart domain near t=" << t;
    return os.str();
  }

  const FamilyInput& family_;
  int n_;
  int s_;
  std::array<double, 3> u_{};
  std::array<ThetaFrame, 3> frames_;
};

// --- core system ------------------------------------------------------------

struct CoreLayout {
  int n = 0;   // tangent block
  int s = 0;   // normal block
  int sv = 0;  // extra bundle block (source side)
  int N() const { return n + s; }
  int x() const { return 0; }
  int E() const { return N(); }
  int U() const { return N() + N() * N(); }
  int dU() const { return U() + N(); }
  int X() const { return dU() + N(); }
  int XV() const { return X() + static_cast<int>(AntisymmetricMatrix::packed_size(N())); }
  int slices() const { return XV() + static_cast<int>(AntisymmetricMatrix::packed_size(sv)); }
};

struct Omega {
  Mat w, wt, wu;  // (a, alpha)
};

Omega omega_of(const SliceCoefficients& c, int n, int s) {
  Omega o{Mat::Zero(n, s), Mat::Zero(n, s), Mat::Zero(n, s)};
  for (int a = 0; a < n; ++a)
    for (int al = 0; al < s; ++al) {
      double w = 0.0, wt = 0.0, wu = 0.0;
      for (int b = 0; b < n; ++b) {
        w += c.h(al, a, b) * c.v[b];
        wt += c.h_t(al, a, b) * c.v[b] + c.h(al, a, b) * c.v_t[b];
        wu += c.h_u(al, a, b) * c.v[b] + c.h(al, a, b) * c.v_u[b];
      }
      o.w(a, al) = w;
      o.wt(a, al) = wt;
      o.wu(a, al) = wu;
    }
  return o;
}

Mat full_omega(const Mat& w, int n, int s) {
  Mat O = Mat::Zero(n + s, n + s);
  O.block(0, n, n, s) = w;
  O.block(n, 0, s, n) = -w.transpose();
  return O;
}

class VariationSystem {
 public:
  VariationSystem(const FamilyInput& family, double u, const IntegratorConfig& config, VariationSide side, int s_core,
                  bool with_xv)
      : family_(family), u_(u), slices_(family, u, config) {
    const int n = family.source_dim();
    layout_.n = n;
    layout_.s = s_core;
    layout_.sv = with_xv ? family.rank() : 0;
    if (side == VariationSide::Source) {
      metric_ = family.sub->ambient_ptr();
    } else {
      if (!family.target) throw InvalidArgument("variation: target data required for the target side");
      metric_ = family.target->metric;
    }
    if (metric_->dim() != layout_.N())
      throw InvalidArgument("variation: development dimension does not match the tangent/normal split");
    side_ = side;
    r_ = family.sub->dim();
  }

  const CoreLayout& layout() const { return layout_; }
  const MetricField& metric() const { return *metric_; }
  const SourceSlices& slices() const { return slices_; }

  VariationInitialData initial_data() const {
    const int n = layout_.n, s = layout_.s, N = layout_.N(), r = r_;
    const SubmanifoldSpec& sub = *family_.sub;
    const ThetaFrame& tf = slices_.frame(0);
    const Mat g = sub.ambient().metric(tf.point);
    const Mat J = sub.jacobian(tf.param);
    DarbouxSystem sys{family_, n, r, family_.rank()};
    const Vec xdot = J * sys.theta_velocity_param(u_);

    VariationInitialData init;
    init.theta = Vec(r);
    for (int i = 0; i < r; ++i) init.theta[i] = inner(g, xdot, tf.frame.col(i));
    init.sigma = Tensor3({n - r, r, r});
    std::vector<Vec> params(r);
    for (int i = 0; i < r; ++i) params[i] = sub.tangent_parameters(tf.param, tf.frame.col(i));
    for (int i = 0; i < r; ++i)
      for (int j = i; j < r; ++j) {
        const Vec sig = second_fundamental_form(sub, tf.param, params[i], params[j]);
        for (int mu = r; mu < n; ++mu) {
          const double val = inner(g, sig, tf.frame.col(mu));
          init.sigma(mu - r, i, j) = val;
          init.sigma(mu - r, j, i) = val;
        }
      }

    const SliceCoefficients c0 = slices_.evaluate(0.0, slices_.initial_state(), false);
    init.U = Vec::Zero(N);
    init.dU = Vec::Zero(N);
    init.X = AntisymmetricMatrix(N);
    for (int i = 0; i < r; ++i) init.U[i] = init.theta[i];
    for (int i = 0; i < r; ++i)
      for (int mu = r; mu < n; ++mu) {
        double acc = 0.0;
        for (int j = 0; j < r; ++j) acc += init.sigma(mu - r, i, j) * init.theta[j];
        init.X.set(i, mu, acc);
      }
    for (int a = 0; a < n; ++a)
      for (int al = 0; al < s; ++al) {
        double acc = 0.0;
        for (int i = 0; i < r; ++i) acc += c0.h(al, a, i) * init.theta[i];
        init.X.set(a, n + al, acc);
      }
    for (int i = 0; i < r; ++i) {
      double acc = c0.v_u[i];
      for (int mu = r; mu < n; ++mu)
        for (int j = 0; j < r; ++j) acc -= c0.v[mu] * init.sigma(mu - r, i, j) * init.theta[j];
      init.dU[i] = acc;
    }
    for (int mu = r; mu < n; ++mu) {
      double acc = c0.v_u[mu];
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) acc += c0.v[i] * init.sigma(mu - r, i, j) * init.theta[j];
      init.dU[mu] = acc;
    }
    return init;
  }

  Vec initial_state(const VariationInitialData& init) const {
    const CoreLayout& L = layout_;
    const ThetaFrame& tf = slices_.frame(0);
    Vec y = Vec::Zero(L.slices() + slices_.size());
    Vec x0;
    Mat E0;
    if (side_ == VariationSide::Source) {
      x0 = tf.point;
      E0 = tf.frame;
    } else {
      x0 = family_.target->point(tf.param);
      E0 = family_.target->lift(tf.param, tf.frame, L.s > 0 ? tf.fiber : Mat(0, 0));
    }
    if (E0.rows() != L.N() || E0.cols() != L.N()) throw InvalidArgument("variation: lifted frame has wrong shape");
    metric_->require_inside(x0);
    y.segment(L.x(), L.N()) = x0;
    pack(y, L.E(), E0);
    y.segment(L.U(), L.N()) = init.U;
    y.segment(L.dU(), L.N()) = init.dU;
    for (std::size_t k = 0; k < init.X.packed().size(); ++k) y[L.X() + static_cast<int>(k)] = init.X.packed()[k];
    y.segment(L.slices(), slices_.size()) = slices_.initial_state();
    return y;
  }

  Vec sub_state(const Vec& y) const { return y.segment(layout_.slices(), slices_.size()); }

  void rhs(double t, const Vec& y, Vec& dy) const {
    const CoreLayout& L = layout_;
    const int n = L.n, s = L.s, N = L.N();
    dy.setZero(y.size());

    const Vec sy = sub_state(y);
    Vec dsy(sy.size());
    slices_.derivative(t, sy, dsy);
    dy.segment(L.slices(), sy.size()) = dsy;

    const SliceCoefficients c = slices_.evaluate(t, sy, L.sv > 0);
    const Omega om = omega_of(c, n, s);
    const Mat O = full_omega(om.w, n, s);
    const Mat Ou = full_omega(om.wu, n, s);

    const Vec x = y.segment(L.x(), N);
    const Mat E = unpack(y, L.E(), N, N);
    const Vec U = y.segment(L.U(), N);
    const Vec dU = y.segment(L.dU(), N);
    const AntisymmetricMatrix X = unpack_antisym(y, L.X(), N);
    const Mat Xd = X.dense();

    const Tensor3 gamma = christoffel_unchecked(*metric_, x);
    const Tensor4 R = frame_components(riemann_unchecked(*metric_, x), E);

    const Vec xdot = E.leftCols(n) * c.v;
    dy.segment(L.x(), N) = xdot;
    Mat dE(N, N);
    for (int A = 0; A < N; ++A) dE.col(A) = -contract_christoffel(gamma, xdot, E.col(A));
    dE += E * O.transpose();
    pack(dy, L.E(), dE);

    // sum_a omega_{a alpha} v_a
    Vec wv = Vec::Zero(s);
    for (int al = 0; al < s; ++al) wv[al] = om.w.col(al).dot(c.v);

    Vec ddU(N);
    for (int a = 0; a < n; ++a) {
      double acc = c.v_ut[a];
      for (int al = 0; al < s; ++al) {
        acc += 2.0 * dU[n + al] * om.w(a, al) + U[n + al] * om.wt(a, al);
        double ub = 0.0;
        for (int b = 0; b < n; ++b) ub += U[b] * om.w(b, al);
        acc += ub * om.w(a, al);
        acc -= wv[al] * Xd(a, n + al);
      }
      for (int b = 0; b < n; ++b) {
        acc += c.v_t[b] * Xd(b, a);
        for (int cc = 0; cc < n; ++cc) {
          const double vv = c.v[b] * c.v[cc];
          if (vv == 0.0) continue;
          for (int A = 0; A < N; ++A) acc += R(b, a, cc, A) * U[A] * vv;
        }
      }
      ddU[a] = acc;
    }
    for (int al = 0; al < s; ++al) {
      const int ia = n + al;
      double acc = 0.0;
      for (int a = 0; a < n; ++a) {
        acc += -2.0 * dU[a] * om.w(a, al) - U[a] * om.wt(a, al);
        acc += c.v_t[a] * Xd(a, ia);
        acc += c.v_u[a] * om.w(a, al) + c.v[a] * om.wu(a, al);
      }
      for (int be = 0; be < s; ++be) {
        double wb = 0.0;
        for (int b = 0; b < n; ++b) wb += om.w(b, be) * om.w(b, al);
        acc += U[n + be] * wb;
        acc += wv[be] * Xd(n + be, ia);
      }
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          const double vv = c.v[a] * c.v[b];
          if (vv == 0.0) continue;
          for (int A = 0; A < N; ++A) acc += R(a, ia, b, A) * U[A] * vv;
        }
      ddU[ia] = acc;
    }
    dy.segment(L.U(), N) = dU;
    dy.segment(L.dU(), N) = ddU;

    // X'_AC = -X_AB O_BC + O_AB X_BC + d_u O_AC + R_ACbD v_b U_D
    const Mat XO = -Xd * O + O * Xd;
    AntisymmetricMatrix dX(N);
    for (int A = 0; A < N; ++A)
      for (int C = A + 1; C < N; ++C) {
        double acc = XO(A, C) + Ou(A, C);
        for (int b = 0; b < n; ++b) {
          if (c.v[b] == 0.0) continue;
          for (int D = 0; D < N; ++D) acc += R(A, C, b, D) * c.v[b] * U[D];
        }
        dX.set(A, C, acc);
      }
    for (std::size_t k = 0; k < dX.packed().size(); ++k) dy[L.X() + static_cast<int>(k)] = dX.packed()[k];

    if (L.sv > 0) {
      AntisymmetricMatrix dXV(L.sv);
      for (int al = 0; al < L.sv; ++al)
        for (int be = al + 1; be < L.sv; ++be) {
          double acc = 0.0;
          for (int cc = 0; cc < n; ++cc)
            for (int d = 0; d < n; ++d) acc += c.rv(al, be, cc, d) * c.v[cc] * U[d];
          dXV.set(al, be, acc);
        }
      for (std::size_t k = 0; k < dXV.packed().size(); ++k) dy[L.XV() + static_cast<int>(k)] = dXV.packed()[k];
    }
  }

  VariationSample sample(double t, const Vec& y) const {
    const CoreLayout& L = layout_;
    const int n = L.n, s = L.s, N = L.N();
    const SliceCoefficients c = slices_.evaluate(t, sub_state(y), false);
    const Omega om = omega_of(c, n, s);
    VariationSample smp;
    smp.t = t;
    smp.x = y.segment(L.x(), N);
    smp.frame = unpack(y, L.E(), N, N);
    smp.U = y.segment(L.U(), N);
    smp.dU = y.segment(L.dU(), N);
    smp.X = unpack_antisym(y, L.X(), N);
    smp.XV = unpack_antisym(y, L.XV(), L.sv);
    smp.h = family_.rank() > 0 ? c.h : Tensor3({0, n, n});
    smp.v = c.v;
    // first-order identities of the system
    double worst = 0.0;
    for (int a = 0; a < n; ++a) {
      double z = smp.dU[a] - c.v_u[a];
      for (int al = 0; al < s; ++al) z -= smp.U[n + al] * om.w(a, al);
      for (int b = 0; b < n; ++b) z -= c.v[b] * smp.X(b, a);
      worst = std::max(worst, std::abs(z));
    }
    for (int al = 0; al < s; ++al) {
      double z = smp.dU[n + al];
      for (int a = 0; a < n; ++a) z += -c.v[a] * smp.X(a, n + al) + smp.U[a] * om.w(a, al);
      worst = std::max(worst, std::abs(z));
    }
    smp.torsion = worst;
    return smp;
  }

  FrameHygiene hygiene() const {
    FrameHygiene hy;
    const int N = layout_.N();
    const int off = layout_.E();
    hy.drift = [this, N, off](double, const Vec& y) {
      return gram_drift(unpack(y, off, N, N), metric_->metric_unchecked(y.head(N)));
    };
    hy.reorthonormalize = [this, N, off](double, Vec& y) {
      pack(y, off, reorthonormalize(unpack(y, off, N, N), metric_->metric_unchecked(y.head(N))));
    };
    return hy;
  }

 private:
  const FamilyInput& family_;
  double u_;
  SourceSlices slices_;
  CoreLayout layout_;
  MetricPtr metric_;
  VariationSide side_ = VariationSide::Source;
  int r_ = 0;
};

VariationTrajectory run(const FamilyInput& family, double u, const IntegratorConfig& config, VariationSide side,
                        int s_core, bool with_xv) {
  if (!family.sub) throw InvalidArgument("variation: submanifold required");
  if (!family.homotopy && !family.v) throw InvalidArgument("variation: homotopy or velocity data required");
  VariationSystem sys(family, u, config, side, s_core, with_xv);
  VariationTrajectory out;
  out.u = u;
  out.r = family.sub->dim();
  out.split = {sys.layout().n, sys.layout().s};
  out.initial = sys.initial_data();

  IntegratorConfig cfg = config;
  IvpOptions opts;
  const int N = sys.layout().N();
  opts.inside = [&sys, N](const Vec& y) { return sys.metric().domain().contains(y.head(N)); };
  opts.hygiene = sys.hygiene();
  const Trajectory traj = integrate_ivp([&sys](double t, const Vec& y, Vec& dy) { sys.rhs(t, y, dy); },
                                        sys.initial_state(out.initial), 0.0, 1.0, cfg, opts);
  out.samples.reserve(traj.t.size());
  for (std::size_t k = 0; k < traj.t.size(); ++k) out.samples.push_back(sys.sample(traj.t[k], traj.y[k]));
  return out;
}

}  // namespace

double VariationTrajectory::max_torsion() const {
  double m = 0.0;
  for (const auto& s : samples) m = std::max(m, s.torsion);
  return m;
}

VariationTrajectory solve_variation_isometry(const FamilyInput& family, double u, const IntegratorConfig& config,
                                             VariationSide side) {
  const bool xv = side == VariationSide::Source && family.rank() > 1;
  if (side == VariationSide::Target && family.target && family.target->metric->dim() != family.source_dim())
    throw InvalidArgument("variation: isometry target must have the source dimension");
  return run(family, u, config, side, 0, xv);
}

VariationTrajectory solve_variation_immersion(const FamilyInput& family, double u, const IntegratorConfig& config) {
  return run(family, u, config, VariationSide::Target, family.rank(), false);
}

double ReductionReport::max() const {
  return std::max({tangent_U, normal_U, tangent_X, bundle_X, mixed_X});
}

ReductionReport reduction_check(const VariationTrajectory& immersion, const VariationTrajectory& isometry,
                                double tolerance) {
  if (immersion.samples.size() != isometry.samples.size())
    throw InvalidArgument("reduction_check: trajectories have different grids");
  const int n = immersion.split.tangent_count;
  const int s = immersion.split.normal_count;
  if (isometry.split.tangent_count != n) throw InvalidArgument("reduction_check: tangent dimension mismatch");
  ReductionReport rep;
  rep.tolerance = tolerance;
  for (std::size_t k = 0; k < immersion.samples.size(); ++k) {
    const VariationSample& a = immersion.samples[k];
    const VariationSample& b = isometry.samples[k];
    if (std::abs(a.t - b.t) > 1e-12) throw InvalidArgument("reduction_check: grid times differ");
    for (int i = 0; i < n; ++i) {
      rep.tangent_U = std::max(rep.tangent_U, std::abs(a.U[i] - b.U[i]));
      for (int j = i + 1; j < n; ++j) rep.tangent_X = std::max(rep.tangent_X, std::abs(a.X(i, j) - b.X(i, j)));
    }
    for (int al = 0; al < s; ++al) {
      rep.normal_U = std::max(rep.normal_U, std::abs(a.U[n + al]));
      for (int be = al + 1; be < s; ++be) {
        const double src = b.XV.dim() == s ? b.XV(al, be) : 0.0;
        rep.bundle_X = std::max(rep.bundle_X, std::abs(a.X(n + al, n + be) - src));
      }
      for (int i = 0; i < n; ++i) {
        double hu = 0.0;
        for (int j = 0; j < n; ++j) hu += a.h(al, i, j) * b.U[j];
        rep.mixed_X = std::max(rep.mixed_X, std::abs(a.X(i, n + al) - hu));
      }
    }
  }
  return rep;
}

}  // namespace cah
