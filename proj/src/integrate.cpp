#include "cah/integrate.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cah/errors.hpp"

namespace cah {

void IntegratorConfig::validate() const {
  if (steps < 1) throw InvalidArgument("integrator: steps must be >= 1");
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw InvalidArgument("integrator: tolerances must be > 0");
  if (reortho.kind != ReorthoPolicy::Kind::Never && reortho.every < 1)
    throw InvalidArgument("integrator: reortho interval must be >= 1");
  if (reortho.kind == ReorthoPolicy::Kind::Drift && !(reortho.tau > 0.0))
    throw InvalidArgument("integrator: reortho tau must be > 0");
}

int IntegratorConfig::steps_for(double length) const {
  const double n = std::ceil(std::abs(length) * steps - 1e-9);
  return std::max(1, static_cast<int>(n));
}

namespace {

class HygieneCounter {
 public:
  HygieneCounter(const ReorthoPolicy& policy, const FrameHygiene& hygiene) : policy_(policy), hygiene_(hygiene) {}

  void after_step(double t, Vec& y, int& count) {
    if (!hygiene_ || policy_.kind == ReorthoPolicy::Kind::Never) return;
    if (++since_ < policy_.every) return;
    since_ = 0;
    if (policy_.kind == ReorthoPolicy::Kind::Drift) {
      if (!hygiene_.drift || hygiene_.drift(t, y) <= policy_.tau) return;
    }
    hygiene_.reorthonormalize(t, y);
    ++count;
  }

 private:
  const ReorthoPolicy& policy_;
  const FrameHygiene& hygiene_;
  int since_ = 0;
};

void rk4_step(const OdeRhs& rhs, double t, double h, Vec& y, Vec& k1, Vec& k2, Vec& k3, Vec& k4, Vec& tmp) {
  rhs(t, y, k1);
  tmp = y + (0.5 * h) * k1;
  rhs(t + 0.5 * h, tmp, k2);
  tmp = y + (0.5 * h) * k2;
  rhs(t + 0.5 * h, tmp, k3);
  tmp = y + h * k3;
  rhs(t + h, tmp, k4);
  y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::vector<double> segment_ends(double t0, double t1, const std::vector<double>& grid) {
  std::vector<double> ends;
  const double dir = t1 >= t0 ? 1.0 : -1.0;
  for (double g : grid) {
    if ((g - t0) * dir <= 0.0 || (g - t1) * dir > 0.0) continue;
    if (!ends.empty() && (g - ends.back()) * dir <= 0.0)
      throw InvalidArgument("integrator: output grid must be strictly monotone");
    ends.push_back(g);
  }
  if (ends.empty() || ends.back() != t1) ends.push_back(t1);
  return ends;
}

void check_inside(const IvpOptions& options, const Vec& y, double t_prev, double t) {
  if (options.inside && !options.inside(y)) {
    throw ChartExit("solution left the chart domain near t=" + std::to_string(t), t_prev);
  }
}

Trajectory integrate_rk4(const OdeRhs& rhs, const Vec& y0, double t0, double t1, const IntegratorConfig& config,
                         const IvpOptions& options) {
  Trajectory out;
  Vec y = y0;
  Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), tmp(y.size());
  HygieneCounter hygiene(config.reortho, options.hygiene);
  const bool record_all = options.output_grid.empty();

  const bool grid_has_start = !options.output_grid.empty() && options.output_grid.front() == t0;
  if (record_all || grid_has_start) {
    out.t.push_back(t0);
    out.y.push_back(y);
  }
  if (t1 == t0) return out;

  std::vector<double> ends = record_all ? std::vector<double>{t1} : segment_ends(t0, t1, options.output_grid);
  double t_start = t0;
  for (double t_end : ends) {
    const int n = config.steps_for(t_end - t_start);
    const double h = (t_end - t_start) / n;
    for (int k = 0; k < n; ++k) {
      const double t = t_start + k * h;
      const double t_next = (k + 1 == n) ? t_end : t_start + (k + 1) * h;
      rk4_step(rhs, t, h, y, k1, k2, k3, k4, tmp);
      check_inside(options, y, t, t_next);
      hygiene.after_step(t_next, y, out.reorthonormalizations);
      if (record_all) {
        out.t.push_back(t_next);
        out.y.push_back(y);
      }
    }
    if (!record_all) {
      out.t.push_back(t_end);
      out.y.push_back(y);
    }
    t_start = t_end;
  }
  return out;
}

// Dormand-Prince 5(4) with standard step-size control. Steps are clipped so
// that each requested output time is hit exactly.
Trajectory integrate_rk45(const OdeRhs& rhs, const Vec& y0, double t0, double t1, const IntegratorConfig& config,
                          const IvpOptions& options) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  Trajectory out;
  const int m = static_cast<int>(y0.size());
  Vec y = y0;
  Vec k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m), tmp(m), y_new(m), err(m);
  HygieneCounter hygiene(config.reortho, options.hygiene);
  const bool record_all = options.output_grid.empty();
  const bool grid_has_start = !options.output_grid.empty() && options.output_grid.front() == t0;
  if (record_all || grid_has_start) {
    out.t.push_back(t0);
    out.y.push_back(y);
  }
  if (t1 == t0) return out;

  const double dir = t1 > t0 ? 1.0 : -1.0;
  std::vector<double> ends = record_all ? std::vector<double>{t1} : segment_ends(t0, t1, options.output_grid);
  double t = t0;
  double h = dir * std::min(std::abs(t1 - t0), 1.0 / config.steps);
  rhs(t, y, k1);
  std::size_t next_end = 0;
  while (next_end < ends.size()) {
    const double target = ends[next_end];
    bool hits_target = false;
    if ((t + h - target) * dir >= 0.0) {
      h = target - t;
      hits_target = true;
    }
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t))) throw StepSizeUnderflow("rk45: step size underflow", t);

    tmp = y + h * (a21 * k1);
    rhs(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, tmp, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + h, y_new, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err_norm = 0.0;
    for (int i = 0; i < m; ++i) {
      const double scale = config.abs_tol + config.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      err_norm = std::max(err_norm, std::abs(err[i]) / scale);
    }
    if (err_norm <= 1.0) {
      const double t_new = hits_target ? target : t + h;
      check_inside(options, y_new, t, t_new);
      t = t_new;
      y = y_new;
      const int before = out.reorthonormalizations;
      hygiene.after_step(t, y, out.reorthonormalizations);
      if (out.reorthonormalizations != before) {
        rhs(t, y, k1);
      } else {
        k1 = k7;
      }
      if (record_all || hits_target) {
        out.t.push_back(t);
        out.y.push_back(y);
      }
      if (hits_target) ++next_end;
    }
    const double factor =
        err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    h *= (err_norm <= 1.0) ? factor : std::min(1.0, factor);
  }
  return out;
}

}  // namespace

Trajectory integrate_ivp(const OdeRhs& rhs, const Vec& y0, double t0, double t1, const IntegratorConfig& config,
                         const IvpOptions& options) {
  config.validate();
  if (config.method == Method::Rk4) return integrate_rk4(rhs, y0, t0, t1, config, options);
  return integrate_rk45(rhs, y0, t0, t1, config, options);
}

double gram_drift(const Mat& frame, const Mat& G) {
  const Mat gram = frame.transpose() * G * frame;
  return (gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

Mat reorthonormalize(const Mat& frame, const Mat& G) {
  if (frame.cols() == 0) return frame;
  const double eps = std::numeric_limits<double>::epsilon();
  if (gram_drift(frame, G) <= 4.0 * eps) return frame;

  const Mat gram = frame.transpose() * G * frame;
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || std::sqrt(hi / lo) > 1e12) throw RankDeficient("reorthonormalize: frame is numerically dependent");

  Mat out = frame;
  for (int k = 0; k < out.cols(); ++k) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < k; ++j) {
        const double proj = out.col(j).dot(G * out.col(k));
        out.col(k) -= proj * out.col(j);
      }
    }
    const double norm = std::sqrt(out.col(k).dot(G * out.col(k)));
    out.col(k) /= norm;
  }
  return out;
}

}  // namespace cah
