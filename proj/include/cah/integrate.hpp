#pragma once

#include <functional>
#include <vector>

#include "cah/tensor.hpp"

namespace cah {

enum class Method { Rk4, Rk45 };

struct ReorthoPolicy {
  enum class Kind { Never, EveryK, Drift };
  Kind kind = Kind::Drift;
  int every = 16;     // steps between checks (EveryK, Drift)
  double tau = 1e-9;  // drift threshold (Drift)
};

struct IntegratorConfig {
  Method method = Method::Rk4;
  int steps = 1000;  // fixed RK4 steps per unit parameter
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  ReorthoPolicy reortho;

  // Throws InvalidArgument.
  void validate() const;
  // Number of fixed steps over an interval of the given length (at least 1).
  int steps_for(double length) const;
};

using OdeRhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

// Frame hygiene hook: `drift` measures max |<F_A,F_B> - delta_AB| over every
// frame in the packed state, `reorthonormalize` repairs them in place.
struct FrameHygiene {
  std::function<double(double, const Vec&)> drift;
  std::function<void(double, Vec&)> reorthonormalize;
  explicit operator bool() const { return static_cast<bool>(reorthonormalize); }
};

struct IvpOptions {
  // Checked at every accepted node; failure raises ChartExit.
  std::function<bool(const Vec&)> inside;
  FrameHygiene hygiene;
  // Output times (strictly monotone, inside [t0,t1]); empty records every step.
  std::vector<double> output_grid;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> y;
  int reorthonormalizations = 0;

  const Vec& back() const { return y.back(); }
};

// Deterministic: repeated calls with equal inputs give bit-identical output.
Trajectory integrate_ivp(const OdeRhs& rhs, const Vec& y0, double t0, double t1,
                         const IntegratorConfig& config, const IvpOptions& options = {});

struct FrameState {
  double t = 0.0;
  Vec x;
  Mat frame;  // columns are the frame vectors in chart components
  double gram_drift = 0.0;
};

// max_{A,B} |F_A^T G F_B - delta_AB|
double gram_drift(const Mat& frame, const Mat& G);

// Modified Gram-Schmidt in index order with respect to G. Returns the input
// unchanged when it is already orthonormal to machine precision. Throws
// RankDeficient when the frame's condition number exceeds 1e12.
Mat reorthonormalize(const Mat& frame, const Mat& G);

}  // namespace cah
