#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "cah/geometry.hpp"
#include "cah/integrate.hpp"
#include "cah/transport.hpp"

namespace cah {

// Frames along a curve theta in S: e_i parallel on S, e_mu parallel in the
// normal bundle, F_alpha parallel for the bundle connection.
struct ThetaFrame {
  double u = 0.0;
  Vec param;   // S-parameters of theta(u)
  Vec point;   // chart point of theta(u)
  Mat frame;   // n x n, first r columns tangent to S
  Mat fiber;   // s x s, fiber-orthonormal
};

// Side of the comparison on which a variation is solved.
struct TargetData {
  MetricPtr metric;
  // Initial point of the target development for the S-parameters of theta(u).
  std::function<Vec(const Vec& param)> point;
  // Target chart frame (phi_* + psi)(e_A) for source frames at theta(u):
  // columns are the images of the n source frame vectors, then of the s fiber vectors.
  std::function<Mat(const Vec& param, const Mat& frame, const Mat& fiber)> lift;
};

// One-parameter family of curves starting on S, given either as a homotopy
// Phi(u, t) or as velocity data v(u, t) in the parallel frame along theta.
struct FamilyInput {
  std::shared_ptr<const SubmanifoldSpec> sub;
  std::shared_ptr<const BundleData> bundle;  // may be null (rank 0)

  std::optional<Homotopy> homotopy;

  // Velocity form. theta gives S-parameters; theta_dot is optional.
  std::function<Vec(double u)> theta;
  std::function<Vec(double u)> theta_dot;
  std::function<Vec(double u, double t)> v;
  std::function<Vec(double u, double t)> v_t;   // optional
  std::function<Vec(double u, double t)> v_u;   // optional
  std::function<Vec(double u, double t)> v_ut;  // optional

  std::optional<TargetData> target;

  // Initial frame at theta(0). Empty selects the adapted frame and the
  // orthonormalised trivialising fiber frame.
  Mat initial_frame;
  Mat initial_fiber;

  double du_first = 1e-5;   // central-difference step for d/du
  double du_mixed = 1e-4;   // central-difference step for d/du d/dt (velocity form)

  int source_dim() const { return sub->ambient().dim(); }
  int rank() const { return bundle ? bundle->rank() : 0; }
  Vec theta_param(double u) const;
};

// Frame along theta at u, from the Darboux system integrated from u = 0.
ThetaFrame theta_frame(const FamilyInput& family, double u, const IntegratorConfig& config = {});
// Single fourth-order step from a known frame to a nearby u.
ThetaFrame advance_theta_frame(const FamilyInput& family, const ThetaFrame& from, double u);

// Coefficients of one slice at one time, in the transported source frames.
struct SliceCoefficients {
  Vec v, v_t, v_u, v_ut;  // n
  Tensor3 h, h_t, h_u;    // (alpha, a, b)
  Tensor4 rv;             // (alpha, beta, c, d)
};

struct VariationSample {
  double t = 0.0;
  Vec x;
  Mat frame;
  Vec U;                    // U_A
  Vec dU;                   // U'_A
  AntisymmetricMatrix X;    // X_AB
  AntisymmetricMatrix XV;   // bundle block on the source side
  Tensor3 h;                // h_ab^alpha along the source slice
  Vec v;
  double torsion = 0.0;     // max |first-order identity residual|
};

// Initial data of the variation system at one u.
struct VariationInitialData {
  Vec theta;               // theta_i
  Tensor3 sigma;           // (mu - r, i, j)
  Vec U, dU;
  AntisymmetricMatrix X;
};

struct VariationTrajectory {
  double u = 0.0;
  int r = 0;
  FrameSplit split;
  VariationInitialData initial;
  std::vector<VariationSample> samples;

  double max_torsion() const;
};

enum class VariationSide { Source, Target };

// System with empty normal block. On the source side an extra bundle block
// X_ab^V with X' = R^V v U is carried when the family has a bundle.
VariationTrajectory solve_variation_isometry(const FamilyInput& family, double u, const IntegratorConfig& config = {},
                                             VariationSide side = VariationSide::Source);

// Target-side system with the tangent/normal split (n, s). With s = 0 this is
// the same computation as solve_variation_isometry on the target side.
VariationTrajectory solve_variation_immersion(const FamilyInput& family, double u, const IntegratorConfig& config = {});

struct ReductionReport {
  double tangent_U = 0.0;   // |U~_a - U_a|
  double normal_U = 0.0;    // |U~_alpha|
  double tangent_X = 0.0;   // |X~_ab - X_ab|
  double bundle_X = 0.0;    // |X~_alpha beta - X_alpha beta|
  double mixed_X = 0.0;     // |X~_a alpha - h_ab^alpha U_b|
  double tolerance = 1e-6;

  double max() const;
  bool pass() const { return max() < tolerance; }
};

// Throws InvalidArgument on grid mismatch.
ReductionReport reduction_check(const VariationTrajectory& immersion, const VariationTrajectory& isometry,
                                double tolerance = 1e-6);

}  // namespace cah
