#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cah/geometry.hpp"
#include "cah/integrate.hpp"
#include "cah/transport.hpp"
#include "cah/variation.hpp"

namespace cah {

// phi: S -> S~ on parameters, psi on T^perp S (and on V|_S in immersion mode).
struct BundleMaps {
  std::function<Vec(const Vec& param)> phi;
  // Parameter Jacobian of phi (r x r). Finite differences when empty.
  std::function<Mat(const Vec& param)> phi_jacobian;
  // Chart matrix (N~ x n) whose action on normal vectors at x(param) is psi.
  std::function<Mat(const Vec& param)> psi_normal;
  // Chart matrix (N~ x s) mapping fiber components to T^perp S~.
  std::function<Mat(const Vec& param)> psi_fiber;
};

enum class CahMode { Isometry, Immersion, CartanIsometry, CartanImmersion };

const char* to_string(CahMode mode);

struct CahProblem {
  std::string name;
  CahMode mode = CahMode::Isometry;
  std::shared_ptr<const SubmanifoldSpec> source;
  std::shared_ptr<const BundleData> bundle;  // immersion modes
  std::shared_ptr<const SubmanifoldSpec> target;
  BundleMaps maps;

  bool immersion() const { return mode == CahMode::Immersion || mode == CahMode::CartanImmersion; }
  int n() const { return source->ambient().dim(); }
  int r() const { return source->dim(); }
  int s() const { return bundle ? bundle->rank() : 0; }
  const MetricField& source_metric() const { return source->ambient(); }
  const MetricField& target_metric() const { return target->ambient(); }

  // Throws InvalidArgument when dimensions do not match the mode.
  void validate() const;

  Mat phi_jacobian(const Vec& param) const;
  // phi_* on T_xS plus psi on the normal space, as an N~ x n chart matrix.
  Mat tilde_psi(const Vec& param) const;
  // [tilde_psi | psi_fiber]: N~ x (n + s).
  Mat transfer(const Vec& param) const;
  // Target point phi(x(param)) in chart coordinates.
  Vec target_point(const Vec& param) const;

  // Source-family adapter: target data for variation solves.
  TargetData target_data() const;
};

// tau_gamma in chart bases at gamma(1) and gamma~(1): maps (chart vector,
// fiber components) to target chart vectors.
struct TransportedIsomorphism {
  Vec source_point;
  Vec target_point;
  Mat matrix;  // N~ x (n + s)
  Mat source_gram;  // blockdiag(g, fib) at the source point
  Mat target_gram;  // g~ at the target point

  // max |tau^T g~ tau - blockdiag(g, fib)|
  double gram_residual() const;
};

struct Reconstruction {
  Vec point;           // gamma(1)
  Vec f_point;         // f(gamma(1))
  TransportedIsomorphism tau;
  Mat fiber_map;       // f~ in immersion mode: N~ x s
  Development source;  // frames (E, F stacked) along gamma
  Development target;  // generalized development along gamma~
  Vec start_param;     // snapped S-parameters of gamma(0)
};

// Velocity form of the source curve: gamma' = sum v_a E_a from a point on S.
struct SourceVelocity {
  Vec param;
  Mat frame;  // n x n at x(param); empty selects the adapted frame
  VelocityProfile v;
};

// Coupled source/target solve along gamma. gamma(0) is snapped onto S
// (tolerance 1e-6 chart units). Throws ChartExit if either side leaves its chart.
Reconstruction reconstruct_along(const CahProblem& problem, const CurvePath& gamma, const IntegratorConfig& config = {});
Reconstruction reconstruct_along(const CahProblem& problem, const SourceVelocity& gamma,
                                 const IntegratorConfig& config = {});

struct WellDefinedReport {
  std::vector<double> u;
  std::vector<Vec> endpoints;
  double drift = 0.0;    // max_u |gamma~_u(1) - gamma~_0(1)| in target chart units
  double worst_u = 0.0;
  double tolerance = 1e-6;
  bool pass() const { return drift < tolerance; }
};

WellDefinedReport well_definedness(const CahProblem& problem, const Homotopy& homotopy, int slices = 11,
                                   const IntegratorConfig& config = {}, double tolerance = 1e-6, int threads = 1);

// Straight chart segment to x from its nearest point on S.
CurvePath straight_path_from_s(const CahProblem& problem, const Vec& x);

// f(x) along the default straight path (or `gamma` when given).
Reconstruction reconstruct_map(const CahProblem& problem, const Vec& x, const IntegratorConfig& config = {},
                               const std::optional<CurvePath>& gamma = std::nullopt);

struct CartanResult {
  Reconstruction reconstruction;
  Vec param;          // foot point on S
  Vec normal;         // gamma'(0) components in the normal block of the adapted frame
  int iterations = 0;
  int solutions = 1;  // distinct solutions found while probing
  bool unique = true;
};

// Newton shooting of a normal geodesic from S to x (at most 50 iterations).
// Throws ConvergenceFailure if no start converges.
CartanResult cartan_normal_map(const CahProblem& problem, const Vec& x, const IntegratorConfig& config = {});

}  // namespace cah
