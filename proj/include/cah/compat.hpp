#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cah/reconstruct.hpp"

namespace cah {

struct CheckOptions {
  int curves = 16;                  // seeded straight segments from S
  std::vector<CurvePath> extra;     // user curves, appended after the seeded ones
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  double segment_length = 0.5;      // chart units
  int random_quadruples = 256;      // used when n + s > 4
  int bundle_samples = 16;          // parameter samples for check_bundle_maps
  int threads = 1;
  IntegratorConfig config;
};

struct HypothesisReport {
  std::string condition;
  int curves_sampled = 0;
  int curves_failed = 0;
  double max_residual = 0.0;  // raw / scale
  double raw_residual = 0.0;
  double scale = 1.0;         // max(1, largest curvature component seen)
  double tolerance = 1e-5;
  int worst_curve = -1;
  std::array<int, 4> worst_indices{-1, -1, -1, -1};
  std::uint64_t seed = 0;
  std::map<std::string, double> components;
  std::vector<std::string> errors;  // per-curve failures, "curve k: message"

  bool pass() const { return max_residual < tolerance; }
};

// Seeded straight segments from random points of S plus options.extra.
std::vector<CurvePath> sample_curves(const CahProblem& problem, const CheckOptions& options);

// |R~(tau X, tau Y, tau Z, tau W) - R(X, Y, Z, W)| at gamma(1), orthonormal frames.
HypothesisReport check_isometry_curvature(const CahProblem& problem, const CheckOptions& options = {});
// R - tau*R~ - <h(X,W),h(Y,Z)> + <h(X,Z),h(Y,W)>. With s = 0 this is the
// same computation as check_isometry_curvature.
HypothesisReport check_gauss(const CahProblem& problem, const CheckOptions& options = {});
// (D_X h)(Y,Z) - (D_Y h)(X,Z) - (tau*R~)(Z, xi, X, Y)
HypothesisReport check_codazzi(const CahProblem& problem, const CheckOptions& options = {});
// R^V(xi,eta,X,Y) - (tau*R~)(xi,eta,X,Y) - <A_xi Y, A_eta X> + <A_eta Y, A_xi X>
HypothesisReport check_ricci(const CahProblem& problem, const CheckOptions& options = {});
// Components "gramian", "connection", "second_fundamental_form".
HypothesisReport check_bundle_maps(const CahProblem& problem, const CheckOptions& options = {});

// Condition names: curvature, gauss, codazzi, ricci, maps.
HypothesisReport run_check(const std::string& condition, const CahProblem& problem, const CheckOptions& options = {});

}  // namespace cah
