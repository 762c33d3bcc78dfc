#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cah/reconstruct.hpp"

namespace cah::scenarios {

// Metrics. Every catalog metric carries analytic first and second derivatives
// unless `mode` asks for finite differences.
MetricPtr euclidean(int dim, double half_width = 10.0, DerivativeMode mode = DerivativeMode::Analytic);
// radius^2 (dtheta^2 + sin^2 theta dphi^2) on theta in [margin, pi - margin], phi in [-4 pi, 4 pi].
MetricPtr sphere(double radius = 1.0, double theta_margin = 0.3, DerivativeMode mode = DerivativeMode::Analytic);
// (dx^2 + dy^2) / y^2 on x in [-10, 10], y in [0.05, 20].
MetricPtr hyperbolic_half_plane(DerivativeMode mode = DerivativeMode::Analytic);
// Euclidean plane chart x in [-10, 10], y in [-1, 5].
MetricPtr flat_strip();

// Submanifolds (r >= 1).
std::shared_ptr<SubmanifoldSpec> equator(MetricPtr sphere_metric);
std::shared_ptr<SubmanifoldSpec> latitude(MetricPtr sphere_metric, double theta0);
// Image of the equator under the rotation about the x-axis by beta, in sphere chart coordinates.
std::shared_ptr<SubmanifoldSpec> tilted_equator(MetricPtr sphere_metric, double beta);
// y = height in a planar chart, parameter range [-half_length, half_length].
std::shared_ptr<SubmanifoldSpec> horizontal_line(MetricPtr plane, double height = 0.0, double half_length = 3.0);
// t -> t (cos beta, sin beta) in a planar chart.
std::shared_ptr<SubmanifoldSpec> rotated_line(MetricPtr plane, double beta, double half_length = 3.0);
// phi -> radius (cos phi, sin phi, 0, ..., 0) in a Euclidean chart of dimension >= 2.
std::shared_ptr<SubmanifoldSpec> planar_circle(MetricPtr space, double radius = 1.0);
// t -> t e_1 in a Euclidean chart.
std::shared_ptr<SubmanifoldSpec> axis_line(MetricPtr space, double half_length = 1.0);

// Rank-1 flat bundle over a sphere chart with h = (scale + bump cos theta) g / radius.
std::shared_ptr<BundleData> sphere_normal_data(MetricPtr sphere_metric, double radius, double scale = 1.0,
                                               double bump = 0.0);
// Rank-2 bundle over the Euclidean plane with connection A(d_y) = kappa x J and
// constant h whose shape operators do not commute. kappa = -2 satisfies the
// Ricci condition into flat 4-space.
std::shared_ptr<BundleData> flat_rank2_ricci_data(MetricPtr plane, double kappa);

// Problems.
CahProblem identity_sphere();
CahProblem identity_flat();
CahProblem identity_halfplane(CahMode mode = CahMode::CartanIsometry);
CahProblem identity_hyperbolic();
CahProblem rotation_sphere(double beta = 3.14159265358979323846 / 6.0);
CahProblem flat_rotation(double beta);
// Unit sphere against a sphere of the given radius, equator data matched by arclength.
CahProblem radius_mismatch(double radius);
// Target curvature multiplied by `factor` (radius 1 / sqrt(factor)).
CahProblem flattened_target(double factor = 0.99);
CahProblem sphere_into_r3(double h_scale = 1.0, double psi_scale = 1.0, double bump = 0.0,
                          CahMode mode = CahMode::Immersion);
// Ricci-only scenario: S is the x-axis, the target is flat 4-space with the
// x-axis and constant psi. Only the Ricci condition is meaningful here.
CahProblem flat_rank2_ricci(double kappa = -2.0);

// Names accepted by make_problem.
std::vector<std::string> problem_names();

// Oracles, independent of the transport and development solvers.

// Rotation angle 2 pi (1 - cos theta0) of the latitude holonomy at theta0,
// measured from e_theta towards e_phi / sin(theta0) after one eastward loop.
// Throws InvalidArgument outside (0, pi).
double oracle_holonomy_sphere(double theta0);
// Classical RK4 on the second-order geodesic equation with 4000 steps per unit time.
// Throws ChartExit.
Vec oracle_geodesic(const MetricField& metric, const Vec& p, const Vec& w, double t);
// Great circle through the chart point p with chart velocity w on the unit
// sphere, returned as a point of 3-space.
Vec sphere_geodesic_closed_form(const Vec& p, const Vec& w, double t);
// (theta, phi) -> radius (sin theta cos phi, sin theta sin phi, cos theta).
Vec oracle_sphere_embedding(const Vec& chart_point, double radius = 1.0);
// Chart expression of the rotation about the x-axis by beta, with phi
// continued from the input point.
Vec oracle_rotation_chart(const Vec& chart_point, double beta);
// Chart Jacobian of oracle_rotation_chart.
Mat oracle_rotation_jacobian(const Vec& chart_point, double beta);

}  // namespace cah::scenarios
