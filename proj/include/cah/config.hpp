#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>

#include <json.hpp>

#include "cah/errors.hpp"
#include "cah/reconstruct.hpp"
#include "cah/transport.hpp"

namespace cah {

using Json = nlohmann::json;

// Schema violation in a run configuration.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Throws ConfigError naming the first key of `object` outside `allowed`.
void require_keys(const Json& object, std::initializer_list<const char*> allowed, const std::string& context);

IntegratorConfig parse_integrator(const Json& j);

// {"name": "euclidean" | "sphere" | "hyperbolic_half_plane" | "flat_strip" | "constant", ...}
MetricPtr parse_metric(const Json& j);

// {"name": <catalog problem>, parameters...}
CahProblem parse_problem(const Json& j);
CahProblem make_problem(const std::string& name, const Json& params = Json::object());

Vec parse_vec(const Json& j, const std::string& context, int dim = -1);
Mat parse_mat(const Json& j, const std::string& context, int rows = -1, int cols = -1);

// {"t": [...], "points": [[...], ...]} or {"from": [...], "to": [...]}
CurvePath parse_curve(const Json& j, int dim);
// {"constant": [...]} or {"t": [...], "values": [[...], ...]}
VelocityProfile parse_velocity(const Json& j, int dim);
// {"split": [n, s], "constant": [[[...]]]} with extents (s, n, n); absent h is zero.
HProfile parse_h(const Json& j, int n, int s);

// Homotopy Phi(u, t) = (1 - t) S(p(u)) + t x + u sin(pi t) bend, where p(u)
// interpolates the S-parameters "from" (u = 0) and "to" (u = 1):
// {"from": [...], "to": [...], "target": [...], "bend": [...]}
Homotopy parse_homotopy(const Json& j, const CahProblem& problem);

struct RunConfig {
  std::string command;
  Json body;  // the full validated document
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<double> tolerance;
  std::string out_dir;
  IntegratorConfig integrator;
};

// Validates top-level keys for the command and the shared fields.
RunConfig parse_run_config(const Json& j, const std::string& command);

}  // namespace cah
