#include "cah/config.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include "cah/scenarios.hpp"

namespace cah {

void require_keys(const Json& object, std::initializer_list<const char*> allowed, const std::string& context) {
  if (!object.is_object()) throw ConfigError(context + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : object.items())
    if (!ok.count(item.key())) throw ConfigError(context + ": unknown field '" + item.key() + "'");
}

namespace {

double number(const Json& j, const std::string& context) {
  if (!j.is_number()) throw ConfigError(context + ": expected a number");
  return j.get<double>();
}

double number_or(const Json& obj, const char* key, double fallback, const std::string& context) {
  return obj.contains(key) ? number(obj.at(key), context + "." + key) : fallback;
}

int integer(const Json& j, const std::string& context) {
  if (!j.is_number_integer()) throw ConfigError(context + ": expected an integer");
  return j.get<int>();
}

std::string string(const Json& j, const std::string& context) {
  if (!j.is_string()) throw ConfigError(context + ": expected a string");
  return j.get<std::string>();
}

std::vector<double> numbers(const Json& j, const std::string& context) {
  if (!j.is_array()) throw ConfigError(context + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], context + "[" + std::to_string(k) + "]"));
  return out;
}

CahMode parse_mode(const std::string& s) {
  if (s == "isometry") return CahMode::Isometry;
  if (s == "immersion") return CahMode::Immersion;
  if (s == "cartan-isometry") return CahMode::CartanIsometry;
  if (s == "cartan-immersion") return CahMode::CartanImmersion;
  throw ConfigError("problem.mode: unknown mode '" + s + "'");
}

DerivativeMode parse_derivatives(const Json& j) {
  if (!j.contains("derivatives")) return DerivativeMode::Analytic;
  const std::string s = string(j.at("derivatives"), "metric.derivatives");
  if (s == "analytic") return DerivativeMode::Analytic;
  if (s == "finite-difference") return DerivativeMode::FiniteDifference;
  throw ConfigError("metric.derivatives: expected 'analytic' or 'finite-difference'");
}

}  // namespace

Vec parse_vec(const Json& j, const std::string& context, int dim) {
  const std::vector<double> v = numbers(j, context);
  if (dim >= 0 && static_cast<int>(v.size()) != dim)
    throw ConfigError(context + ": expected " + std::to_string(dim) + " components");
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Mat parse_mat(const Json& j, const std::string& context, int rows, int cols) {
  if (!j.is_array() || j.empty()) throw ConfigError(context + ": expected a non-empty array of rows");
  const int r = static_cast<int>(j.size());
  const int c = static_cast<int>(numbers(j[0], context + "[0]").size());
  if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols))
    throw ConfigError(context + ": expected a " + std::to_string(rows) + " x " + std::to_string(cols) + " matrix");
  Mat m(r, c);
  for (int i = 0; i < r; ++i) m.row(i) = parse_vec(j[i], context + "[" + std::to_string(i) + "]", c).transpose();
  return m;
}

IntegratorConfig parse_integrator(const Json& j) {
  require_keys(j, {"method", "steps", "rel_tol", "abs_tol", "reortho"}, "integrator");
  IntegratorConfig c;
  if (j.contains("method")) {
    const std::string m = string(j.at("method"), "integrator.method");
    if (m == "rk4") c.method = Method::Rk4;
    else if (m == "rk45") c.method = Method::Rk45;
    else throw ConfigError("integrator.method: expected 'rk4' or 'rk45'");
  }
  if (j.contains("steps")) c.steps = integer(j.at("steps"), "integrator.steps");
  c.rel_tol = number_or(j, "rel_tol", c.rel_tol, "integrator");
  c.abs_tol = number_or(j, "abs_tol", c.abs_tol, "integrator");
  if (j.contains("reortho")) {
    const Json& r = j.at("reortho");
    require_keys(r, {"policy", "every", "tau"}, "integrator.reortho");
    if (r.contains("policy")) {
      const std::string k = string(r.at("policy"), "integrator.reortho.policy");
      if (k == "never") c.reortho.kind = ReorthoPolicy::Kind::Never;
      else if (k == "every") c.reortho.kind = ReorthoPolicy::Kind::EveryK;
      else if (k == "drift") c.reortho.kind = ReorthoPolicy::Kind::Drift;
      else throw ConfigError("integrator.reortho.policy: expected 'never', 'every' or 'drift'");
    }
    if (r.contains("every")) c.reortho.every = integer(r.at("every"), "integrator.reortho.every");
    c.reortho.tau = number_or(r, "tau", c.reortho.tau, "integrator.reortho");
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("integrator: ") + e.what());
  }
  return c;
}

MetricPtr parse_metric(const Json& j) {
  if (!j.is_object() || !j.contains("name")) throw ConfigError("metric: expected an object with a 'name'");
  const std::string name = string(j.at("name"), "metric.name");
  if (name == "euclidean") {
    require_keys(j, {"name", "dim", "half_width", "derivatives"}, "metric");
    if (!j.contains("dim")) throw ConfigError("metric: euclidean needs 'dim'");
    const int dim = integer(j.at("dim"), "metric.dim");
    if (dim < 1) throw ConfigError("metric.dim: must be positive");
    return scenarios::euclidean(dim, number_or(j, "half_width", 10.0, "metric"), parse_derivatives(j));
  }
  if (name == "sphere") {
    require_keys(j, {"name", "radius", "theta_margin", "derivatives"}, "metric");
    try {
      return scenarios::sphere(number_or(j, "radius", 1.0, "metric"), number_or(j, "theta_margin", 0.3, "metric"),
                               parse_derivatives(j));
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (name == "hyperbolic_half_plane") {
    require_keys(j, {"name", "derivatives"}, "metric");
    return scenarios::hyperbolic_half_plane(parse_derivatives(j));
  }
  if (name == "flat_strip") {
    require_keys(j, {"name"}, "metric");
    return scenarios::flat_strip();
  }
  if (name == "constant") {
    require_keys(j, {"name", "matrix", "lo", "hi"}, "metric");
    if (!j.contains("matrix") || !j.contains("lo") || !j.contains("hi"))
      throw ConfigError("metric: constant metric needs 'matrix', 'lo' and 'hi'");
    const Mat g = parse_mat(j.at("matrix"), "metric.matrix");
    const int n = static_cast<int>(g.rows());
    if (g.cols() != n) throw ConfigError("metric.matrix: must be square");
    Box box{parse_vec(j.at("lo"), "metric.lo", n), parse_vec(j.at("hi"), "metric.hi", n)};
    MetricField m(n, box, [g](const Vec&) { return g; }, "constant");
    m.with_derivatives([n](const Vec&) { return Tensor3({n, n, n}); },
                       [n](const Vec&) { return Tensor4({n, n, n, n}); });
    try {
      m.metric(box.clamp(Vec::Zero(n)));
    } catch (const GeometryError& e) {
      throw ConfigError(std::string("metric.matrix: ") + e.what());
    }
    return std::make_shared<const MetricField>(std::move(m));
  }
  throw ConfigError("metric.name: unknown metric '" + name + "'");
}

CahProblem make_problem(const std::string& name, const Json& params) {
  const std::string ctx = "problem";
  CahProblem p;
  if (name == "identity_sphere") {
    require_keys(params, {"name", "mode"}, ctx);
    p = scenarios::identity_sphere();
  } else if (name == "identity_flat") {
    require_keys(params, {"name", "mode"}, ctx);
    p = scenarios::identity_flat();
  } else if (name == "identity_halfplane") {
    require_keys(params, {"name", "mode"}, ctx);
    p = scenarios::identity_halfplane();
  } else if (name == "identity_hyperbolic") {
    require_keys(params, {"name", "mode"}, ctx);
    p = scenarios::identity_hyperbolic();
  } else if (name == "rotation_sphere") {
    require_keys(params, {"name", "mode", "beta"}, ctx);
    p = scenarios::rotation_sphere(number_or(params, "beta", std::numbers::pi / 6, ctx));
  } else if (name == "flat_rotation") {
    require_keys(params, {"name", "mode", "beta"}, ctx);
    p = scenarios::flat_rotation(number_or(params, "beta", std::numbers::pi / 6, ctx));
  } else if (name == "radius_mismatch") {
    require_keys(params, {"name", "mode", "radius"}, ctx);
    p = scenarios::radius_mismatch(number_or(params, "radius", 1.1, ctx));
  } else if (name == "flattened_target") {
    require_keys(params, {"name", "mode", "factor"}, ctx);
    p = scenarios::flattened_target(number_or(params, "factor", 0.99, ctx));
  } else if (name == "sphere_into_r3") {
    require_keys(params, {"name", "mode", "h_scale", "psi_scale", "bump"}, ctx);
    p = scenarios::sphere_into_r3(number_or(params, "h_scale", 1.0, ctx), number_or(params, "psi_scale", 1.0, ctx),
                                  number_or(params, "bump", 0.0, ctx));
  } else if (name == "flat_rank2_ricci") {
    require_keys(params, {"name", "mode", "kappa"}, ctx);
    p = scenarios::flat_rank2_ricci(number_or(params, "kappa", -2.0, ctx));
  } else {
    throw ConfigError("problem.name: unknown problem '" + name + "'");
  }
  if (params.contains("mode")) p.mode = parse_mode(string(params.at("mode"), "problem.mode"));
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  return p;
}

CahProblem parse_problem(const Json& j) {
  if (!j.is_object() || !j.contains("name")) throw ConfigError("problem: expected an object with a 'name'");
  return make_problem(string(j.at("name"), "problem.name"), j);
}

CurvePath parse_curve(const Json& j, int dim) {
  if (j.is_object() && j.contains("from")) {
    require_keys(j, {"from", "to"}, "curve");
    if (!j.contains("to")) throw ConfigError("curve: segment needs 'to'");
    const Vec a = parse_vec(j.at("from"), "curve.from", dim);
    const Vec d = parse_vec(j.at("to"), "curve.to", dim) - a;
    return CurvePath::from_function(
        dim, [a, d](double t) { return Vec(a + t * d); }, [d](double) { return d; });
  }
  require_keys(j, {"t", "points"}, "curve");
  if (!j.contains("t") || !j.contains("points")) throw ConfigError("curve: needs 't' and 'points' (or 'from'/'to')");
  const std::vector<double> t = numbers(j.at("t"), "curve.t");
  const Json& pts = j.at("points");
  if (!pts.is_array() || pts.size() != t.size()) throw ConfigError("curve.points: one point per time required");
  std::vector<Vec> x;
  for (std::size_t k = 0; k < t.size(); ++k) x.push_back(parse_vec(pts[k], "curve.points", dim));
  try {
    return CurvePath(t, x);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("curve: ") + e.what());
  }
}

VelocityProfile parse_velocity(const Json& j, int dim) {
  if (j.is_object() && j.contains("constant")) {
    require_keys(j, {"constant"}, "velocity");
    return VelocityProfile::constant(parse_vec(j.at("constant"), "velocity.constant", dim));
  }
  require_keys(j, {"t", "values"}, "velocity");
  if (!j.contains("t") || !j.contains("values")) throw ConfigError("velocity: needs 'constant' or 't' and 'values'");
  const std::vector<double> t = numbers(j.at("t"), "velocity.t");
  const Json& vals = j.at("values");
  if (!vals.is_array() || vals.size() != t.size()) throw ConfigError("velocity.values: one value per time required");
  std::vector<Vec> v;
  for (std::size_t k = 0; k < t.size(); ++k) v.push_back(parse_vec(vals[k], "velocity.values", dim));
  try {
    return VelocityProfile::sampled(t, v);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("velocity: ") + e.what());
  }
}

HProfile parse_h(const Json& j, int n, int s) {
  if (j.is_null()) return HProfile::zero(n, s);
  require_keys(j, {"constant"}, "h");
  if (!j.contains("constant")) return HProfile::zero(n, s);
  const Json& c = j.at("constant");
  if (!c.is_array() || static_cast<int>(c.size()) != s) throw ConfigError("h.constant: expected s matrices");
  Tensor3 h({s, n, n});
  for (int al = 0; al < s; ++al) {
    const Mat m = parse_mat(c[al], "h.constant", n, n);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 0.0) throw ConfigError("h.constant: matrices must be symmetric");
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) h(al, a, b) = m(a, b);
  }
  return HProfile::constant(h);
}

Homotopy parse_homotopy(const Json& j, const CahProblem& problem) {
  require_keys(j, {"from", "to", "target", "bend"}, "homotopy");
  if (!j.contains("from") || !j.contains("target")) throw ConfigError("homotopy: needs 'from' and 'target'");
  const int r = problem.r(), n = problem.n();
  const Vec p0 = parse_vec(j.at("from"), "homotopy.from", r);
  const Vec p1 = j.contains("to") ? parse_vec(j.at("to"), "homotopy.to", r) : p0;
  const Vec x = parse_vec(j.at("target"), "homotopy.target", n);
  const Vec bend = j.contains("bend") ? parse_vec(j.at("bend"), "homotopy.bend", n) : Vec(Vec::Zero(n));
  const auto S = problem.source;
  constexpr double pi = std::numbers::pi;
  Homotopy h;
  h.dim = n;
  h.base = [p0, p1](double u) { return Vec(p0 + u * (p1 - p0)); };
  h.point = [S, p0, p1, x, bend](double u, double t) {
    const Vec s = S->point(p0 + u * (p1 - p0));
    return Vec((1 - t) * s + t * x + u * std::sin(pi * t) * bend);
  };
  h.dt = [S, p0, p1, x, bend](double u, double t) {
    const Vec s = S->point(p0 + u * (p1 - p0));
    return Vec(x - s + u * pi * std::cos(pi * t) * bend);
  };
  h.dtt = [bend](double u, double t) { return Vec(-u * pi * pi * std::sin(pi * t) * bend); };
  return h;
}

RunConfig parse_run_config(const Json& j, const std::string& command) {
  static const std::vector<const char*> common = {"command", "seed", "threads", "tolerance", "out", "integrator"};
  std::vector<const char*> extra;
  if (command == "transport") extra = {"metric", "curve", "frame", "w"};
  else if (command == "develop") extra = {"metric", "point", "frame", "velocity"};
  else if (command == "gdevelop") extra = {"metric", "point", "frame", "velocity", "split", "h"};
  else if (command == "anti-develop") extra = {"metric", "curve", "frame"};
  else if (command == "variation") extra = {"problem", "homotopy", "u", "side"};
  else if (command == "reconstruct") extra = {"problem", "points", "path", "cartan"};
  else if (command == "check") extra = {"problem", "conditions", "curves", "segment_length", "quadruples"};
  else if (command == "check-well-defined") extra = {"problem", "homotopy", "slices"};
  else if (command == "demo") extra = {"points"};
  else throw ConfigError("unknown command '" + command + "'");
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  std::set<std::string> ok(common.begin(), common.end());
  ok.insert(extra.begin(), extra.end());
  for (const auto& item : j.items())
    if (!ok.count(item.key())) throw ConfigError("config: unknown field '" + item.key() + "' for " + command);

  RunConfig rc;
  rc.command = command;
  rc.body = j;
  if (j.contains("command") && string(j.at("command"), "command") != command)
    throw ConfigError("config: 'command' does not match the invoked command");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    rc.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("threads")) rc.threads = integer(j.at("threads"), "threads");
  if (rc.threads < 1) throw ConfigError("threads: must be at least 1");
  if (j.contains("tolerance")) rc.tolerance = number(j.at("tolerance"), "tolerance");
  if (j.contains("out")) rc.out_dir = string(j.at("out"), "out");
  if (j.contains("integrator")) rc.integrator = parse_integrator(j.at("integrator"));
  return rc;
}

}  // namespace cah
