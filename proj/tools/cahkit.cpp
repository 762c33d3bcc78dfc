// cahkit: config-driven front end for developments, reconstructions and checks.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cah/compat.hpp"
#include "cah/config.hpp"
#include "cah/random.hpp"
#include "cah/scenarios.hpp"

using namespace cah;

namespace {

enum Exit { kOk = 0, kFail = 1, kSchema = 2, kNumeric = 3 };

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json to_json(const Mat& m) {
  Json a = Json::array();
  for (int i = 0; i < m.rows(); ++i) a.push_back(to_json(Vec(m.row(i).transpose())));
  return a;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(const std::vector<double>& values) { rows_.push_back(values); }
  std::string str() const {
    std::ostringstream os;
    for (std::size_t k = 0; k < header_.size(); ++k) os << (k ? "," : "") << header_[k];
    os << "\n";
    for (const auto& r : rows_) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << fmt(r[k]);
      os << "\n";
    }
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

struct Output {
  std::string dir;
  std::string command;

  void emit(const Json& report, const Csv* csv) const {
    if (!dir.empty()) {
      std::filesystem::create_directories(dir);
      std::ofstream(std::filesystem::path(dir) / (command + ".json")) << report.dump(2) << "\n";
      if (csv) std::ofstream(std::filesystem::path(dir) / (command + ".csv")) << csv->str();
      std::cout << report.dump() << "\n";
    } else if (csv) {
      std::cout << csv->str();
    } else {
      std::cout << report.dump(2) << "\n";
    }
  }
};

Csv frame_csv(const Development& dev, int n) {
  const int m = dev.frames.empty() ? 0 : static_cast<int>(dev.frames.front().frame.cols());
  std::vector<std::string> header{"t"};
  for (int i = 0; i < n; ++i) header.push_back("x" + std::to_string(i + 1));
  for (int a = 0; a < m; ++a)
    for (int i = 0; i < n; ++i) header.push_back("E" + std::to_string(a + 1) + "_" + std::to_string(i + 1));
  Csv csv(header);
  for (const auto& f : dev.frames) {
    std::vector<double> r{f.t};
    for (int i = 0; i < n; ++i) r.push_back(f.x[i]);
    for (int a = 0; a < m; ++a)
      for (int i = 0; i < n; ++i) r.push_back(f.frame(i, a));
    csv.row(r);
  }
  return csv;
}

Json development_summary(const std::string& command, const Development& dev) {
  return {{"command", command},
          {"samples", dev.frames.size()},
          {"final_point", to_json(dev.frames.back().x)},
          {"final_frame", to_json(dev.frames.back().frame)},
          {"max_gram_drift", dev.max_gram_drift()},
          {"reorthonormalizations", dev.reorthonormalizations}};
}

Mat frame_or_default(const Json& body, const MetricField& M, const Vec& p, int cols) {
  if (!body.contains("frame")) return default_frame(M, p);
  return parse_mat(body.at("frame"), "frame", M.dim(), cols);
}

const Json& need(const Json& body, const char* key) {
  if (!body.contains(key)) throw ConfigError(std::string("config: missing required field '") + key + "'");
  return body.at(key);
}

Json report_json(const HypothesisReport& r) {
  Json j = {{"condition", r.condition},       {"pass", r.pass()},
            {"max_residual", r.max_residual}, {"raw_residual", r.raw_residual},
            {"scale", r.scale},               {"tolerance", r.tolerance},
            {"curves_sampled", r.curves_sampled}, {"curves_failed", r.curves_failed},
            {"seed", r.seed},                 {"worst_curve", r.worst_curve},
            {"worst_indices", r.worst_indices}, {"errors", r.errors}};
  if (!r.components.empty()) j["components"] = r.components;
  return j;
}

Json reconstruction_json(const Reconstruction& r) {
  Json j = {{"point", to_json(r.point)},
            {"f_point", to_json(r.f_point)},
            {"tau_matrix", to_json(r.tau.matrix)},
            {"diagnostics",
             {{"gram_residual", r.tau.gram_residual()},
              {"start_param", to_json(r.start_param)},
              {"reorthonormalizations", r.target.reorthonormalizations},
              {"max_gram_drift", std::max(r.source.max_gram_drift(), r.target.max_gram_drift())}}}};
  if (r.fiber_map.cols() > 0) j["fiber_map"] = to_json(r.fiber_map);
  return j;
}

int cmd_transport(const RunConfig& rc, const Output& out) {
  const MetricPtr M = parse_metric(need(rc.body, "metric"));
  const CurvePath curve = parse_curve(need(rc.body, "curve"), M->dim());
  const Mat frame = frame_or_default(rc.body, *M, curve.point(0.0), M->dim());
  const Development dev = transport_frame(*M, curve, frame, rc.integrator);
  Json rep = development_summary("transport", dev);
  if (rc.body.contains("w")) {
    const Vec w = parse_vec(rc.body.at("w"), "w", M->dim());
    rep["w_final"] = to_json(parallel_transport(*M, curve, w, 0.0, 1.0, rc.integrator));
  }
  const Csv csv = frame_csv(dev, M->dim());
  out.emit(rep, &csv);
  return kOk;
}

int cmd_develop(const RunConfig& rc, const Output& out, bool generalized) {
  const MetricPtr M = parse_metric(need(rc.body, "metric"));
  const int N = M->dim();
  const Vec p = parse_vec(need(rc.body, "point"), "point", N);
  int n = N, s = 0;
  if (generalized && rc.body.contains("split")) {
    const Vec sp = parse_vec(rc.body.at("split"), "split", 2);
    n = static_cast<int>(sp[0]);
    s = static_cast<int>(sp[1]);
    if (n + s != N || n < 1 || s < 0) throw ConfigError("split: must be [n, s] with n + s = metric dimension");
  }
  const Mat frame = frame_or_default(rc.body, *M, p, N);
  const VelocityProfile v = parse_velocity(need(rc.body, "velocity"), n);
  Development dev;
  if (generalized) {
    const HProfile h = parse_h(rc.body.contains("h") ? rc.body.at("h") : Json(), n, s);
    dev = generalized_develop(*M, p, frame, v, h, rc.integrator);
  } else {
    dev = develop(*M, p, frame, v, rc.integrator);
  }
  const Csv csv = frame_csv(dev, N);
  out.emit(development_summary(generalized ? "gdevelop" : "develop", dev), &csv);
  return kOk;
}

int cmd_anti_develop(const RunConfig& rc, const Output& out) {
  const MetricPtr M = parse_metric(need(rc.body, "metric"));
  const int n = M->dim();
  const CurvePath curve = parse_curve(need(rc.body, "curve"), n);
  const Mat frame = rc.body.contains("frame") ? parse_mat(rc.body.at("frame"), "frame", n, n) : Mat();
  const VelocityProfile v = anti_develop(*M, curve, frame, rc.integrator);
  std::vector<double> times = curve.is_sampled() ? curve.times() : std::vector<double>{};
  if (times.empty())
    for (int k = 0; k <= 100; ++k) times.push_back(k / 100.0);
  std::vector<std::string> header{"t"};
  for (int i = 0; i < n; ++i) header.push_back("v" + std::to_string(i + 1));
  Csv csv(header);
  for (double t : times) {
    std::vector<double> r{t};
    const Vec vt = v(t);
    for (int i = 0; i < n; ++i) r.push_back(vt[i]);
    csv.row(r);
  }
  out.emit({{"command", "anti-develop"}, {"samples", times.size()}, {"v_final", to_json(v(1.0))}}, &csv);
  return kOk;
}

int cmd_variation(const RunConfig& rc, const Output& out) {
  const CahProblem P = parse_problem(need(rc.body, "problem"));
  FamilyInput fam;
  fam.sub = P.source;
  fam.bundle = P.immersion() ? P.bundle : nullptr;
  fam.homotopy = parse_homotopy(need(rc.body, "homotopy"), P);
  fam.target = P.target_data();
  double u = 0.5;
  if (rc.body.contains("u")) {
    if (!rc.body.at("u").is_number()) throw ConfigError("u: expected a number");
    u = rc.body.at("u").get<double>();
  }
  std::string side = "both";
  if (rc.body.contains("side")) {
    if (!rc.body.at("side").is_string()) throw ConfigError("side: expected a string");
    side = rc.body.at("side").get<std::string>();
  }
  if (side != "source" && side != "target" && side != "both")
    throw ConfigError("side: expected 'source', 'target' or 'both'");

  std::optional<VariationTrajectory> src, tgt;
  if (side != "target") src = solve_variation_isometry(fam, u, rc.integrator, VariationSide::Source);
  if (side != "source")
    tgt = P.immersion() ? solve_variation_immersion(fam, u, rc.integrator)
                        : solve_variation_isometry(fam, u, rc.integrator, VariationSide::Target);
  const VariationTrajectory& main = tgt ? *tgt : *src;
  const int N = static_cast<int>(main.samples.front().U.size());
  std::vector<std::string> header{"t"};
  for (int A = 0; A < N; ++A) header.push_back("U" + std::to_string(A + 1));
  for (int A = 0; A < N; ++A) header.push_back("dU" + std::to_string(A + 1));
  Csv csv(header);
  for (const auto& s : main.samples) {
    std::vector<double> r{s.t};
    for (int A = 0; A < N; ++A) r.push_back(s.U[A]);
    for (int A = 0; A < N; ++A) r.push_back(s.dU[A]);
    csv.row(r);
  }
  Json rep = {{"command", "variation"}, {"u", u}, {"side", side}};
  if (src) rep["source"] = {{"U_end", to_json(src->samples.back().U)}, {"max_torsion", src->max_torsion()}};
  if (tgt) rep["target"] = {{"U_end", to_json(tgt->samples.back().U)}, {"max_torsion", tgt->max_torsion()}};
  if (src && tgt) {
    const ReductionReport red = reduction_check(*tgt, *src, rc.tolerance.value_or(1e-6));
    rep["reduction"] = {{"tangent_U", red.tangent_U}, {"normal_U", red.normal_U}, {"tangent_X", red.tangent_X},
                        {"bundle_X", red.bundle_X},   {"mixed_X", red.mixed_X},   {"pass", red.pass()}};
  }
  out.emit(rep, &csv);
  return kOk;
}

int cmd_reconstruct(const RunConfig& rc, const Output& out) {
  const CahProblem P = parse_problem(need(rc.body, "problem"));
  const Json& pts = need(rc.body, "points");
  if (!pts.is_array() || pts.empty()) throw ConfigError("points: expected a non-empty array of points");
  bool cartan = P.mode == CahMode::CartanIsometry || P.mode == CahMode::CartanImmersion;
  if (rc.body.contains("cartan")) {
    if (!rc.body.at("cartan").is_boolean()) throw ConfigError("cartan: expected a boolean");
    cartan = rc.body.at("cartan").get<bool>();
  }
  std::optional<CurvePath> path;
  if (rc.body.contains("path")) {
    if (pts.size() != 1) throw ConfigError("path: a user curve requires exactly one point");
    path = parse_curve(rc.body.at("path"), P.n());
  }
  std::vector<Vec> xs;
  for (const auto& p : pts) xs.push_back(parse_vec(p, "points", P.n()));
  Json results = Json::array();
  for (const Vec& x : xs) {
    if (cartan) {
      const CartanResult c = cartan_normal_map(P, x, rc.integrator);
      Json j = reconstruction_json(c.reconstruction);
      j["cartan"] = {{"param", to_json(c.param)}, {"normal", to_json(c.normal)}, {"iterations", c.iterations},
                     {"solutions", c.solutions}, {"unique", c.unique}};
      results.push_back(j);
    } else {
      results.push_back(reconstruction_json(reconstruct_map(P, x, rc.integrator, path)));
    }
  }
  out.emit({{"command", "reconstruct"}, {"problem", P.name}, {"mode", to_string(P.mode)}, {"results", results}},
           nullptr);
  return kOk;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_check(const RunConfig& rc, const Output& out, const std::string& conditions_flag) {
  const CahProblem P = parse_problem(need(rc.body, "problem"));
  std::vector<std::string> conds;
  if (!conditions_flag.empty()) {
    conds = split_list(conditions_flag);
  } else if (rc.body.contains("conditions")) {
    for (const auto& c : rc.body.at("conditions")) {
      if (!c.is_string()) throw ConfigError("conditions: expected strings");
      conds.push_back(c.get<std::string>());
    }
  } else if (P.immersion()) {
    conds = {"gauss", "codazzi", "ricci", "maps"};
  } else {
    conds = {"curvature", "maps"};
  }
  for (const auto& c : conds)
    if (c != "curvature" && c != "gauss" && c != "codazzi" && c != "ricci" && c != "maps")
      throw ConfigError("conditions: unknown condition '" + c + "'");
  CheckOptions opt;
  opt.seed = rc.seed;
  opt.threads = rc.threads;
  opt.config = rc.integrator;
  if (rc.tolerance) opt.tolerance = *rc.tolerance;
  if (rc.body.contains("curves")) opt.curves = rc.body.at("curves").get<int>();
  if (rc.body.contains("segment_length")) opt.segment_length = rc.body.at("segment_length").get<double>();
  if (rc.body.contains("quadruples")) opt.random_quadruples = rc.body.at("quadruples").get<int>();
  Json reports = Json::array();
  bool all = true;
  for (const auto& c : conds) {
    if (c == "curvature" && P.immersion()) throw ConfigError("conditions: 'curvature' needs an isometry-mode problem");
    const HypothesisReport r = run_check(c, P, opt);
    all = all && r.pass();
    reports.push_back(report_json(r));
  }
  out.emit({{"command", "check"}, {"problem", P.name}, {"pass", all}, {"reports", reports}}, nullptr);
  return all ? kOk : kFail;
}

int cmd_well_defined(const RunConfig& rc, const Output& out) {
  const CahProblem P = parse_problem(need(rc.body, "problem"));
  const Homotopy H = parse_homotopy(need(rc.body, "homotopy"), P);
  int slices = 11;
  if (rc.body.contains("slices")) slices = rc.body.at("slices").get<int>();
  if (slices < 2) throw ConfigError("slices: at least 2 required");
  const WellDefinedReport r = well_definedness(P, H, slices, rc.integrator, rc.tolerance.value_or(1e-6), rc.threads);
  Json endpoints = Json::array();
  for (const auto& e : r.endpoints) endpoints.push_back(to_json(e));
  out.emit({{"command", "check-well-defined"},
            {"problem", P.name},
            {"drift", r.drift},
            {"worst_u", r.worst_u},
            {"tolerance", r.tolerance},
            {"pass", r.pass()},
            {"u", r.u},
            {"endpoints", endpoints}},
           nullptr);
  return r.pass() ? kOk : kFail;
}

int cmd_demo(const RunConfig& rc, const Output& out) {
  int count = 50;
  if (rc.body.contains("points")) count = rc.body.at("points").get<int>();
  if (count < 1) throw ConfigError("points: must be positive");
  const CahProblem P = scenarios::sphere_into_r3();
  Rng rng(rc.seed);
  double radial = 0.0, embed = 0.0, on_s = 0.0;
  for (int k = 0; k < count; ++k) {
    Vec x(2);
    x << rng.uniform(0.4, std::numbers::pi - 0.4), rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Reconstruction r = reconstruct_map(P, x, rc.integrator);
    radial = std::max(radial, std::abs(r.f_point.norm() - 1.0));
    embed = std::max(embed, (r.f_point - scenarios::oracle_sphere_embedding(x)).norm());
    Vec s(2);
    s << std::numbers::pi / 2, x[1];
    on_s = std::max(on_s, (reconstruct_map(P, s, rc.integrator).f_point - P.target_point(Vec::Constant(1, x[1]))).norm());
  }
  const bool pass = radial < 1e-5 && on_s < 1e-8;
  std::cout << (radial < 1e-5 ? "PASS" : "FAIL") << " radial error " << fmt(radial) << " < 1e-5\n"
            << (on_s < 1e-8 ? "PASS" : "FAIL") << " f|_S = phi error " << fmt(on_s) << " < 1e-8\n"
            << "INFO distance to standard embedding " << fmt(embed) << "\n";
  const Json rep = {{"command", "demo"},
            {"problem", P.name},
            {"points", count},
            {"max_radial_error", radial},
            {"max_embedding_error", embed},
            {"max_restriction_error", on_s},
            {"pass", pass}};
  if (!out.dir.empty()) out.emit(rep, nullptr);
  return pass ? kOk : kFail;
}

void diagnostic(const std::string& kind, const std::string& message, std::optional<double> exit_time = {}) {
  Json j = {{"error", kind}, {"message", message}};
  if (exit_time) j["exit_time"] = *exit_time;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cahkit: developments, reconstruction maps and compatibility checks"};
  std::string command, config_path, out_dir, conditions;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> tolerance;
  app.add_option("command", command, "transport | develop | gdevelop | anti-develop | variation | reconstruct | check | "
                                     "check-well-defined | demo")
      ->required();
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", seed, "sampling seed");
  app.add_option("--threads", threads, "worker cap");
  app.add_option("--tolerance", tolerance, "pass/fail tolerance");
  app.add_option("--conditions", conditions, "check: comma-separated subset of curvature,gauss,codazzi,ricci,maps");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    diagnostic("usage", e.what());
    return kSchema;
  }

  try {
    Json body = Json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file '" + config_path + "'");
      try {
        body = Json::parse(in);
      } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
    } else if (command != "demo") {
      throw ConfigError("--config is required for '" + command + "'");
    }
    RunConfig rc = parse_run_config(body, command);
    if (seed) rc.seed = *seed;
    if (threads) {
      if (*threads < 1) throw ConfigError("--threads must be at least 1");
      rc.threads = *threads;
    }
    if (tolerance) rc.tolerance = *tolerance;
    if (!out_dir.empty()) rc.out_dir = out_dir;
    const Output out{rc.out_dir, command};

    if (command == "transport") return cmd_transport(rc, out);
    if (command == "develop") return cmd_develop(rc, out, false);
    if (command == "gdevelop") return cmd_develop(rc, out, true);
    if (command == "anti-develop") return cmd_anti_develop(rc, out);
    if (command == "variation") return cmd_variation(rc, out);
    if (command == "reconstruct") return cmd_reconstruct(rc, out);
    if (command == "check") return cmd_check(rc, out, conditions);
    if (command == "check-well-defined") return cmd_well_defined(rc, out);
    return cmd_demo(rc, out);
  } catch (const ConfigError& e) {
    diagnostic("config", e.what());
    return kSchema;
  } catch (const Json::exception& e) {
    diagnostic("config", e.what());
    return kSchema;
  } catch (const ChartExit& e) {
    diagnostic("chart-exit", e.what(), e.exit_time());
    return kNumeric;
  } catch (const GeometryError& e) {
    diagnostic("numerical", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    diagnostic("internal", e.what());
    return kNumeric;
  }
}
