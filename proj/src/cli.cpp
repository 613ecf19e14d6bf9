#include "rlc/cli.hpp"

#include "rlc/analysis.hpp"
#include "rlc/discretizer.hpp"
#include "rlc/errors.hpp"
#include "rlc/solver.hpp"
#include "rlc/spec_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace rlc {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct RunConfig {
  std::string subcommand;
  std::string spec_path;
  std::string preset;
  HillCarOptions hill;
  std::string grid = "101x101";
  std::string deterministic = "interpolate";
  std::vector<double> alphas;
  double tol = 1e-12;
  std::size_t max_iter = 100000;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string format = "csv";
  bool renormalize = false;
  // sample
  std::size_t n = 10000;
  std::size_t start = 0;
  std::size_t t_max = 100000;
  unsigned threads = 1;
  bool write_samples = false;
  // compose
  std::vector<std::string> components;
  std::vector<double> weights;
  // game-check
  double grid_step = 0.01;
  std::string cost_order = "displayed";
  // stationary
  double stationary_tol = 1e-12;
  // replay
  std::string manifest;
};

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

json num_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

// A loaded problem plus, for generated grids, the coordinates of each state.
struct LoadedProblem {
  ProblemSpec spec;
  std::optional<Grid> grid;
  std::vector<std::string> coord_names;
};

std::pair<std::size_t, std::size_t> parse_grid_shape(const std::string& text) {
  const auto x = text.find('x');
  std::size_t a = 0, b = 0;
  if (x != std::string::npos) {
    const auto r1 = std::from_chars(text.data(), text.data() + x, a);
    const auto r2 = std::from_chars(text.data() + x + 1, text.data() + text.size(), b);
    if (r1.ec == std::errc() && r1.ptr == text.data() + x && r2.ec == std::errc() &&
        r2.ptr == text.data() + text.size()) {
      return {a, b};
    }
  }
  throw InputError("--grid expects NxM, got '" + text + "'");
}

HillCarOptions hill_options(const RunConfig& cfg, double alpha) {
  HillCarOptions o = cfg.hill;
  std::tie(o.position_points, o.velocity_points) = parse_grid_shape(cfg.grid);
  if (cfg.deterministic == "interpolate") {
    o.deterministic = DeterministicStep::kInterpolate;
  } else if (cfg.deterministic == "nearest") {
    o.deterministic = DeterministicStep::kNearest;
  } else {
    throw InputError("--deterministic must be 'interpolate' or 'nearest'");
  }
  o.alpha = alpha;
  return o;
}

LoadedProblem load_problem(const RunConfig& cfg, bool require_valid = true) {
  if (!cfg.preset.empty()) {
    if (cfg.preset != "hill-car") throw InputError("unknown preset '" + cfg.preset + "'");
    auto gp = build_hill_car(hill_options(cfg, cfg.alphas.empty() ? 0.0 : cfg.alphas.front()));
    return {std::move(gp.spec), std::move(gp.grid), {"p", "v"}};
  }
  LoadOptions opts;
  opts.row_check = cfg.renormalize ? RowCheck::kRenormalize : RowCheck::kStrict;
  opts.require_valid = require_valid;
  return {load_spec(cfg.spec_path, opts), std::nullopt, {}};
}

std::vector<double> resolved_alphas(const RunConfig& cfg, const ProblemSpec& spec) {
  if (cfg.alphas.empty()) return {spec.alpha()};
  return cfg.alphas;
}

std::string alpha_tag(double alpha) { return "a" + num(alpha); }

std::string kind_name(const ProblemSpec& spec) {
  if (spec.is_finite_horizon()) return "fh";
  if (spec.is_first_exit()) return "fe";
  return "ih";
}

// "state[,coords...]" header and row prefixes.
std::string state_header(const LoadedProblem& p) {
  std::string h = "state";
  for (const auto& c : p.coord_names) h += "," + c;
  return h;
}

std::string state_prefix(const LoadedProblem& p, std::size_t i) {
  std::string s = std::to_string(i);
  if (p.grid) {
    const auto x = p.grid->point(i);
    for (Eigen::Index d = 0; d < x.size(); ++d) s += "," + num(x(d));
  }
  return s;
}

std::string value_csv(const LoadedProblem& p, const ValueFunction& v) {
  std::ostringstream os;
  if (v.stages.size() > 1) {
    os << "state,t,value\n";
    for (std::size_t t = 0; t < v.stages.size(); ++t) {
      for (std::size_t i = 0; i < v.stages[t].size(); ++i) {
        os << i << ',' << t << ',' << num(v.stages[t][i]) << '\n';
      }
    }
    return os.str();
  }
  os << state_header(p) << ",value\n";
  for (std::size_t i = 0; i < v.values().size(); ++i) os << state_prefix(p, i) << ',' << num(v.values()[i]) << '\n';
  return os.str();
}

std::string z_csv(const LoadedProblem& p, const ZFunction& z) {
  std::ostringstream os;
  const bool staged = z.log_stages.size() > 1;
  os << (staged ? "state,t" : state_header(p)) << ",log_z,z\n";
  for (std::size_t t = 0; t < z.log_stages.size(); ++t) {
    for (std::size_t i = 0; i < z.log_stages[t].size(); ++i) {
      const double lz = z.log_stages[t][i];
      os << (staged ? std::to_string(i) + "," + std::to_string(t) : state_prefix(p, i)) << ','
         << num(lz) << ',' << num(std::exp(lz)) << '\n';
    }
  }
  return os.str();
}

std::string policy_csv(const std::vector<Policy>& policies, bool staged) {
  std::ostringstream os;
  os << (staged ? "t,from,to,prob\n" : "from,to,prob\n");
  for (std::size_t t = 0; t < policies.size(); ++t) {
    for (const auto& tr : policies[t].kernel.triplets()) {
      if (staged) os << t << ',';
      os << tr.from << ',' << tr.to << ',' << num(tr.prob) << '\n';
    }
  }
  return os.str();
}

ordered_json report_json(const ProblemSpec& spec, const SolveReport& r) {
  ordered_json j;
  j["alpha"] = spec.alpha();
  j["kind"] = kind_name(spec);
  j["n_states"] = spec.size();
  j["iterations"] = r.iterations;
  j["refinement_steps"] = r.refinement_steps;
  j["final_residual"] = num_or_null(r.final_residual);
  j["average_cost"] = num_or_null(r.average_cost);
  j["log_spectral_estimate"] = num_or_null(r.log_spectral_estimate);
  j["spectral_estimate"] = num_or_null(std::exp(r.log_spectral_estimate));
  j["warnings"] = r.warnings;
  return j;
}

SolverOptions solver_options(const RunConfig& cfg) {
  SolverOptions o;
  o.tol = cfg.tol;
  o.max_iter = cfg.max_iter;
  return o;
}

struct Context {
  const RunConfig& cfg;
  fs::path out_dir;
  std::ostream& out;
};

void cmd_validate(Context& ctx) {
  LoadOptions opts;
  opts.row_check = ctx.cfg.renormalize ? RowCheck::kRenormalize : RowCheck::kUnchecked;
  opts.require_valid = false;
  const auto spec = ctx.cfg.preset.empty() ? load_spec(ctx.cfg.spec_path, opts) : load_problem(ctx.cfg).spec;
  const auto r = validate(spec);
  ordered_json j;
  j["ok"] = r.ok();
  j["n_states"] = spec.size();
  j["kind"] = kind_name(spec);
  j["irreducible"] = r.irreducible;
  j["unichain"] = r.unichain;
  j["q_nonnegative"] = r.q_nonnegative;
  j["alpha_at_most_one"] = r.alpha_at_most_one;
  if (spec.is_first_exit()) {
    j["fe_condition_holds"] = r.fe_condition_holds;
    j["unreachable_states"] = r.unreachable_states;
  }
  j["errors"] = r.errors;
  j["warnings"] = r.warnings;
  write_file(ctx.out_dir / "validation.json", j.dump(2) + "\n");
  ctx.out << j.dump(2) << '\n';
  if (!r.ok()) throw InputError(r.errors.front());
}

void cmd_solve(Context& ctx, bool policy_only) {
  const auto base = load_problem(ctx.cfg);
  for (double alpha : resolved_alphas(ctx.cfg, base.spec)) {
    LoadedProblem p{base.spec.with_alpha(alpha), base.grid, base.coord_names};
    const auto sol = solve(p.spec, solver_options(ctx.cfg));
    const auto tag = alpha_tag(alpha);
    const auto policies = extract_policies(p.spec, sol.value);
    const bool staged = p.spec.is_finite_horizon();
    write_file(ctx.out_dir / ("policy_" + tag + ".csv"), policy_csv(policies, staged));
    if (policy_only) {
      if (!near_zero_order(alpha)) {
        std::vector<Policy> adv;
        if (staged) {
          for (std::size_t t = 0; t + 1 < sol.value.stages.size(); ++t) {
            adv.push_back(adversary_policy(p.spec, sol.value.stages[t + 1]));
          }
        } else {
          adv.push_back(adversary_policy(p.spec, sol.value.values()));
        }
        write_file(ctx.out_dir / ("adversary_" + tag + ".csv"), policy_csv(adv, staged));
      }
    } else {
      write_file(ctx.out_dir / ("value_" + tag + ".csv"), value_csv(p, sol.value));
      if (!sol.z.empty()) write_file(ctx.out_dir / ("z_" + tag + ".csv"), z_csv(p, sol.z));
    }
    write_file(ctx.out_dir / ("report_" + tag + ".json"), report_json(p.spec, sol.report).dump(2) + "\n");
    ctx.out << "alpha=" << num(alpha) << " kind=" << kind_name(p.spec) << " iterations=" << sol.report.iterations
            << " residual=" << num(sol.report.final_residual);
    if (p.spec.is_infinite_horizon()) ctx.out << " average_cost=" << num(sol.report.average_cost);
    ctx.out << '\n';
    for (const auto& w : sol.report.warnings) ctx.out << "warning: " << w << '\n';
  }
}

void cmd_stationary(Context& ctx) {
  const auto base = load_problem(ctx.cfg);
  if (!base.spec.is_infinite_horizon()) throw InputError("stationary needs an infinite-horizon problem");
  for (double alpha : resolved_alphas(ctx.cfg, base.spec)) {
    LoadedProblem p{base.spec.with_alpha(alpha), base.grid, base.coord_names};
    const auto sol = solve_ih(p.spec, solver_options(ctx.cfg));
    const auto policy = extract_policy(p.spec, sol.value.values());
    StationaryOptions so;
    so.tol = ctx.cfg.stationary_tol;
    const auto st = stationary_distribution(policy.kernel, so);
    const auto tag = alpha_tag(alpha);

    std::ostringstream csv;
    csv << state_header(p) << ",mass\n";
    for (std::size_t i = 0; i < st.mu.size(); ++i) csv << state_prefix(p, i) << ',' << num(st.mu[i]) << '\n';
    write_file(ctx.out_dir / ("stationary_" + tag + ".csv"), csv.str());

    ordered_json j;
    j["alpha"] = alpha;
    j["residual_l1"] = st.residual;
    j["iterations"] = st.iterations;
    j["used_direct_solve"] = st.used_direct_solve;
    j["solve"] = report_json(p.spec, sol.report);
    ctx.out << "alpha=" << num(alpha) << " stationary residual=" << num(st.residual);
    if (ctx.cfg.preset == "hill-car") {
      double minus = 0.0, plus = 0.0;
      for (std::size_t i = 0; i < st.mu.size(); ++i) {
        const double pos = p.grid->point(i)(0);
        if (std::abs(pos + 0.9) < 0.5) minus += st.mu[i];
        if (std::abs(pos - 0.9) < 0.5) plus += st.mu[i];
      }
      j["mass_near_minus_0.9"] = minus;
      j["mass_near_plus_0.9"] = plus;
      ctx.out << " mass(p~-0.9)=" << num(minus) << " mass(p~+0.9)=" << num(plus);
    }
    ctx.out << '\n';
    write_file(ctx.out_dir / ("stationary_report_" + tag + ".json"), j.dump(2) + "\n");
  }
}

void cmd_sample(Context& ctx) {
  const auto base = load_problem(ctx.cfg);
  if (base.spec.is_infinite_horizon()) throw InputError("sample needs an fh or fe problem");
  SamplingOptions so;
  so.n = ctx.cfg.n;
  so.seed = ctx.cfg.seed;
  so.t_max = ctx.cfg.t_max;
  so.threads = ctx.cfg.threads;
  for (double alpha : resolved_alphas(ctx.cfg, base.spec)) {
    const auto spec = base.spec.with_alpha(alpha);
    const auto est = path_integral_estimate(spec, ctx.cfg.start, so);
    const auto sol = solve(spec, solver_options(ctx.cfg));
    const double solver_value = sol.value.stages.front().at(ctx.cfg.start);
    const auto tag = alpha_tag(alpha);
    ordered_json j;
    j["alpha"] = alpha;
    j["start"] = ctx.cfg.start;
    j["n"] = so.n;
    j["seed"] = so.seed;
    j["t_max"] = so.t_max;
    j["estimate"] = est.estimate;
    j["std_error"] = est.std_error;
    j["truncated_fraction"] = est.truncated_fraction;
    j["used"] = est.used;
    j["solver_value"] = solver_value;
    j["z_score"] = est.std_error > 0 ? json((est.estimate - solver_value) / est.std_error) : json(nullptr);
    write_file(ctx.out_dir / ("path_integral_" + tag + ".json"), j.dump(2) + "\n");
    if (ctx.cfg.write_samples) {
      SamplingOptions keep = so;
      keep.keep_states = false;
      const auto samples = sample_trajectories(spec, spec.passive(), ctx.cfg.start, keep);
      std::ostringstream csv;
      csv << "index,length,terminated,cost\n";
      for (std::size_t k = 0; k < samples.size(); ++k) {
        csv << k << ',' << samples[k].length << ',' << (samples[k].terminated ? 1 : 0) << ','
            << num(samples[k].accumulated_cost) << '\n';
      }
      write_file(ctx.out_dir / ("samples_" + tag + ".csv"), csv.str());
    }
    ctx.out << "alpha=" << num(alpha) << " estimate=" << num(est.estimate) << " std_error=" << num(est.std_error)
            << " truncated_fraction=" << num(est.truncated_fraction) << " solver=" << num(solver_value) << '\n';
  }
}

void cmd_compose(Context& ctx) {
  if (ctx.cfg.components.empty()) throw InputError("compose needs at least one --component");
  LoadOptions opts;
  opts.row_check = ctx.cfg.renormalize ? RowCheck::kRenormalize : RowCheck::kStrict;
  std::vector<ProblemSpec> specs;
  for (const auto& path : ctx.cfg.components) specs.push_back(load_spec(path, opts));
  Vector weights(ctx.cfg.weights.begin(), ctx.cfg.weights.end());
  if (weights.empty()) weights.assign(specs.size(), 1.0);

  for (double alpha : resolved_alphas(ctx.cfg, specs.front())) {
    std::vector<ProblemSpec> at;
    for (const auto& s : specs) at.push_back(s.with_alpha(alpha));
    const LoadedProblem shape{at.front(), std::nullopt, {}};
    const auto tag = alpha_tag(alpha);
    ordered_json j;
    j["alpha"] = alpha;
    j["weights"] = weights;
    if (near_unit_order(alpha)) {
      LinearCompositionRequest req{at, {}, weights};
      for (const auto& s : at) req.values.push_back(solve(s, solver_options(ctx.cfg)).value);
      const auto res = compose_values(req);
      write_file(ctx.out_dir / ("composite_value_" + tag + ".csv"), value_csv(shape, res.value));
      write_file(ctx.out_dir / ("composite_spec_" + tag + ".json"), spec_to_string(res.spec));
      j["residual"] = res.residual;
    } else {
      for (std::size_t i = 1; i < at.size(); ++i) {
        if (at[i].passive() != at[0].passive() || at[i].kind() != at[0].kind() ||
            at[i].costs().running_stages() != at[0].costs().running_stages()) {
          throw InputError("component " + std::to_string(i) +
                           " differs from the first in dynamics, kind or running cost");
        }
      }
      CompositionRequest req{at.front(), {}, {}, weights};
      for (const auto& s : at) {
        req.components.push_back(solve(s, solver_options(ctx.cfg)).z);
        req.final_costs.push_back(s.final_cost());
      }
      const auto res = compose(req);
      write_file(ctx.out_dir / ("composite_value_" + tag + ".csv"), value_csv(shape, res.value));
      write_file(ctx.out_dir / ("composite_z_" + tag + ".csv"), z_csv(shape, res.z));
      std::ostringstream qf;
      qf << "state,final_cost\n";
      for (std::size_t i = 0; i < res.final_cost.size(); ++i) qf << i << ',' << num(res.final_cost[i]) << '\n';
      write_file(ctx.out_dir / ("composite_final_cost_" + tag + ".csv"), qf.str());
      j["residual"] = res.residual;
    }
    write_file(ctx.out_dir / ("compose_report_" + tag + ".json"), j.dump(2) + "\n");
    ctx.out << "alpha=" << num(alpha) << " composite residual=" << num(j["residual"].get<double>()) << '\n';
  }
}

void cmd_game_check(Context& ctx) {
  const auto base = load_problem(ctx.cfg);
  GameCheckOptions go;
  go.grid_step = ctx.cfg.grid_step;
  if (ctx.cfg.cost_order == "displayed") {
    go.order = GameCostOrder::kDisplayed;
  } else if (ctx.cfg.cost_order == "swapped") {
    go.order = GameCostOrder::kSwapped;
  } else {
    throw InputError("--cost-order must be 'displayed' or 'swapped'");
  }
  for (double alpha : resolved_alphas(ctx.cfg, base.spec)) {
    const auto spec = base.spec.with_alpha(alpha);
    const auto r = game_bruteforce_check(spec, go);
    ordered_json j;
    j["alpha"] = alpha;
    j["grid_step"] = go.grid_step;
    j["cost_order"] = ctx.cfg.cost_order;
    j["gap"] = r.gap;
    j["evaluations"] = r.evaluations;
    j["brute_force"] = r.brute_force.stages;
    j["solver"] = r.solver.stages;
    write_file(ctx.out_dir / ("game_check_" + alpha_tag(alpha) + ".json"), j.dump(2) + "\n");
    ctx.out << "alpha=" << num(alpha) << " grid_step=" << num(go.grid_step) << " gap=" << num(r.gap) << '\n';
  }
}

void cmd_discretize(Context& ctx) {
  if (ctx.cfg.preset.empty()) throw InputError("discretize needs --preset");
  const auto p = load_problem(ctx.cfg);
  write_file(ctx.out_dir / (ctx.cfg.preset + ".json"), spec_to_string(p.spec));
  std::ostringstream csv;
  csv << state_header(p) << '\n';
  for (std::size_t i = 0; i < p.spec.size(); ++i) csv << state_prefix(p, i) << '\n';
  write_file(ctx.out_dir / "grid.csv", csv.str());
  ctx.out << "wrote " << p.spec.size() << " states, " << p.spec.passive().nnz() << " transitions\n";
}

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["subcommand"] = c.subcommand;
  if (!c.spec_path.empty()) j["spec"] = c.spec_path;
  if (!c.preset.empty()) {
    j["preset"] = c.preset;
    j["hill_car"] = {{"r", c.hill.terrain.r},   {"v1", c.hill.terrain.v1}, {"v2", c.hill.terrain.v2},
                     {"g", c.hill.terrain.g},   {"sigma", c.hill.sigma},   {"h", c.hill.h},
                     {"grid", c.grid},          {"deterministic", c.deterministic}};
  }
  j["alpha"] = c.alphas;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["seed"] = c.seed;
  j["out"] = c.out;
  j["format"] = c.format;
  j["renormalize"] = c.renormalize;
  if (c.subcommand == "sample") {
    j["n"] = c.n;
    j["start"] = c.start;
    j["t_max"] = c.t_max;
    j["threads"] = c.threads;
    j["write_samples"] = c.write_samples;
  }
  if (c.subcommand == "compose") {
    j["components"] = c.components;
    j["weights"] = c.weights;
  }
  if (c.subcommand == "game-check") {
    j["grid_step"] = c.grid_step;
    j["cost_order"] = c.cost_order;
  }
  if (c.subcommand == "stationary") j["stationary_tol"] = c.stationary_tol;
  return j;
}

std::vector<std::string> input_paths(const RunConfig& c) {
  std::vector<std::string> paths;
  if (!c.spec_path.empty()) paths.push_back(c.spec_path);
  for (const auto& p : c.components) paths.push_back(p);
  return paths;
}

void write_manifest(const RunConfig& cfg, const std::vector<std::string>& args, const fs::path& dir) {
  ordered_json m;
  m["tool"] = "rlc";
  m["version"] = kToolVersion;
  m["argv"] = args;
  m["config"] = config_json(cfg);
  m["seed"] = cfg.seed;
  ordered_json inputs = ordered_json::array();
  for (const auto& p : input_paths(cfg)) inputs.push_back({{"path", p}, {"sha256", sha256_hex(read_file(p))}});
  m["inputs"] = inputs;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

// Recorded argv with any --out replaced by `out`.
std::vector<std::string> replay_args(const json& manifest, const std::string& out) {
  if (!manifest.contains("argv") || !manifest["argv"].is_array()) {
    throw InputError("manifest has no argv array");
  }
  const auto recorded = manifest["argv"].get<std::vector<std::string>>();
  if (out.empty()) return recorded;
  std::vector<std::string> args;
  for (std::size_t i = 0; i < recorded.size(); ++i) {
    const auto& a = recorded[i];
    if (a == "--out" || a == "-o") {
      ++i;
      continue;
    }
    if (a.rfind("--out=", 0) == 0) continue;
    args.push_back(a);
  }
  args.push_back("--out");
  args.push_back(out);
  return args;
}

void check_manifest_inputs(const json& manifest) {
  if (!manifest.contains("inputs")) return;
  for (const auto& in : manifest["inputs"]) {
    const auto path = in.at("path").get<std::string>();
    const auto expected = in.at("sha256").get<std::string>();
    if (sha256_hex(read_file(path)) != expected) {
      throw InputError("input " + path + " changed since the manifest was written");
    }
  }
}

void add_common(CLI::App* sub, RunConfig& c, bool with_input = true) {
  if (with_input) {
    auto* spec = sub->add_option("--spec", c.spec_path, "problem spec (JSON)");
    auto* preset = sub->add_option("--preset", c.preset, "built-in problem: hill-car");
    spec->excludes(preset);
    sub->add_option("--r", c.hill.terrain.r, "hill-car: height of the hill at -0.9");
    sub->add_option("--v1", c.hill.terrain.v1, "hill-car: curvature of the hill at +0.9");
    sub->add_option("--v2", c.hill.terrain.v2, "hill-car: curvature of the hill at -0.9");
    sub->add_option("--g", c.hill.terrain.g, "hill-car: gravitational acceleration");
    sub->add_option("--sigma", c.hill.sigma, "hill-car: noise scale");
    sub->add_option("--h", c.hill.h, "hill-car: Euler step");
    sub->add_option("--grid", c.grid, "hill-car: grid shape NxM");
    sub->add_option("--deterministic", c.deterministic, "hill-car: interpolate|nearest");
  }
  sub->add_option("--alpha", c.alphas, "risk parameter(s), comma separated")->delimiter(',');
  sub->add_option("--tol", c.tol, "solver tolerance");
  sub->add_option("--max-iter", c.max_iter, "solver iteration cap");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--out,-o", c.out, "output directory");
  sub->add_option("--format", c.format, "output format (csv)");
  sub->add_flag("--renormalize", c.renormalize, "renormalise passive rows instead of rejecting them");
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int execute(RunConfig& cfg, const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            int depth) {
  if (cfg.subcommand == "replay") {
    if (depth > 0) throw InputError("a manifest cannot replay another replay");
    const auto manifest = json::parse(read_file(cfg.manifest), nullptr, false);
    if (manifest.is_discarded()) throw InputError("cannot parse manifest " + cfg.manifest);
    check_manifest_inputs(manifest);
    const bool out_given = std::find(args.begin(), args.end(), "--out") != args.end() ||
                           std::find(args.begin(), args.end(), "-o") != args.end() ||
                           std::any_of(args.begin(), args.end(),
                                       [](const std::string& a) { return a.rfind("--out=", 0) == 0; });
    return dispatch(replay_args(manifest, out_given ? cfg.out : ""), out, err, depth + 1);
  }

  if (cfg.format != "csv") throw InputError("unsupported --format '" + cfg.format + "' (only csv)");
  for (double a : cfg.alphas) {
    if (!std::isfinite(a)) throw InputError("--alpha entries must be finite");
  }
  const bool needs_input = cfg.subcommand != "compose";
  if (needs_input && cfg.spec_path.empty() && cfg.preset.empty()) {
    throw InputError("one of --spec or --preset is required");
  }

  fs::path dir(cfg.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + cfg.out + ": " + ec.message());
  write_manifest(cfg, args, dir);

  Context ctx{cfg, dir, out};
  if (cfg.subcommand == "validate") {
    cmd_validate(ctx);
  } else if (cfg.subcommand == "solve") {
    cmd_solve(ctx, false);
  } else if (cfg.subcommand == "policy") {
    cmd_solve(ctx, true);
  } else if (cfg.subcommand == "stationary") {
    cmd_stationary(ctx);
  } else if (cfg.subcommand == "sample") {
    cmd_sample(ctx);
  } else if (cfg.subcommand == "compose") {
    cmd_compose(ctx);
  } else if (cfg.subcommand == "game-check") {
    cmd_game_check(ctx);
  } else if (cfg.subcommand == "discretize") {
    cmd_discretize(ctx);
  }
  return 0;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  RunConfig cfg;
  CLI::App app{"Risk-sensitive linearly solvable control solver", "rlc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"validate", "check a problem spec"},
      {"solve", "solve for value function, z-function and optimal policy"},
      {"policy", "write optimal and adversary policies"},
      {"stationary", "stationary distribution of the optimal closed loop (ih)"},
      {"sample", "path-integral estimate from passive rollouts"},
      {"compose", "compose solutions that differ in final cost"},
      {"game-check", "brute-force check of the equivalent zero-sum game"},
      {"discretize", "write the spec generated by a preset"},
  };
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    sub->set_help_flag("--help", "print this help and exit");  // -h would clash with --h
    add_common(sub, cfg, std::string(s.name) != "compose");
    sub->callback([&cfg, name = std::string(s.name)] { cfg.subcommand = name; });
    if (std::string(s.name) == "sample") {
      sub->add_option("--n", cfg.n, "number of rollouts");
      sub->add_option("--start", cfg.start, "start state");
      sub->add_option("--t-max", cfg.t_max, "rollout step cap");
      sub->add_option("--threads", cfg.threads, "sampling threads");
      sub->add_flag("--write-samples", cfg.write_samples, "also write per-rollout costs");
    } else if (std::string(s.name) == "compose") {
      sub->add_option("--component", cfg.components, "component spec (repeatable)");
      sub->add_option("--weights", cfg.weights, "composition weights")->delimiter(',');
    } else if (std::string(s.name) == "game-check") {
      sub->add_option("--grid-step", cfg.grid_step, "simplex lattice step");
      sub->add_option("--cost-order", cfg.cost_order, "displayed|swapped");
    } else if (std::string(s.name) == "stationary") {
      sub->add_option("--stationary-tol", cfg.stationary_tol, "L1 tolerance on mu P - mu");
    }
  }
  auto* replay = app.add_subcommand("replay", "rerun the command recorded in a manifest");
  replay->add_option("--manifest", cfg.manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out,-o", cfg.out, "output directory (default: the recorded one)");
  replay->callback([&cfg] { cfg.subcommand = "replay"; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  return execute(cfg, args, out, err, depth);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return 2;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace rlc
