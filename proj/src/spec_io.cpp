#include "rlc/spec_io.hpp"

#include "rlc/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace rlc {

namespace {

using nlohmann::json;

class FieldReader {
 public:
  explicit FieldReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw InputError(source_ + ": field '" + field + "': " + msg);
  }

  void only_keys(const json& obj, const std::string& field,
                 std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(field, "expected an object");
    for (const auto& [key, _] : obj.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) fail(field.empty() ? key : field + "." + key, "unknown field");
    }
  }

  const json& require(const json& obj, const char* key, const std::string& field) const {
    const auto it = obj.find(key);
    if (it == obj.end()) fail(join(field, key), "missing required field");
    return *it;
  }

  double number(const json& j, const std::string& field) const {
    if (!j.is_number()) fail(field, "expected a number");
    return j.get<double>();
  }

  std::size_t index(const json& j, const std::string& field) const {
    if (!j.is_number_unsigned()) fail(field, "expected a non-negative integer");
    return j.get<std::size_t>();
  }

  Vector dense(const json& j, const std::string& field, std::size_t n) const {
    if (!j.is_array()) fail(field, "expected an array");
    if (j.size() != n) {
      fail(field, "expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()));
    }
    Vector out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = number(j[i], field + "[" + std::to_string(i) + "]");
    return out;
  }

  static std::string join(const std::string& a, const char* b) {
    return a.empty() ? std::string(b) : a + "." + b;
  }

 private:
  std::string source_;
};

std::string format_number(double x) { return json(x).dump(); }

}  // namespace

ProblemSpec parse_spec(std::string_view text, const LoadOptions& options,
                       const std::string& source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError(source + ": " + e.what());
  }
  const FieldReader r(source);
  r.only_keys(doc, "",
              {"n_states", "labels", "alpha", "kind", "horizon", "terminal_states", "q", "q_final",
               "passive"});

  StateSpace states;
  states.n_states = r.index(r.require(doc, "n_states", ""), "n_states");
  const auto n = states.n_states;
  if (n == 0) r.fail("n_states", "must be >= 1");
  if (auto it = doc.find("labels"); it != doc.end()) {
    if (!it->is_array()) r.fail("labels", "expected an array of strings");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) r.fail("labels[" + std::to_string(i) + "]", "expected a string");
      states.labels.push_back((*it)[i].get<std::string>());
    }
  }

  const double alpha = r.number(r.require(doc, "alpha", ""), "alpha");

  const json& kind_j = r.require(doc, "kind", "");
  if (!kind_j.is_string()) r.fail("kind", "expected one of \"fh\", \"fe\", \"ih\"");
  const auto kind_name = kind_j.get<std::string>();
  HorizonKind kind;
  std::size_t horizon = 0;
  if (kind_name == "fh") {
    horizon = r.index(r.require(doc, "horizon", ""), "horizon");
    kind = FiniteHorizon{horizon};
  } else if (kind_name == "fe") {
    const json& term = r.require(doc, "terminal_states", "");
    if (!term.is_array()) r.fail("terminal_states", "expected an array");
    FirstExit fe;
    for (std::size_t i = 0; i < term.size(); ++i) {
      fe.terminal_states.push_back(r.index(term[i], "terminal_states[" + std::to_string(i) + "]"));
    }
    kind = std::move(fe);
  } else if (kind_name == "ih") {
    kind = InfiniteHorizon{};
  } else {
    r.fail("kind", "unknown kind '" + kind_name + "', expected fh, fe or ih");
  }
  if (kind_name != "fh" && doc.contains("horizon")) r.fail("horizon", "only valid for kind fh");
  if (kind_name != "fe" && doc.contains("terminal_states")) {
    r.fail("terminal_states", "only valid for kind fe");
  }
  if (kind_name == "ih" && doc.contains("q_final")) r.fail("q_final", "not valid for kind ih");

  const json& q_j = r.require(doc, "q", "");
  if (!q_j.is_array()) r.fail("q", "expected an array");
  const bool sparse_q = !q_j.empty() && q_j[0].is_object();
  CostModel costs;
  Vector q_final;
  if (auto it = doc.find("q_final"); it != doc.end()) q_final = r.dense(*it, "q_final", n);
  if (!sparse_q) {
    costs = CostModel(r.dense(q_j, "q", n), std::move(q_final));
  } else {
    const std::size_t stages = kind_name == "fh" ? horizon : 1;
    std::vector<Vector> running(std::max<std::size_t>(stages, 1), Vector(n, 0.0));
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t k = 0; k < q_j.size(); ++k) {
      const std::string field = "q[" + std::to_string(k) + "]";
      r.only_keys(q_j[k], field, {"state", "t", "value"});
      const auto s = r.index(r.require(q_j[k], "state", field), field + ".state");
      std::size_t t = 0;
      if (q_j[k].contains("t")) t = r.index(q_j[k]["t"], field + ".t");
      const double value = r.number(r.require(q_j[k], "value", field), field + ".value");
      if (s >= n) r.fail(field + ".state", "out of range");
      if (t >= std::max<std::size_t>(stages, 1)) {
        r.fail(field + ".t", kind_name == "fh" ? "must be < horizon" : "must be 0 for fe/ih");
      }
      if (!seen.emplace(s, t).second) r.fail(field, "duplicate (state, t) entry");
      running[t][s] = value;
    }
    if (kind_name == "fh" && stages > 1) {
      costs = CostModel::time_varying(std::move(running), std::move(q_final));
    } else {
      costs = CostModel(std::move(running.front()), std::move(q_final));
    }
  }

  const json& passive_j = r.require(doc, "passive", "");
  if (!passive_j.is_array()) r.fail("passive", "expected an array of {from, to, prob}");
  std::vector<Triplet> triplets;
  triplets.reserve(passive_j.size());
  for (std::size_t k = 0; k < passive_j.size(); ++k) {
    const std::string field = "passive[" + std::to_string(k) + "]";
    const json& t = passive_j[k];
    r.only_keys(t, field, {"from", "to", "prob"});
    triplets.push_back({r.index(r.require(t, "from", field), field + ".from"),
                        r.index(r.require(t, "to", field), field + ".to"),
                        r.number(r.require(t, "prob", field), field + ".prob")});
  }

  try {
    auto passive = StochasticMatrix::from_triplets(n, std::move(triplets), options.row_check);
    ProblemSpec spec(std::move(states), std::move(passive), std::move(costs), alpha,
                     std::move(kind));
    if (options.require_valid && options.row_check != RowCheck::kUnchecked) {
      const auto report = validate(spec);
      if (!report.ok()) throw InputError(report.errors.front());
    }
    return spec;
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

ProblemSpec load_spec(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open spec file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str(), options, path.string());
}

std::string spec_to_string(const ProblemSpec& spec) {
  std::ostringstream os;
  const auto n = spec.size();
  os << "{\n";
  os << "  \"n_states\": " << n << ",\n";
  if (!spec.states().labels.empty()) os << "  \"labels\": " << json(spec.states().labels).dump() << ",\n";
  os << "  \"alpha\": " << format_number(spec.alpha()) << ",\n";
  if (spec.is_finite_horizon()) {
    os << "  \"kind\": \"fh\",\n  \"horizon\": " << spec.horizon() << ",\n";
  } else if (spec.is_first_exit()) {
    os << "  \"kind\": \"fe\",\n  \"terminal_states\": " << json(spec.terminal_states()).dump()
       << ",\n";
  } else {
    os << "  \"kind\": \"ih\",\n";
  }

  auto dense = [&](const Vector& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
    return s + "]";
  };
  const auto& costs = spec.costs();
  if (costs.is_time_varying()) {
    os << "  \"q\": [\n";
    bool first = true;
    for (std::size_t t = 0; t < costs.stages(); ++t) {
      for (std::size_t s = 0; s < n; ++s) {
        os << (first ? "" : ",\n") << "    {\"state\": " << s << ", \"t\": " << t
           << ", \"value\": " << format_number(costs.running(t)[s]) << "}";
        first = false;
      }
    }
    os << "\n  ],\n";
  } else {
    os << "  \"q\": " << dense(costs.running()) << ",\n";
  }
  if (!spec.is_infinite_horizon()) os << "  \"q_final\": " << dense(spec.final_cost()) << ",\n";

  os << "  \"passive\": [\n";
  const auto trip = spec.passive().triplets();
  for (std::size_t k = 0; k < trip.size(); ++k) {
    os << "    {\"from\": " << trip[k].from << ", \"to\": " << trip[k].to
       << ", \"prob\": " << format_number(trip[k].prob) << "}" << (k + 1 < trip.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
  return os.str();
}

void save_spec(const ProblemSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write spec file " + path.string());
  out << spec_to_string(spec);
}

}  // namespace rlc
