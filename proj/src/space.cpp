#include "slotune/space.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"
#include "slotune/sobol.hpp"

namespace slotune {

using nlohmann::json;

std::string to_string(const Value& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[32];
          auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
          return std::string(buf, p);
        } else {
          return x;
        }
      },
      v);
}

std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::integer:
      return "integer";
    case ParamKind::real:
      return "float";
    case ParamKind::boolean:
      return "boolean";
    case ParamKind::enumeration:
      return "enumeration";
  }
  return "?";
}

// ---------------------------------------------------------------- ParamSpec

namespace {

double clamp_unit(double u) {
  if (!(u > 0.0)) return 0.0;  // also maps NaN to 0
  return u < 1.0 ? u : 1.0;
}

std::optional<std::size_t> choice_index(const ParamSpec& p, const Value& v) {
  for (std::size_t i = 0; i < p.choices.size(); ++i)
    if (p.choices[i] == v) return i;
  return std::nullopt;
}

}  // namespace

bool ParamSpec::contains(const Value& v) const {
  switch (kind) {
    case ParamKind::integer: {
      const auto* x = std::get_if<std::int64_t>(&v);
      return x && static_cast<double>(*x) >= lo && static_cast<double>(*x) <= hi;
    }
    case ParamKind::real: {
      const auto* x = std::get_if<double>(&v);
      return x && *x >= lo && *x <= hi;
    }
    case ParamKind::boolean:
    case ParamKind::enumeration:
      return choice_index(*this, v).has_value();
  }
  return false;
}

double ParamSpec::encode(const Value& v) const {
  switch (kind) {
    case ParamKind::integer:
      if (hi == lo) return 0.0;
      return (static_cast<double>(std::get<std::int64_t>(v)) - lo) / (hi - lo);
    case ParamKind::real:
      if (hi == lo) return 0.0;
      return (std::get<double>(v) - lo) / (hi - lo);
    case ParamKind::boolean:
    case ParamKind::enumeration: {
      const auto i = choice_index(*this, v);
      if (!i) throw ValidationError("value " + to_string(v) + " is not a choice of '" + name + "'");
      if (choices.size() == 1) return 0.0;
      return static_cast<double>(*i) / static_cast<double>(choices.size() - 1);
    }
  }
  return 0.0;
}

Value ParamSpec::decode(double u) const {
  u = clamp_unit(u);
  switch (kind) {
    case ParamKind::integer: {
      const auto base = static_cast<std::int64_t>(lo);
      const auto k = static_cast<std::int64_t>(std::floor(u * (hi - lo) + 0.5));
      return base + k;
    }
    case ParamKind::real: {
      const auto k = static_cast<std::int64_t>(std::floor(u * static_cast<double>(resolution) + 0.5));
      if (k <= 0 || hi == lo) return lo;
      if (k >= resolution) return hi;
      return std::clamp(lo + (hi - lo) * (static_cast<double>(k) / static_cast<double>(resolution)), lo, hi);
    }
    case ParamKind::boolean:
    case ParamKind::enumeration: {
      const auto m = choices.size();
      const auto i = static_cast<std::size_t>(std::floor(u * static_cast<double>(m - 1) + 0.5));
      return choices[std::min(i, m - 1)];
    }
  }
  return 0.0;
}

void ParamSpec::validate() const {
  auto fail = [&](const std::string& msg) { throw ValidationError("parameter '" + name + "': " + msg); };
  if (name.empty()) throw ValidationError("parameter with empty name");
  switch (kind) {
    case ParamKind::integer:
      if (lo != std::floor(lo) || hi != std::floor(hi)) fail("integer bounds must be integral");
      [[fallthrough]];
    case ParamKind::real:
      if (!std::isfinite(lo) || !std::isfinite(hi)) fail("bounds must be finite");
      if (lo > hi) fail("lower bound exceeds upper bound");
      if (resolution < 1) fail("resolution must be positive");
      break;
    case ParamKind::boolean:
      if (choices != std::vector<Value>{false, true}) fail("boolean choices must be {false, true}");
      break;
    case ParamKind::enumeration:
      if (choices.empty()) fail("enumeration has no values");
      for (std::size_t i = 0; i < choices.size(); ++i)
        for (std::size_t j = i + 1; j < choices.size(); ++j)
          if (choices[i] == choices[j]) fail("duplicate enumeration value " + to_string(choices[i]));
      break;
  }
  if (!contains(default_value)) fail("default " + to_string(default_value) + " is out of range");
}

std::size_t ConfigurationHash::operator()(const Configuration& c) const noexcept {
  std::size_t h = 0x9e3779b97f4a7c15ULL;
  for (const auto& v : c.values) {
    const std::size_t e = std::visit([](const auto& x) { return std::hash<std::decay_t<decltype(x)>>{}(x); }, v);
    h = static_cast<std::size_t>(mix64(h ^ e));
  }
  return h;
}

// -------------------------------------------------------------- SearchSpace

namespace {

ExprValue to_expr(const Value& v) {
  return std::visit(
      [](const auto& x) -> ExprValue {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::int64_t>)
          return static_cast<double>(x);
        else
          return x;
      },
      v);
}

ExprType slot_type(const ParamSpec& p) {
  switch (p.kind) {
    case ParamKind::integer:
    case ParamKind::real:
      return ExprType::number;
    case ParamKind::boolean:
      return ExprType::boolean;
    case ParamKind::enumeration: {
      std::optional<ExprType> t;
      for (const auto& c : p.choices) {
        const auto ct = static_cast<ExprType>(to_expr(c).index());
        if (t && *t != ct) throw ValidationError("parameter '" + p.name + "': mixed-type enumeration");
        t = ct;
      }
      return *t;
    }
  }
  return ExprType::number;
}

}  // namespace

SearchSpace::SearchSpace(std::string name, std::vector<ParamSpec> params, const std::vector<std::string>& constraints,
                         std::map<std::string, Value> constants)
    : name_(std::move(name)), params_(std::move(params)), constants_(std::move(constants)) {
  if (params_.empty()) throw ValidationError("search space has no parameters");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      if (params_[j].name == params_[i].name)
        throw ValidationError("parameter '" + params_[i].name + "' declared twice");
    if (constants_.count(params_[i].name))
      throw ValidationError("parameter '" + params_[i].name + "' shadows a constant");
  }

  std::vector<ExprType> types;
  for (const auto& p : params_) types.push_back(slot_type(p));

  auto resolve = [this](std::string_view id) -> std::optional<Expression::Binding> {
    if (auto i = index_of(id)) return Expression::Binding{*i};
    if (auto it = constants_.find(std::string(id)); it != constants_.end())
      return Expression::Binding{to_expr(it->second)};
    return std::nullopt;
  };
  for (const auto& text : constraints) {
    Expression bound;
    try {
      bound = Expression::parse(text).bind(resolve);
      if (bound.type_check(types) != ExprType::boolean)
        throw ValidationError("constraint does not evaluate to a boolean");
    } catch (const ValidationError& e) {
      throw ValidationError("constraint \"" + text + "\": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("constraint \"" + text + "\": " + e.what());
    }
    constraints_.push_back({text, std::move(bound)});
  }
}

std::optional<std::size_t> SearchSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

const Value& SearchSpace::get(const Configuration& x, std::string_view name) const {
  const auto i = index_of(name);
  if (!i) throw ValidationError("unknown parameter '" + std::string(name) + "'");
  return x.values.at(*i);
}

Configuration SearchSpace::default_config() const {
  Configuration c;
  for (const auto& p : params_) c.values.push_back(p.default_value);
  return c;
}

bool SearchSpace::contains(const Configuration& x) const {
  if (x.values.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!params_[i].contains(x.values[i])) return false;
  return true;
}

Eigen::VectorXd SearchSpace::encode(const Configuration& x) const {
  if (x.values.size() != params_.size())
    throw DimensionMismatch("configuration has " + std::to_string(x.values.size()) + " values, space has " +
                            std::to_string(params_.size()));
  Eigen::VectorXd u(static_cast<Eigen::Index>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) u[static_cast<Eigen::Index>(i)] = params_[i].encode(x.values[i]);
  return u;
}

Configuration SearchSpace::decode(const Eigen::Ref<const Eigen::VectorXd>& u) const {
  if (static_cast<std::size_t>(u.size()) != params_.size())
    throw DimensionMismatch("vector has " + std::to_string(u.size()) + " coordinates, space has " +
                            std::to_string(params_.size()));
  Configuration c;
  c.values.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) c.values.push_back(params_[i].decode(u[static_cast<Eigen::Index>(i)]));
  return c;
}

std::size_t SearchSpace::count_violations(const Configuration& x) const {
  if (constraints_.empty()) return 0;
  std::vector<ExprValue> slots;
  slots.reserve(x.values.size());
  for (const auto& v : x.values) slots.push_back(to_expr(v));
  std::size_t n = 0;
  for (const auto& c : constraints_)
    if (!std::get<bool>(c.expr.evaluate(slots))) ++n;
  return n;
}

std::uint64_t SearchSpace::digest() const { return hash_tag(space_document(*this)); }

// ------------------------------------------------------------------ parsing

namespace {

Value value_from_json(const json& j, const std::string& where) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    return d;
  }
  if (j.is_string()) return j.get<std::string>();
  throw SchemaError(where + ": unsupported value " + j.dump());
}

json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

double bound_from_json(const json& j, const std::map<std::string, Value>& constants, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    auto it = constants.find(j.get<std::string>());
    if (it == constants.end()) throw ValidationError(where + ": range references unknown constant " + j.dump());
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&it->second)) return *d;
    throw ValidationError(where + ": constant " + j.dump() + " is not numeric");
  }
  throw SchemaError(where + ": range bound must be a number or constant name");
}

ParamKind kind_from_string(const std::string& s, const std::string& where) {
  if (s == "integer" || s == "int") return ParamKind::integer;
  if (s == "float" || s == "real") return ParamKind::real;
  if (s == "boolean" || s == "bool") return ParamKind::boolean;
  if (s == "enumeration" || s == "enum") return ParamKind::enumeration;
  throw SchemaError(where + ": unknown kind '" + s + "'");
}

ParamSpec param_from_json(const json& j, const std::map<std::string, Value>& constants) {
  if (!j.is_object()) throw SchemaError("parameter entry must be an object");
  if (!j.contains("name") || !j["name"].is_string()) throw SchemaError("parameter entry without a name");
  ParamSpec p;
  p.name = j["name"].get<std::string>();
  const std::string where = "parameter '" + p.name + "'";
  if (!j.contains("kind") || !j["kind"].is_string()) throw SchemaError(where + ": missing kind");
  p.kind = kind_from_string(j["kind"].get<std::string>(), where);

  switch (p.kind) {
    case ParamKind::integer:
    case ParamKind::real: {
      const auto& r = j.value("range", json());
      if (!r.is_array() || r.size() != 2) throw SchemaError(where + ": range must be [lo, hi]");
      p.lo = bound_from_json(r[0], constants, where);
      p.hi = bound_from_json(r[1], constants, where);
      if (j.contains("resolution")) {
        if (!j["resolution"].is_number_integer()) throw SchemaError(where + ": resolution must be an integer");
        p.resolution = j["resolution"].get<std::int64_t>();
      }
      break;
    }
    case ParamKind::boolean:
      p.choices = {false, true};
      break;
    case ParamKind::enumeration: {
      const auto& vals = j.value("values", json());
      if (!vals.is_array()) throw SchemaError(where + ": enumeration needs a values list");
      for (const auto& v : vals) {
        if (!(v.is_number() || v.is_string())) throw SchemaError(where + ": enumeration values must be scalars");
        p.choices.push_back(value_from_json(v, where));
      }
      break;
    }
  }

  if (!j.contains("default")) throw SchemaError(where + ": missing default");
  const auto& d = j["default"];
  switch (p.kind) {
    case ParamKind::integer:
      if (!d.is_number()) throw SchemaError(where + ": default must be a number");
      if (d.get<double>() != std::floor(d.get<double>())) throw ValidationError(where + ": default must be integral");
      p.default_value = static_cast<std::int64_t>(d.get<double>());
      break;
    case ParamKind::real:
      if (!d.is_number()) throw SchemaError(where + ": default must be a number");
      p.default_value = d.get<double>();
      if (p.contains(p.default_value) && p.lo < p.hi) p.default_value = p.decode(p.encode(p.default_value));
      break;
    case ParamKind::boolean:
      if (!d.is_boolean()) throw SchemaError(where + ": default must be true or false");
      p.default_value = d.get<bool>();
      break;
    case ParamKind::enumeration:
      p.default_value = value_from_json(d, where);
      break;
  }
  return p;
}

}  // namespace

SearchSpace parse_space(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("space document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("space document must be an object");

  std::map<std::string, Value> constants;
  if (doc.contains("constants")) {
    if (!doc["constants"].is_object()) throw SchemaError("'constants' must be an object");
    for (const auto& [k, v] : doc["constants"].items()) constants.emplace(k, value_from_json(v, "constant '" + k + "'"));
  }

  if (!doc.contains("params") || !doc["params"].is_array()) throw SchemaError("missing 'params' list");
  std::vector<ParamSpec> params;
  for (const auto& pj : doc["params"]) params.push_back(param_from_json(pj, constants));

  std::vector<std::string> constraints;
  if (doc.contains("constraints")) {
    if (!doc["constraints"].is_array()) throw SchemaError("'constraints' must be a list");
    for (const auto& c : doc["constraints"]) {
      if (!c.is_string()) throw SchemaError("constraint entries must be strings");
      constraints.push_back(c.get<std::string>());
    }
  }
  return SearchSpace(doc.value("name", ""), std::move(params), constraints, std::move(constants));
}

SearchSpace load_space(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open space file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_space(ss.str());
}

std::string space_document(const SearchSpace& space) {
  json doc;
  doc["name"] = space.name();
  json constants = json::object();
  for (const auto& [k, v] : space.constants()) constants[k] = value_to_json(v);
  doc["constants"] = constants;
  json params = json::array();
  for (const auto& p : space.params()) {
    json pj;
    pj["name"] = p.name;
    pj["kind"] = std::string(to_string(p.kind));
    if (p.kind == ParamKind::integer) {
      pj["range"] = {static_cast<std::int64_t>(p.lo), static_cast<std::int64_t>(p.hi)};
    } else if (p.kind == ParamKind::real) {
      pj["range"] = {p.lo, p.hi};
      pj["resolution"] = p.resolution;
    } else if (p.kind == ParamKind::enumeration) {
      json vals = json::array();
      for (const auto& c : p.choices) vals.push_back(value_to_json(c));
      pj["values"] = vals;
    }
    pj["default"] = value_to_json(p.default_value);
    params.push_back(pj);
  }
  doc["params"] = params;
  json constraints = json::array();
  for (const auto& c : space.constraints()) constraints.push_back(c.text);
  doc["constraints"] = constraints;
  return doc.dump();
}

std::vector<Configuration> sobol_sample(const SearchSpace& space, std::size_t count, std::uint64_t seed,
                                        std::span<const Configuration> exclude) {
  if (count == 0) throw ValidationError("sample count must be positive");
  SobolSequence seq(space.dim(), seed);
  std::unordered_set<Configuration, ConfigurationHash> seen(exclude.begin(), exclude.end());
  std::vector<Configuration> out;
  out.reserve(count);
  const std::size_t cap = 1000 * count;
  for (std::size_t draw = 0; draw < cap && out.size() < count; ++draw) {
    Configuration x = space.decode(seq.next());
    if (!space.check_known(x)) continue;
    if (!seen.insert(x).second) continue;
    out.push_back(std::move(x));
  }
  if (out.size() < count)
    throw SamplingExhausted("only " + std::to_string(out.size()) + " of " + std::to_string(count) +
                            " valid configurations after " + std::to_string(cap) + " draws");
  return out;
}

}  // namespace slotune
