#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "slotune/expression.hpp"

namespace slotune {

enum class ParamKind { integer, real, boolean, enumeration };

/// A typed parameter value. Enumerations hold their literal choice (integer or
/// string); booleans are the 2-choice enumeration {false, true}.
using Value = std::variant<bool, std::int64_t, double, std::string>;

std::string to_string(const Value& v);
std::string_view to_string(ParamKind kind);

/// One tunable dimension.
///
/// Real parameters live on a uniform lattice of `resolution` steps over
/// [lo, hi]; that lattice is what makes encode/decode an exact round trip.
struct ParamSpec {
  static constexpr std::int64_t kDefaultResolution = std::int64_t{1} << 20;

  std::string name;
  ParamKind kind = ParamKind::real;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<Value> choices;  // enumeration and boolean
  Value default_value = 0.0;
  std::int64_t resolution = kDefaultResolution;

  std::size_t cardinality() const noexcept { return choices.size(); }
  bool contains(const Value& v) const;
  double encode(const Value& v) const;
  /// Clamps u into [0, 1] and maps it to the nearest representable value.
  Value decode(double u) const;
  /// Throws ValidationError naming this parameter if an invariant fails.
  void validate() const;
};

struct Configuration {
  std::vector<Value> values;

  bool operator==(const Configuration&) const = default;
};

struct ConfigurationHash {
  std::size_t operator()(const Configuration& c) const noexcept;
};

/// Declared inter-parameter predicate, bound to parameter slots.
struct KnownConstraint {
  std::string text;
  Expression expr;
};

/// The search space: ordered parameters, known constraints and named
/// constants available to constraints and range bounds. Immutable once built.
class SearchSpace {
 public:
  SearchSpace(std::string name, std::vector<ParamSpec> params, const std::vector<std::string>& constraints,
              std::map<std::string, Value> constants = {});

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return params_.size(); }
  const std::vector<ParamSpec>& params() const noexcept { return params_; }
  const ParamSpec& param(std::size_t i) const { return params_.at(i); }
  const std::vector<KnownConstraint>& constraints() const noexcept { return constraints_; }
  const std::map<std::string, Value>& constants() const noexcept { return constants_; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  const Value& get(const Configuration& x, std::string_view name) const;

  Configuration default_config() const;
  bool contains(const Configuration& x) const;

  Eigen::VectorXd encode(const Configuration& x) const;
  Configuration decode(const Eigen::Ref<const Eigen::VectorXd>& u) const;
  /// encode(decode(u)): moves a unit-cube point onto the representable lattice.
  Eigen::VectorXd snap(const Eigen::Ref<const Eigen::VectorXd>& u) const { return encode(decode(u)); }

  bool check_known(const Configuration& x) const { return count_violations(x) == 0; }
  std::size_t count_violations(const Configuration& x) const;

  /// Stable 64-bit digest of the canonical definition.
  std::uint64_t digest() const;

 private:
  std::string name_;
  std::vector<ParamSpec> params_;
  std::vector<KnownConstraint> constraints_;
  std::map<std::string, Value> constants_;
};

/// Parses a space-definition document (JSON text). Throws SchemaError for a
/// malformed document and ValidationError for invariant violations.
SearchSpace parse_space(std::string_view document);
SearchSpace load_space(const std::filesystem::path& path);
/// Canonical document; parse_space(space_document(s)) reproduces s.
std::string space_document(const SearchSpace& space);

/// Deterministic Sobol design of `count` distinct configurations that satisfy
/// the known constraints. Points are drawn in sequence order, skipping
/// violators and anything in `exclude`; at most 1000 * count draws are made
/// before SamplingExhausted is thrown.
std::vector<Configuration> sobol_sample(const SearchSpace& space, std::size_t count, std::uint64_t seed,
                                        std::span<const Configuration> exclude = {});

}  // namespace slotune
