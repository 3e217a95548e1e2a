#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

#include "multilink/errors.hpp"

namespace multilink {

/// Document value: null, boolean, number (integer or float kept distinct),
/// string, array, or object with insertion-ordered keys.
using Value = nlohmann::ordered_json;

struct JsonError : Error {
  std::string origin;
  std::size_t position = 0;
  JsonError(std::string origin_, std::size_t position_, const std::string& message);
};

/// Parses JSON text, rejecting duplicate object keys (the stock DOM parser
/// silently keeps the last one). `origin` names the source in errors.
Value json_read(std::string_view text, std::string origin = "");

/// Rank in the cross-type sort bracket:
/// null < numbers < strings < arrays < objects < booleans.
int type_rank(const Value& v);

/// Total order over values. Same-rank rules: numeric compare with
/// integer/float unification; strings byte-wise; arrays element-wise;
/// objects as ordered (key, value) pair lists; false < true.
int canonical_compare(const Value& a, const Value& b);

/// Deep equality: objects by key set (order-insensitive), arrays element-wise,
/// numbers unified across integer/float. `rel_tol` > 0 admits
/// |x-y| <= rel_tol * max(1, |x|, |y|) for float comparisons.
bool values_equal(const Value& a, const Value& b, double rel_tol = 0.0);

}  // namespace multilink
