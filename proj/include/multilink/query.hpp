#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "multilink/errors.hpp"
#include "multilink/value.hpp"

namespace multilink {

struct ParseError : Error {
  std::size_t position = 0;
  ParseError(std::size_t position_, const std::string& message)
      : Error(message + " (at offset " + std::to_string(position_) + ")"),
        position(position_) {}
};

/// Syntactically valid MongoDB that falls outside the supported stage and
/// operator set. Distinct from ParseError so callers can tell "malformed"
/// from "deliberately rejected".
struct UnsupportedFeature : ParseError {
  std::string feature;
  UnsupportedFeature(std::size_t position_, std::string feature_)
      : ParseError(position_, "unsupported feature: " + feature_),
        feature(std::move(feature_)) {}
};

/// Dotted field path. Segments are non-empty and never contain '.'.
struct FieldPath {
  std::vector<std::string> segments;

  FieldPath() = default;
  explicit FieldPath(std::vector<std::string> segments_) : segments(std::move(segments_)) {}

  std::string dotted() const;
  bool is_id() const { return segments.size() == 1 && segments[0] == "_id"; }

  /// Splits on '.'; throws ParseError on empty segments.
  static FieldPath from_dotted(std::string_view dotted, std::size_t position = 0);

  bool operator==(const FieldPath&) const = default;
  auto operator<=>(const FieldPath&) const = default;
};

enum class CompareOp { Eq, Ne, Gt, Gte, Lt, Lte, In, Nin, Exists, Regex };

std::string_view compare_op_name(CompareOp op);  // "$eq", "$gt", ...

/// One `$op: operand` clause of a field predicate.
struct OpClause {
  CompareOp op = CompareOp::Eq;
  Value operand;
  bool operator==(const OpClause&) const = default;
};

/// `path: literal` or `path: {$op: v, ..., $not: {...}}`. Clauses are ANDed;
/// `not_clauses`, when non-empty, contributes NOT(AND(not_clauses)).
struct FieldPredicate {
  FieldPath path;
  std::vector<OpClause> clauses;
  std::vector<OpClause> not_clauses;
  bool operator==(const FieldPredicate&) const = default;
};

/// Filter document. Entries mirror the surface object and are ANDed together.
/// At most one $and / $or / $nor entry can appear per filter object (duplicate
/// keys are rejected at parse time); nesting expresses anything larger.
struct Filter {
  struct Entry {
    enum class Kind { Predicate, And, Or, Nor };
    Kind kind = Kind::Predicate;
    FieldPredicate predicate;    // Kind::Predicate
    std::vector<Filter> group;   // Kind::And / Or / Nor
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;  // empty filter matches everything

  bool operator==(const Filter&) const = default;
};

struct ProjectionEntry {
  enum class Kind { Include, Exclude, Ref };
  FieldPath target;
  Kind kind = Kind::Include;
  FieldPath source;  // Kind::Ref: the `$path` the alias is computed from
  bool operator==(const ProjectionEntry&) const = default;
};
using Projection = std::vector<ProjectionEntry>;

/// `$path` reference or a literal constant.
struct ValueExpr {
  bool is_ref = false;
  FieldPath path;  // is_ref
  Value literal;   // !is_ref
  bool operator==(const ValueExpr&) const = default;

  static ValueExpr ref(FieldPath p) { return {true, std::move(p), Value()}; }
  static ValueExpr lit(Value v) { return {false, {}, std::move(v)}; }
};

enum class AccumulatorOp { Sum, Avg, Min, Max, Push, AddToSet, First, Last };

std::string_view accumulator_op_name(AccumulatorOp op);  // "$sum", ...

struct Accumulator {
  std::string alias;
  AccumulatorOp op = AccumulatorOp::Sum;
  ValueExpr arg;
  bool operator==(const Accumulator&) const = default;
};

/// `_id:` of a $group stage: a single expression or a document of named
/// sub-expressions. Grouping over everything is the literal-null expression.
struct GroupId {
  struct Field {
    std::string name;
    ValueExpr expr;
    bool operator==(const Field&) const = default;
  };
  bool is_doc = false;
  ValueExpr expr;             // !is_doc
  std::vector<Field> fields;  // is_doc
  bool operator==(const GroupId&) const = default;
};

struct GroupStage {
  GroupId id;
  std::vector<Accumulator> accumulators;
  bool operator==(const GroupStage&) const = default;
};

struct SortKey {
  FieldPath path;
  int direction = 1;  // +1 or -1
  bool operator==(const SortKey&) const = default;
};

struct MatchStage {
  Filter filter;
  bool operator==(const MatchStage&) const = default;
};
struct ProjectStage {
  Projection entries;
  bool operator==(const ProjectStage&) const = default;
};
struct SortStage {
  std::vector<SortKey> keys;
  bool operator==(const SortStage&) const = default;
};
struct LimitStage {
  std::int64_t n = 0;
  bool operator==(const LimitStage&) const = default;
};
struct SkipStage {
  std::int64_t n = 0;
  bool operator==(const SkipStage&) const = default;
};
struct UnwindStage {
  FieldPath path;
  bool operator==(const UnwindStage&) const = default;
};
struct LookupStage {
  std::string from;
  FieldPath local_field;
  FieldPath foreign_field;
  std::string as;
  bool operator==(const LookupStage&) const = default;
};
struct CountStage {
  std::string alias;
  bool operator==(const CountStage&) const = default;
};

using Stage = std::variant<MatchStage, ProjectStage, GroupStage, SortStage, LimitStage,
                           SkipStage, UnwindStage, LookupStage, CountStage>;

/// Lowercase stage keyword as used in stage signatures ("match", "unwind", ...).
std::string_view stage_keyword(const Stage& stage);

struct FindQuery {
  Filter filter;
  std::optional<Projection> projection;
  std::optional<std::vector<SortKey>> sort;
  std::optional<std::int64_t> limit;
  bool operator==(const FindQuery&) const = default;
};

struct AggregateQuery {
  std::vector<Stage> stages;
  bool operator==(const AggregateQuery&) const = default;
};

struct Query {
  std::string collection;
  std::variant<FindQuery, AggregateQuery> body;

  bool is_find() const { return std::holds_alternative<FindQuery>(body); }
  const FindQuery& find() const { return std::get<FindQuery>(body); }
  const AggregateQuery& aggregate() const { return std::get<AggregateQuery>(body); }

  bool operator==(const Query&) const = default;
};

/// Parses one MongoDB shell statement: `db.<collection>.find(...)` with
/// optional `.sort()` / `.limit()` chains, or `db.<collection>.aggregate([...])`.
/// Trailing ';' optional, identifiers may be any Unicode, keys bare or quoted,
/// strings single- or double-quoted. Throws ParseError / UnsupportedFeature.
Query parse_query(std::string_view text);

/// Canonical text form: compact spacing, double-quoted strings, keys bare
/// unless they contain '.' or non-ASCII, stages and keys in parsed order,
/// no trailing semicolon. parse_query(serialize_query(q)) == q.
std::string serialize_query(const Query& q);

/// Ordered stage keywords. Aggregates yield one keyword per stage; find
/// queries yield [find] plus, in fixed order, "projection" / "sort" / "limit"
/// for whichever parts are present.
std::vector<std::string> stage_signature(const Query& q);

/// Every field path referenced anywhere in the query (filters, projections,
/// sort keys, group ids, accumulator arguments, unwind targets, lookup
/// local/foreign fields) plus query-defined aliases (projection aliases,
/// accumulator aliases, lookup `as`, count alias), as dotted strings.
/// `_id: 0` suppression entries are excluded.
std::set<std::string> field_inventory(const Query& q);

/// Structure-preserving skeleton: field paths become FIELD_1, FIELD_2, ...
/// (first-occurrence numbering, repeats reuse their placeholder), literals
/// become "VALUE_k" strings, collection names become COLLECTION. Structural
/// atoms survive: sort directions, projection 0/1, limit/skip counts, $exists
/// flags, null group ids, and the `_id` path itself.
Query sketch_of(const Query& q);

}  // namespace multilink
