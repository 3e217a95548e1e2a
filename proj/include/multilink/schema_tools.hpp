#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "multilink/dataset.hpp"
#include "multilink/doc_engine.hpp"
#include "multilink/query.hpp"

namespace multilink {

/// Field tree node. Children appear in first-observation order; `kinds`
/// collects every value kind seen at the path ("null", "bool", "int",
/// "float", "string", "array", "object").
struct FieldNode {
  std::string name;
  std::set<std::string> kinds;
  std::vector<FieldNode> children;

  FieldNode* child(const std::string& name);
  const FieldNode* child(const std::string& name) const;
};

struct CollectionSchema {
  std::string name;
  std::vector<FieldNode> fields;
};

struct SchemaMap {
  std::vector<CollectionSchema> collections;
  const CollectionSchema* find(std::string_view name) const;
};

/// Union of all field paths observed across documents; arrays of objects
/// recurse into their element schemas.
SchemaMap infer_schema(const Database& db);

/// Dotted paths of a collection in preorder, each exactly once.
std::vector<std::string> schema_paths(const CollectionSchema& collection);

Value schema_to_json(const SchemaMap& schema);

/// Prompt rendering: one `# <collection>: <path>, <path>, ...` line per
/// collection.
std::string render_schema_text(const SchemaMap& schema);

struct UnmappedName : Error {
  std::string scope;
  std::string name;
  UnmappedName(std::string scope_, std::string name_)
      : Error("no mapping for \"" + name_ + "\" in " + scope_),
        scope(std::move(scope_)),
        name(std::move(name_)) {}
};

/// English -> target-language rename map over collection names and dotted
/// field paths (per source collection). Image paths preserve depth. The `_id`
/// key maps to itself unless an explicit entry overrides that.
struct FieldTranslationMap {
  std::string db_id;
  std::string target_language;
  std::map<std::string, std::string> collections;
  std::map<std::string, std::map<std::string, std::string>> fields;

  Value to_json() const;
  static FieldTranslationMap from_json(const Value& v);

  /// Image of a dotted path under a source collection, or empty when absent.
  const std::string* image_of(const std::string& collection, const std::string& path) const;
};

/// Renames collection names and all object keys; values are left untouched.
Database apply_map(const Database& db, const FieldTranslationMap& m);

/// Renames the collection and every field path / alias the query references.
/// Lookup foreignField renames resolve under the lookup's source collection.
Query apply_map_query(const Query& q, const FieldTranslationMap& m);

struct ExecutionError : Error {
  enum class Side { Source, Target };
  Side side;
  ExecutionError(Side side_, const std::string& message)
      : Error(std::string(side_ == Side::Source ? "source" : "target") +
              " query failed: " + message),
        side(side_) {}
};

/// True iff execution values match between the two sides (field names are
/// allowed to differ — the EVM comparison).
bool verify_translation(const Database& db_source, const Query& q_source,
                        const Database& db_target, const Query& q_target);

struct CollisionWarning {
  std::string scope;
  std::string source_a;
  std::string source_b;
  std::string image;
  std::string message() const {
    return scope + ": \"" + source_a + "\" and \"" + source_b +
           "\" both translate to \"" + image + "\"";
  }
};

/// One warning per pair of distinct source names whose images collide within
/// the same scope: two fields of one collection, two collection names, or a
/// collection name against a top-level field name.
std::vector<CollisionWarning> detect_collisions(const SchemaMap& schema,
                                                const FieldTranslationMap& m);

/// Cross-domain split: partitions at the database level (no db_id spans the
/// split), deterministic for a given seed, train share of distinct db_ids
/// rounded to the nearest integer (at least one db on each side).
std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_dataset(
    const std::vector<DatasetRecord>& records, double ratio, std::uint64_t seed);

}  // namespace multilink
