#include "multilink/doc_engine.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <utility>

namespace multilink {

const std::vector<Value>* Database::find_collection(std::string_view name) const {
  for (const auto& [coll_name, docs] : collections) {
    if (coll_name == name) return &docs;
  }
  return nullptr;
}

std::vector<Value>& Database::add_collection(std::string name) {
  collections.emplace_back(std::move(name), std::vector<Value>());
  return collections.back().second;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<Value> load_collection_file(const std::filesystem::path& path) {
  std::string text = read_file(path);
  Value parsed;
  try {
    parsed = json_read(text, path.filename().string());
  } catch (const JsonError& e) {
    throw FormatError(path.string(), e.position, e.what());
  }
  if (!parsed.is_array()) {
    throw FormatError(path.string(), 0, "collection file must hold a JSON array");
  }
  std::vector<Value> docs;
  docs.reserve(parsed.size());
  for (auto& doc : parsed) {
    if (!doc.is_object()) {
      throw FormatError(path.string(), 0, "collection entries must be objects");
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

Database load_database(const std::filesystem::path& path) {
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    Database db;
    db.name = path.filename().string();
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      db.add_collection(file.stem().string()) = load_collection_file(file);
    }
    return db;
  }
  if (!std::filesystem::exists(path, ec)) {
    throw IoError("no such file or directory: " + path.string());
  }
  // manifest: {"name": ..., "collections": {"<collection>": "<relative file>"}}
  Value manifest;
  try {
    manifest = json_read(read_file(path), path.filename().string());
  } catch (const JsonError& e) {
    throw FormatError(path.string(), e.position, e.what());
  }
  if (!manifest.is_object() || !manifest.contains("collections") ||
      !manifest["collections"].is_object()) {
    throw FormatError(path.string(), 0, "manifest must map collection names to files");
  }
  Database db;
  db.name = manifest.value("name", path.stem().string());
  for (const auto& [name, file] : manifest["collections"].items()) {
    if (!file.is_string()) {
      throw FormatError(path.string(), 0, "collection file entries must be strings");
    }
    db.add_collection(name) =
        load_collection_file(path.parent_path() / file.get_ref<const std::string&>());
  }
  return db;
}

void dump_database(const Database& db, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  for (const auto& [name, docs] : db.collections) {
    Value arr = Value::array();
    for (const auto& doc : docs) arr.push_back(doc);
    std::ofstream out(dir / (name + ".json"), std::ios::binary);
    if (!out) throw IoError("cannot write collection file for " + name);
    out << arr.dump(2) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Execution.
//
// Shared semantic rules (the test-side reference evaluator transcribes the
// same rules independently):
//  * match paths traverse nested objects and descend into arrays at every
//    level; terminal arrays contribute themselves and their elements as
//    comparison candidates; ordering ops only compare same-bracket values
//  * sort keys and unwind targets resolve by strict object-only traversal,
//    missing sorts as null
//  * $-path expressions (group ids, accumulator args, projection refs)
//    traverse objects and map over arrays, collecting hits into an array
//  * group output is keyed in first-appearance order, accumulators fold in
//    input order; $sum stays integer until a float joins; $min/$max skip
//    nulls; $first/$last omit the field when the value is missing
// ---------------------------------------------------------------------------

namespace {

// Candidate values for match comparisons, breadth-first.
void gather_candidates(const Value& doc, const FieldPath& path, std::vector<const Value*>& out,
                       bool& present) {
  std::deque<std::pair<const Value*, std::size_t>> queue;
  queue.emplace_back(&doc, 0);
  std::vector<const Value*> terminals;
  while (!queue.empty()) {
    auto [node, i] = queue.front();
    queue.pop_front();
    if (i == path.segments.size()) {
      terminals.push_back(node);
      continue;
    }
    if (node->is_array()) {
      for (const auto& elem : *node) queue.emplace_back(&elem, i);
      continue;
    }
    if (node->is_object()) {
      auto it = node->find(path.segments[i]);
      if (it != node->end()) queue.emplace_back(&*it, i + 1);
    }
  }
  present = !terminals.empty();
  for (const Value* t : terminals) {
    out.push_back(t);
    if (t->is_array()) {
      for (const auto& elem : *t) out.push_back(&elem);
    }
  }
}

const Value* strict_resolve(const Value& doc, const FieldPath& path) {
  const Value* node = &doc;
  for (const auto& seg : path.segments) {
    if (!node->is_object()) return nullptr;
    auto it = node->find(seg);
    if (it == node->end()) return nullptr;
    node = &*it;
  }
  return node;
}

std::optional<Value> expr_path_resolve(const Value& node, const FieldPath& path, std::size_t i) {
  if (i == path.segments.size()) return node;
  if (node.is_array()) {
    Value collected = Value::array();
    for (const auto& elem : node) {
      if (!elem.is_object()) continue;
      auto sub = expr_path_resolve(elem, path, i);
      if (sub) collected.push_back(std::move(*sub));
    }
    return collected;
  }
  if (!node.is_object()) return std::nullopt;
  auto it = node.find(path.segments[i]);
  if (it == node.end()) return std::nullopt;
  return expr_path_resolve(*it, path, i + 1);
}

std::optional<Value> eval_value_expr(const Value& doc, const ValueExpr& expr) {
  if (!expr.is_ref) return expr.literal;
  return expr_path_resolve(doc, expr.path, 0);
}

bool ordering_clause_holds(CompareOp op, const Value& candidate, const Value& operand) {
  if (type_rank(candidate) != type_rank(operand)) return false;
  int c = canonical_compare(candidate, operand);
  switch (op) {
    case CompareOp::Gt: return c > 0;
    case CompareOp::Gte: return c >= 0;
    case CompareOp::Lt: return c < 0;
    case CompareOp::Lte: return c <= 0;
    default: return false;
  }
}

bool clause_holds(const Value& doc, const FieldPath& path, const OpClause& clause) {
  std::vector<const Value*> candidates;
  bool present = false;
  gather_candidates(doc, path, candidates, present);
  switch (clause.op) {
    case CompareOp::Eq: {
      for (const Value* c : candidates) {
        if (values_equal(*c, clause.operand)) return true;
      }
      return false;
    }
    case CompareOp::Ne: {
      for (const Value* c : candidates) {
        if (values_equal(*c, clause.operand)) return false;
      }
      return true;
    }
    case CompareOp::Gt:
    case CompareOp::Gte:
    case CompareOp::Lt:
    case CompareOp::Lte: {
      for (const Value* c : candidates) {
        if (ordering_clause_holds(clause.op, *c, clause.operand)) return true;
      }
      return false;
    }
    case CompareOp::In: {
      for (const Value* c : candidates) {
        for (const auto& want : clause.operand) {
          if (values_equal(*c, want)) return true;
        }
      }
      return false;
    }
    case CompareOp::Nin: {
      for (const Value* c : candidates) {
        for (const auto& want : clause.operand) {
          if (values_equal(*c, want)) return false;
        }
      }
      return true;
    }
    case CompareOp::Exists:
      return clause.operand.get<bool>() == present;
    case CompareOp::Regex: {
      std::regex re(clause.operand.get_ref<const std::string&>(), std::regex::ECMAScript);
      for (const Value* c : candidates) {
        if (c->is_string() && std::regex_search(c->get_ref<const std::string&>(), re)) {
          return true;
        }
      }
      return false;
    }
  }
  return false;
}

bool filter_holds(const Value& doc, const Filter& filter);

bool predicate_holds(const Value& doc, const FieldPredicate& pred) {
  for (const auto& clause : pred.clauses) {
    if (!clause_holds(doc, pred.path, clause)) return false;
  }
  if (!pred.not_clauses.empty()) {
    bool all = true;
    for (const auto& clause : pred.not_clauses) {
      if (!clause_holds(doc, pred.path, clause)) {
        all = false;
        break;
      }
    }
    if (all) return false;
  }
  return true;
}

bool filter_holds(const Value& doc, const Filter& filter) {
  for (const auto& entry : filter.entries) {
    switch (entry.kind) {
      case Filter::Entry::Kind::Predicate:
        if (!predicate_holds(doc, entry.predicate)) return false;
        break;
      case Filter::Entry::Kind::And:
        for (const auto& sub : entry.group) {
          if (!filter_holds(doc, sub)) return false;
        }
        break;
      case Filter::Entry::Kind::Or: {
        bool any = false;
        for (const auto& sub : entry.group) {
          if (filter_holds(doc, sub)) {
            any = true;
            break;
          }
        }
        if (!any) return false;
        break;
      }
      case Filter::Entry::Kind::Nor:
        for (const auto& sub : entry.group) {
          if (filter_holds(doc, sub)) return false;
        }
        break;
    }
  }
  return true;
}

// ---- projection ----

struct IncludeNode {
  bool leaf = false;
  std::vector<std::pair<std::string, IncludeNode>> children;

  IncludeNode* child(const std::string& name) {
    for (auto& [key, node] : children) {
      if (key == name) return &node;
    }
    return nullptr;
  }
  const IncludeNode* child(const std::string& name) const {
    for (const auto& [key, node] : children) {
      if (key == name) return &node;
    }
    return nullptr;
  }
  IncludeNode& ensure(const std::string& name) {
    if (IncludeNode* existing = child(name)) return *existing;
    children.emplace_back(name, IncludeNode{});
    return children.back().second;
  }
};

Value project_include_tree(const Value& src, const IncludeNode& tree) {
  Value out = Value::object();
  for (const auto& [key, value] : src.items()) {
    const IncludeNode* node = tree.child(key);
    if (!node) continue;
    if (node->leaf) {
      out[key] = value;
    } else if (value.is_object()) {
      out[key] = project_include_tree(value, *node);
    } else if (value.is_array()) {
      Value arr = Value::array();
      for (const auto& elem : value) {
        if (elem.is_object()) arr.push_back(project_include_tree(elem, *node));
      }
      out[key] = arr;
    }
    // scalar under a non-leaf include: dropped
  }
  return out;
}

void set_at_path(Value& doc, const FieldPath& path, Value value) {
  Value* node = &doc;
  for (std::size_t i = 0; i + 1 < path.segments.size(); ++i) {
    Value& next = (*node)[path.segments[i]];
    if (!next.is_object()) next = Value::object();
    node = &next;
  }
  (*node)[path.segments.back()] = std::move(value);
}

void remove_at_path(Value& node, const FieldPath& path, std::size_t i) {
  if (!node.is_object()) {
    if (node.is_array()) {
      for (auto& elem : node) remove_at_path(elem, path, i);
    }
    return;
  }
  auto it = node.find(path.segments[i]);
  if (it == node.end()) return;
  if (i + 1 == path.segments.size()) {
    node.erase(path.segments[i]);
  } else {
    remove_at_path(*it, path, i + 1);
  }
}

Value apply_projection(const Value& doc, const Projection& proj) {
  bool inclusion = false;
  bool id_suppressed = false;
  bool id_explicit = false;
  for (const auto& entry : proj) {
    if (entry.kind != ProjectionEntry::Kind::Exclude) inclusion = true;
    if (entry.target.is_id()) {
      id_explicit = true;
      if (entry.kind == ProjectionEntry::Kind::Exclude) id_suppressed = true;
    }
  }
  if (!inclusion) {
    Value out = doc;
    for (const auto& entry : proj) remove_at_path(out, entry.target, 0);
    return out;
  }
  IncludeNode tree;
  if (!id_suppressed && !id_explicit) tree.ensure("_id").leaf = true;
  for (const auto& entry : proj) {
    if (entry.kind != ProjectionEntry::Kind::Include) continue;
    IncludeNode* node = &tree;
    for (const auto& seg : entry.target.segments) node = &node->ensure(seg);
    node->leaf = true;
  }
  Value out = project_include_tree(doc, tree);
  // computed aliases follow, in spec order
  for (const auto& entry : proj) {
    if (entry.kind != ProjectionEntry::Kind::Ref) continue;
    auto value = expr_path_resolve(doc, entry.source, 0);
    if (value) set_at_path(out, entry.target, std::move(*value));
  }
  return out;
}

// ---- group ----

struct AccumulatorState {
  bool sum_all_int = true;
  std::int64_t sum_int = 0;
  double sum_float = 0.0;
  double avg_sum = 0.0;
  std::size_t avg_count = 0;
  std::optional<Value> extreme;
  Value collected = Value::array();
  std::optional<Value> first;
  bool first_captured = false;
  std::optional<Value> last;

  void fold(AccumulatorOp op, const std::optional<Value>& v) {
    switch (op) {
      case AccumulatorOp::Sum:
        if (v && v->is_number()) {
          if (v->is_number_integer()) {
            sum_int += v->get<std::int64_t>();
          } else {
            sum_all_int = false;
          }
          sum_float += v->get<double>();
        }
        break;
      case AccumulatorOp::Avg:
        if (v && v->is_number()) {
          avg_sum += v->get<double>();
          ++avg_count;
        }
        break;
      case AccumulatorOp::Min:
      case AccumulatorOp::Max: {
        if (!v || v->is_null()) break;
        if (!extreme) {
          extreme = *v;
          break;
        }
        int c = canonical_compare(*v, *extreme);
        if ((op == AccumulatorOp::Min && c < 0) || (op == AccumulatorOp::Max && c > 0)) {
          extreme = *v;
        }
        break;
      }
      case AccumulatorOp::Push:
        if (v) collected.push_back(*v);
        break;
      case AccumulatorOp::AddToSet: {
        if (!v) break;
        for (const auto& have : collected) {
          if (values_equal(have, *v)) return;
        }
        collected.push_back(*v);
        break;
      }
      case AccumulatorOp::First:
        if (!first_captured) {
          first_captured = true;
          first = v;
        }
        break;
      case AccumulatorOp::Last:
        last = v;
        break;
    }
  }

  void finish(AccumulatorOp op, const std::string& alias, Value& out) const {
    switch (op) {
      case AccumulatorOp::Sum:
        out[alias] = sum_all_int ? Value(sum_int) : Value(sum_float);
        break;
      case AccumulatorOp::Avg:
        out[alias] =
            avg_count == 0 ? Value(nullptr) : Value(avg_sum / static_cast<double>(avg_count));
        break;
      case AccumulatorOp::Min:
      case AccumulatorOp::Max:
        out[alias] = extreme ? *extreme : Value(nullptr);
        break;
      case AccumulatorOp::Push:
      case AccumulatorOp::AddToSet:
        out[alias] = collected;
        break;
      case AccumulatorOp::First:
        if (first) out[alias] = *first;
        break;
      case AccumulatorOp::Last:
        if (last) out[alias] = *last;
        break;
    }
  }
};

Value group_key_of(const Value& doc, const GroupId& id) {
  if (id.is_doc) {
    Value key = Value::object();
    for (const auto& field : id.fields) {
      auto v = eval_value_expr(doc, field.expr);
      key[field.name] = v ? std::move(*v) : Value(nullptr);
    }
    return key;
  }
  auto v = eval_value_expr(doc, id.expr);
  return v ? std::move(*v) : Value(nullptr);
}

std::vector<Value> run_group_stage(const std::vector<Value>& docs, const GroupStage& stage) {
  struct Bucket {
    Value key;
    std::vector<AccumulatorState> states;
  };
  std::vector<Bucket> buckets;
  for (const auto& doc : docs) {
    Value key = group_key_of(doc, stage.id);
    Bucket* bucket = nullptr;
    for (auto& b : buckets) {
      if (values_equal(b.key, key)) {
        bucket = &b;
        break;
      }
    }
    if (!bucket) {
      buckets.push_back({std::move(key), std::vector<AccumulatorState>(stage.accumulators.size())});
      bucket = &buckets.back();
    }
    for (std::size_t i = 0; i < stage.accumulators.size(); ++i) {
      bucket->states[i].fold(stage.accumulators[i].op,
                             eval_value_expr(doc, stage.accumulators[i].arg));
    }
  }
  std::vector<Value> out;
  out.reserve(buckets.size());
  for (const auto& bucket : buckets) {
    Value doc = Value::object();
    doc["_id"] = bucket.key;
    for (std::size_t i = 0; i < stage.accumulators.size(); ++i) {
      bucket.states[i].finish(stage.accumulators[i].op, stage.accumulators[i].alias, doc);
    }
    out.push_back(std::move(doc));
  }
  return out;
}

// ---- remaining stages ----

std::vector<Value> run_sort_stage(std::vector<Value> docs, const std::vector<SortKey>& keys) {
  static const Value kNull;
  std::stable_sort(docs.begin(), docs.end(), [&keys](const Value& a, const Value& b) {
    for (const auto& key : keys) {
      const Value* va = strict_resolve(a, key.path);
      const Value* vb = strict_resolve(b, key.path);
      int c = canonical_compare(va ? *va : kNull, vb ? *vb : kNull);
      if (c != 0) return key.direction > 0 ? c < 0 : c > 0;
    }
    return false;
  });
  return docs;
}

std::vector<Value> run_unwind_stage(const std::vector<Value>& docs, const FieldPath& path) {
  std::vector<Value> out;
  for (const auto& doc : docs) {
    const Value* target = strict_resolve(doc, path);
    if (!target || !target->is_array()) continue;  // dropped, MongoDB default
    for (const auto& elem : *target) {
      Value copy = doc;
      set_at_path(copy, path, elem);
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::vector<Value> run_lookup_stage(const Database& db, const std::vector<Value>& docs,
                                    const LookupStage& stage) {
  const std::vector<Value>* foreign = db.find_collection(stage.from);
  if (!foreign) throw UnknownCollection(stage.from);
  static const Value kNull;
  std::vector<Value> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    const Value* local = strict_resolve(doc, stage.local_field);
    const Value& local_value = local ? *local : kNull;
    Value matches = Value::array();
    for (const auto& fdoc : *foreign) {
      const Value* fvalue = strict_resolve(fdoc, stage.foreign_field);
      if (values_equal(local_value, fvalue ? *fvalue : kNull)) {
        matches.push_back(fdoc);
      }
    }
    Value copy = doc;
    copy[stage.as] = std::move(matches);
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<Value> run_match_stage(std::vector<Value> docs, const Filter& filter) {
  std::vector<Value> out;
  out.reserve(docs.size());
  for (auto& doc : docs) {
    if (filter_holds(doc, filter)) out.push_back(std::move(doc));
  }
  return out;
}

std::vector<Value> apply_limit(std::vector<Value> docs, std::int64_t n) {
  if (std::cmp_greater(docs.size(), n)) docs.resize(static_cast<std::size_t>(n));
  return docs;
}

std::vector<Value> apply_skip(std::vector<Value> docs, std::int64_t n) {
  if (std::cmp_less_equal(docs.size(), n)) return {};
  docs.erase(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n));
  return docs;
}

}  // namespace

ResultSet execute(const Database& db, const Query& q) {
  const std::vector<Value>* coll = db.find_collection(q.collection);
  if (!coll) throw UnknownCollection(q.collection);

  ResultSet result;
  if (q.is_find()) {
    const FindQuery& find = q.find();
    std::vector<Value> docs = run_match_stage(*coll, find.filter);
    if (find.projection) {
      for (auto& doc : docs) doc = apply_projection(doc, *find.projection);
    }
    if (find.sort) {
      docs = run_sort_stage(std::move(docs), *find.sort);
      result.ordered = true;
    }
    if (find.limit) docs = apply_limit(std::move(docs), *find.limit);
    result.docs = std::move(docs);
    return result;
  }

  std::vector<Value> docs = *coll;
  for (const auto& stage : q.aggregate().stages) {
    if (const auto* match = std::get_if<MatchStage>(&stage)) {
      docs = run_match_stage(std::move(docs), match->filter);
    } else if (const auto* project = std::get_if<ProjectStage>(&stage)) {
      for (auto& doc : docs) doc = apply_projection(doc, project->entries);
    } else if (const auto* group = std::get_if<GroupStage>(&stage)) {
      docs = run_group_stage(docs, *group);
      result.ordered = false;  // grouping re-keys the stream
    } else if (const auto* sort = std::get_if<SortStage>(&stage)) {
      docs = run_sort_stage(std::move(docs), sort->keys);
      result.ordered = true;
    } else if (const auto* limit = std::get_if<LimitStage>(&stage)) {
      docs = apply_limit(std::move(docs), limit->n);
    } else if (const auto* skip = std::get_if<SkipStage>(&stage)) {
      docs = apply_skip(std::move(docs), skip->n);
    } else if (const auto* unwind = std::get_if<UnwindStage>(&stage)) {
      docs = run_unwind_stage(docs, unwind->path);
    } else if (const auto* lookup = std::get_if<LookupStage>(&stage)) {
      docs = run_lookup_stage(db, docs, *lookup);
    } else if (const auto* count = std::get_if<CountStage>(&stage)) {
      Value doc = Value::object();
      doc[count->alias] = static_cast<std::int64_t>(docs.size());
      docs.clear();
      docs.push_back(std::move(doc));
      result.ordered = false;
    }
  }
  result.docs = std::move(docs);
  return result;
}

bool results_equal(const ResultSet& a, const ResultSet& b) {
  constexpr double kTolerance = 1e-9;
  if (a.docs.size() != b.docs.size()) return false;
  if (a.ordered || b.ordered) {
    for (std::size_t i = 0; i < a.docs.size(); ++i) {
      if (!values_equal(a.docs[i], b.docs[i], kTolerance)) return false;
    }
    return true;
  }
  std::vector<bool> used(b.docs.size(), false);
  for (const auto& doc : a.docs) {
    bool matched = false;
    for (std::size_t j = 0; j < b.docs.size(); ++j) {
      if (!used[j] && values_equal(doc, b.docs[j], kTolerance)) {
        used[j] = true;
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  return true;
}

}  // namespace multilink
