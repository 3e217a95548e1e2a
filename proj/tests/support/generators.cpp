#include "generators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace multilink::testsupport {
namespace {

const std::vector<std::string>& string_pool() {
  static const std::vector<std::string> pool = {
      "",
      "a b",
      "Spanish",
      "西班牙语",
      "学生",
      "モンゴ",
      "тест",
      "café",
      "naïve",
      "O'Hara \"quoted\"",
      "line\nbreak",
      "tab\tchar",
      "back\\slash",
      "dollar$sign",
      "ßtraße",
      "x",
  };
  return pool;
}

std::string non_ref_string(Rng& rng) {
  const std::string& s = rng.pick(string_pool());
  if (!s.empty() && s[0] == '$') return "x" + s;
  return s;
}

Value random_number(Rng& rng) {
  if (rng.chance(0.5)) return Value(rng.int_in(-1000000, 1000000));
  double mantissa = static_cast<double>(rng.int_in(-9999, 9999));
  double exponent = static_cast<double>(rng.int_in(-6, 6));
  double v = mantissa * std::pow(10.0, exponent);
  return Value(v);
}

Value random_scalar_impl(Rng& rng, bool allow_ref_like) {
  switch (rng.below(5)) {
    case 0: return Value(nullptr);
    case 1: return Value(rng.chance(0.5));
    case 2: return random_number(rng);
    default:
      return allow_ref_like ? Value(rng.pick(string_pool())) : Value(non_ref_string(rng));
  }
}

}  // namespace

const std::vector<std::string>& segment_pool() {
  static const std::vector<std::string> pool = {
      "name",   "value",  "items", "count",  "tags", "address", "city",
      "科目",   "课程",   "注册",  "学生",   "日期", "登山者",  "山脉",
      "страна", "город",  "город2", "düsseldorf", "état", "поле",
      "クラス", "先生",   "_meta", "a",      "b",    "c",
  };
  return pool;
}

const std::vector<std::string>& collection_pool() {
  static const std::vector<std::string> pool = {
      "users", "orders", "科目", "课程", "города", "événements", "生徒", "c1", "c2",
  };
  return pool;
}

Value random_scalar(Rng& rng) { return random_scalar_impl(rng, true); }

Value random_literal(Rng& rng, int depth) {
  std::size_t roll = rng.below(10);
  if (depth >= 2 || roll < 6) return random_scalar(rng);
  if (roll < 8) {
    Value arr = Value::array();
    std::size_t n = rng.below(4);
    for (std::size_t i = 0; i < n; ++i) arr.push_back(random_literal(rng, depth + 1));
    return arr;
  }
  Value obj = Value::object();
  std::size_t n = rng.below(3) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    std::string key = rng.chance(0.1) ? "$odd" : rng.pick(segment_pool());
    obj[key] = random_literal(rng, depth + 1);
  }
  return obj;
}

FieldPath random_path(Rng& rng, std::size_t max_segments) {
  std::size_t n = rng.below(max_segments) + 1;
  std::vector<std::string> segs;
  for (std::size_t i = 0; i < n; ++i) segs.push_back(rng.pick(segment_pool()));
  return FieldPath(std::move(segs));
}

namespace {

OpClause random_clause(Rng& rng) {
  static const std::vector<CompareOp> ops = {
      CompareOp::Eq,  CompareOp::Ne,  CompareOp::Gt,     CompareOp::Gte,   CompareOp::Lt,
      CompareOp::Lte, CompareOp::In,  CompareOp::Nin,    CompareOp::Exists, CompareOp::Regex,
  };
  OpClause clause;
  clause.op = rng.pick(ops);
  switch (clause.op) {
    case CompareOp::In:
    case CompareOp::Nin: {
      Value arr = Value::array();
      std::size_t n = rng.below(4);
      for (std::size_t i = 0; i < n; ++i) arr.push_back(random_scalar(rng));
      clause.operand = arr;
      break;
    }
    case CompareOp::Exists:
      clause.operand = Value(rng.chance(0.5));
      break;
    case CompareOp::Regex: {
      static const std::vector<std::string> patterns = {"spa", "^a", "x.*y", "[0-9]+", "café"};
      clause.operand = Value(rng.pick(patterns));
      break;
    }
    default:
      clause.operand = random_literal(rng);
      break;
  }
  return clause;
}

Filter random_filter(Rng& rng, int depth);

Filter::Entry random_entry(Rng& rng, int depth, std::set<std::string>& used_paths,
                           bool& used_and, bool& used_or, bool& used_nor) {
  std::size_t roll = rng.below(10);
  if (depth < 2 && roll >= 7) {
    Filter::Entry entry;
    if (roll == 7 && !used_and) {
      entry.kind = Filter::Entry::Kind::And;
      used_and = true;
    } else if (roll == 8 && !used_or) {
      entry.kind = Filter::Entry::Kind::Or;
      used_or = true;
    } else if (!used_nor) {
      entry.kind = Filter::Entry::Kind::Nor;
      used_nor = true;
    } else {
      entry.kind = Filter::Entry::Kind::Predicate;
    }
    if (entry.kind != Filter::Entry::Kind::Predicate) {
      std::size_t n = rng.below(2) + 1;
      for (std::size_t i = 0; i < n; ++i) entry.group.push_back(random_filter(rng, depth + 1));
      return entry;
    }
  }
  Filter::Entry entry;
  entry.kind = Filter::Entry::Kind::Predicate;
  FieldPath path = random_path(rng);
  while (used_paths.count(path.dotted())) path = random_path(rng);
  used_paths.insert(path.dotted());
  entry.predicate.path = path;
  std::size_t n_clauses = rng.below(2) + 1;
  std::set<std::string> seen_ops;
  for (std::size_t i = 0; i < n_clauses; ++i) {
    OpClause clause = random_clause(rng);
    std::string name(compare_op_name(clause.op));
    if (seen_ops.count(name)) continue;  // '$op' keys are unique per object
    seen_ops.insert(name);
    entry.predicate.clauses.push_back(std::move(clause));
  }
  if (rng.chance(0.15)) {
    std::set<std::string> seen_not;
    std::size_t n_not = rng.below(2) + 1;
    for (std::size_t i = 0; i < n_not; ++i) {
      OpClause clause = random_clause(rng);
      std::string name(compare_op_name(clause.op));
      if (seen_not.count(name)) continue;
      seen_not.insert(name);
      entry.predicate.not_clauses.push_back(std::move(clause));
    }
  }
  return entry;
}

Filter random_filter(Rng& rng, int depth) {
  Filter filter;
  std::size_t n = depth == 0 ? rng.below(3) : rng.below(2) + 1;
  std::set<std::string> used_paths;
  bool used_and = false, used_or = false, used_nor = false;
  for (std::size_t i = 0; i < n; ++i) {
    filter.entries.push_back(random_entry(rng, depth, used_paths, used_and, used_or, used_nor));
  }
  return filter;
}

Projection random_projection(Rng& rng) {
  Projection proj;
  std::set<std::string> used;
  bool inclusion = rng.chance(0.7);
  std::size_t n = rng.below(3) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    FieldPath target = random_path(rng);
    if (target.is_id() || used.count(target.dotted())) continue;
    used.insert(target.dotted());
    ProjectionEntry entry;
    entry.target = target;
    if (!inclusion) {
      entry.kind = ProjectionEntry::Kind::Exclude;
    } else if (rng.chance(0.4)) {
      entry.kind = ProjectionEntry::Kind::Ref;
      entry.source = random_path(rng);
    } else {
      entry.kind = ProjectionEntry::Kind::Include;
    }
    proj.push_back(std::move(entry));
  }
  if (proj.empty()) {
    ProjectionEntry entry;
    entry.target = FieldPath({"name"});
    entry.kind = inclusion ? ProjectionEntry::Kind::Include : ProjectionEntry::Kind::Exclude;
    proj.push_back(entry);
  }
  if (inclusion && rng.chance(0.5)) {
    ProjectionEntry id;
    id.target = FieldPath({"_id"});
    id.kind = ProjectionEntry::Kind::Exclude;
    proj.push_back(id);
  }
  return proj;
}

ValueExpr random_value_expr(Rng& rng) {
  if (rng.chance(0.6)) return ValueExpr::ref(random_path(rng));
  if (rng.chance(0.3)) {
    Value arr = Value::array();
    std::size_t n = rng.below(3);
    for (std::size_t i = 0; i < n; ++i) arr.push_back(random_scalar_impl(rng, true));
    return ValueExpr::lit(arr);
  }
  return ValueExpr::lit(random_scalar_impl(rng, false));
}

std::vector<SortKey> random_sort(Rng& rng) {
  std::vector<SortKey> keys;
  std::set<std::string> used;
  std::size_t n = rng.below(2) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    FieldPath path = random_path(rng);
    if (used.count(path.dotted())) continue;
    used.insert(path.dotted());
    keys.push_back({path, rng.chance(0.5) ? 1 : -1});
  }
  return keys;
}

GroupStage random_group(Rng& rng) {
  GroupStage group;
  std::size_t roll = rng.below(4);
  if (roll == 0) {
    group.id.expr = ValueExpr::lit(Value(nullptr));
  } else if (roll == 1) {
    group.id.is_doc = true;
    std::set<std::string> used;
    std::size_t n = rng.below(2) + 1;
    for (std::size_t i = 0; i < n; ++i) {
      std::string name = rng.pick(segment_pool());
      if (name == "_id" || used.count(name)) continue;
      used.insert(name);
      group.id.fields.push_back({name, random_value_expr(rng)});
    }
    if (group.id.fields.empty()) group.id.fields.push_back({"k", ValueExpr::ref(random_path(rng))});
  } else {
    group.id.expr = random_value_expr(rng);
  }
  static const std::vector<AccumulatorOp> acc_ops = {
      AccumulatorOp::Sum,  AccumulatorOp::Avg,      AccumulatorOp::Min,   AccumulatorOp::Max,
      AccumulatorOp::Push, AccumulatorOp::AddToSet, AccumulatorOp::First, AccumulatorOp::Last,
  };
  std::set<std::string> used;
  std::size_t n = rng.below(3);
  for (std::size_t i = 0; i < n; ++i) {
    std::string alias = rng.pick(segment_pool());
    if (alias == "_id" || used.count(alias)) continue;
    used.insert(alias);
    group.accumulators.push_back({alias, rng.pick(acc_ops), random_value_expr(rng)});
  }
  return group;
}

Stage random_stage(Rng& rng) {
  switch (rng.below(9)) {
    case 0: return MatchStage{random_filter(rng, 0)};
    case 1: return ProjectStage{random_projection(rng)};
    case 2: return random_group(rng);
    case 3: return SortStage{random_sort(rng)};
    case 4: return LimitStage{rng.int_in(0, 50)};
    case 5: return SkipStage{rng.int_in(0, 50)};
    case 6: return UnwindStage{random_path(rng)};
    case 7: {
      LookupStage lookup;
      lookup.from = rng.pick(collection_pool());
      lookup.local_field = random_path(rng);
      lookup.foreign_field = random_path(rng);
      lookup.as = rng.pick(segment_pool());
      return lookup;
    }
    default: return CountStage{rng.pick(segment_pool())};
  }
}

}  // namespace

Query random_roundtrip_query(Rng& rng) {
  Query q;
  q.collection = rng.pick(collection_pool());
  if (rng.chance(0.4)) {
    FindQuery find;
    find.filter = random_filter(rng, 0);
    if (rng.chance(0.5)) find.projection = random_projection(rng);
    if (rng.chance(0.5)) find.sort = random_sort(rng);
    if (rng.chance(0.5)) find.limit = rng.int_in(0, 100);
    q.body = std::move(find);
  } else {
    AggregateQuery agg;
    std::size_t n = rng.below(6);
    for (std::size_t i = 0; i < n; ++i) agg.stages.push_back(random_stage(rng));
    q.body = std::move(agg);
  }
  return q;
}

// ---- database generation ----

namespace {

struct FieldSpec {
  std::string name;
  enum class Kind { Scalar, Object, ArrayOfObjects, ArrayOfScalars } kind;
  std::vector<FieldSpec> children;
};

Value small_scalar(Rng& rng) {
  switch (rng.below(6)) {
    case 0: return Value(rng.int_in(-5, 10));
    case 1: return Value(static_cast<double>(rng.int_in(-10, 20)) / 2.0);
    case 2: return Value(rng.chance(0.5));
    case 3: return Value(nullptr);
    default: {
      static const std::vector<std::string> pool = {"a", "b", "x", "西", "я", "Spanish"};
      return Value(rng.pick(pool));
    }
  }
}

std::vector<FieldSpec> random_field_specs(Rng& rng, int depth) {
  std::vector<FieldSpec> specs;
  std::set<std::string> used;
  std::size_t n = rng.below(4) + 2;
  for (std::size_t i = 0; i < n; ++i) {
    std::string name = rng.pick(segment_pool());
    if (used.count(name)) continue;
    used.insert(name);
    FieldSpec spec;
    spec.name = name;
    std::size_t roll = depth >= 2 ? 0 : rng.below(10);
    if (roll < 6) {
      spec.kind = FieldSpec::Kind::Scalar;
    } else if (roll < 7) {
      spec.kind = FieldSpec::Kind::ArrayOfScalars;
    } else if (roll < 9) {
      spec.kind = FieldSpec::Kind::ArrayOfObjects;
      spec.children = random_field_specs(rng, depth + 1);
    } else {
      spec.kind = FieldSpec::Kind::Object;
      spec.children = random_field_specs(rng, depth + 1);
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

Value instantiate(Rng& rng, const std::vector<FieldSpec>& specs) {
  Value doc = Value::object();
  for (const auto& spec : specs) {
    if (rng.chance(0.15)) continue;  // field sometimes missing
    switch (spec.kind) {
      case FieldSpec::Kind::Scalar:
        doc[spec.name] = small_scalar(rng);
        break;
      case FieldSpec::Kind::ArrayOfScalars: {
        Value arr = Value::array();
        std::size_t n = rng.below(4);
        for (std::size_t i = 0; i < n; ++i) arr.push_back(small_scalar(rng));
        doc[spec.name] = arr;
        break;
      }
      case FieldSpec::Kind::ArrayOfObjects: {
        if (rng.chance(0.1)) {  // occasionally the wrong shape
          doc[spec.name] = small_scalar(rng);
          break;
        }
        Value arr = Value::array();
        std::size_t n = rng.below(4);
        for (std::size_t i = 0; i < n; ++i) arr.push_back(instantiate(rng, spec.children));
        doc[spec.name] = arr;
        break;
      }
      case FieldSpec::Kind::Object:
        doc[spec.name] = instantiate(rng, spec.children);
        break;
    }
  }
  return doc;
}

void collect_paths(const Value& doc, std::string prefix, std::vector<std::string>& flat,
                   std::vector<std::string>& arrays) {
  for (const auto& [key, value] : doc.items()) {
    std::string path = prefix.empty() ? key : prefix + "." + key;
    flat.push_back(path);
    if (value.is_object()) {
      collect_paths(value, path, flat, arrays);
    } else if (value.is_array()) {
      arrays.push_back(path);
      for (const auto& elem : value) {
        if (elem.is_object()) collect_paths(elem, path, flat, arrays);
      }
    }
  }
}

}  // namespace

Database random_database(Rng& rng, std::size_t max_docs) {
  Database db;
  db.name = "random_db";
  std::set<std::string> used;
  std::size_t n_cols = rng.below(3) + 1;
  for (std::size_t c = 0; c < n_cols; ++c) {
    std::string name = rng.pick(collection_pool());
    if (used.count(name)) continue;
    used.insert(name);
    auto specs = random_field_specs(rng, 0);
    auto& docs = db.add_collection(name);
    std::size_t n_docs = rng.below(max_docs) + 1;
    for (std::size_t i = 0; i < n_docs; ++i) docs.push_back(instantiate(rng, specs));
  }
  return db;
}

namespace {

struct DbPools {
  std::vector<std::string> paths;        // all observed dotted paths
  std::vector<std::string> array_paths;  // paths whose value is an array somewhere
  std::vector<Value> scalars;            // observed scalar values
};

void collect_scalars(const Value& v, std::vector<Value>& out) {
  if (v.is_object()) {
    for (const auto& [k, child] : v.items()) collect_scalars(child, out);
  } else if (v.is_array()) {
    for (const auto& child : v) collect_scalars(child, out);
  } else {
    out.push_back(v);
  }
}

DbPools build_pools(const Database& db, const std::string& collection) {
  DbPools pools;
  const auto* docs = db.find_collection(collection);
  for (const auto& doc : *docs) {
    collect_paths(doc, "", pools.paths, pools.array_paths);
    collect_scalars(doc, pools.scalars);
  }
  if (pools.paths.empty()) pools.paths.push_back("name");
  if (pools.scalars.empty()) pools.scalars.push_back(Value(1));
  return pools;
}

FieldPath pool_path(Rng& rng, const DbPools& pools) {
  if (rng.chance(0.15)) return random_path(rng, 2);  // sometimes miss on purpose
  return FieldPath::from_dotted(rng.pick(pools.paths));
}

Value pool_scalar(Rng& rng, const DbPools& pools) {
  if (rng.chance(0.25)) return small_scalar(rng);
  return rng.pick(pools.scalars);
}

FieldPredicate random_db_predicate(Rng& rng, const DbPools& pools,
                                   std::set<std::string>& used_paths) {
  static const std::vector<CompareOp> ops = {
      CompareOp::Eq,  CompareOp::Eq,  CompareOp::Ne,  CompareOp::Gt,    CompareOp::Gte,
      CompareOp::Lt,  CompareOp::Lte, CompareOp::In,  CompareOp::Nin,   CompareOp::Exists,
  };
  FieldPredicate pred;
  FieldPath path = pool_path(rng, pools);
  int guard = 0;
  while (used_paths.count(path.dotted()) && guard++ < 8) path = pool_path(rng, pools);
  used_paths.insert(path.dotted());
  pred.path = path;
  OpClause clause;
  clause.op = rng.pick(ops);
  if (clause.op == CompareOp::In || clause.op == CompareOp::Nin) {
    Value arr = Value::array();
    std::size_t n = rng.below(3) + 1;
    for (std::size_t i = 0; i < n; ++i) arr.push_back(pool_scalar(rng, pools));
    clause.operand = arr;
  } else if (clause.op == CompareOp::Exists) {
    clause.operand = Value(rng.chance(0.7));
  } else {
    clause.operand = pool_scalar(rng, pools);
  }
  if (rng.chance(0.1)) {
    pred.not_clauses.push_back(clause);
  } else {
    pred.clauses.push_back(clause);
  }
  if (pred.clauses.empty() && pred.not_clauses.empty()) {
    pred.clauses.push_back({CompareOp::Exists, Value(true)});
  }
  return pred;
}

Filter db_filter(Rng& rng, const DbPools& pools) {
  Filter filter;
  std::set<std::string> used_paths;
  bool used_group = false;  // at most one $or / $nor key per filter object
  std::size_t n = rng.below(2) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!used_group && rng.chance(0.15)) {
      used_group = true;
      Filter::Entry entry;
      entry.kind = rng.chance(0.7) ? Filter::Entry::Kind::Or : Filter::Entry::Kind::Nor;
      std::size_t m = rng.below(2) + 1;
      for (std::size_t j = 0; j < m; ++j) {
        Filter sub;
        std::set<std::string> sub_used;
        sub.entries.push_back(
            {Filter::Entry::Kind::Predicate, random_db_predicate(rng, pools, sub_used), {}});
        entry.group.push_back(std::move(sub));
      }
      filter.entries.push_back(std::move(entry));
    } else {
      filter.entries.push_back(
          {Filter::Entry::Kind::Predicate, random_db_predicate(rng, pools, used_paths), {}});
    }
  }
  return filter;
}

ValueExpr db_value_expr(Rng& rng, const DbPools& pools) {
  if (rng.chance(0.75)) return ValueExpr::ref(pool_path(rng, pools));
  return ValueExpr::lit(Value(1));
}

}  // namespace

Filter random_db_filter(Rng& rng, const Database& db) {
  const std::string& collection = db.collections[rng.below(db.collections.size())].first;
  DbPools pools = build_pools(db, collection);
  return db_filter(rng, pools);
}

Query random_oracle_pipeline(Rng& rng, const Database& db, std::size_t max_stages) {
  Query q;
  q.collection = db.collections[rng.below(db.collections.size())].first;
  DbPools pools = build_pools(db, q.collection);
  AggregateQuery agg;
  std::size_t n = rng.below(max_stages + 1);
  for (std::size_t i = 0; i < n; ++i) {
    switch (rng.below(5)) {
      case 0:
        agg.stages.push_back(MatchStage{db_filter(rng, pools)});
        break;
      case 1: {
        std::vector<SortKey> keys;
        std::set<std::string> used;
        std::size_t m = rng.below(2) + 1;
        for (std::size_t j = 0; j < m; ++j) {
          FieldPath path = pool_path(rng, pools);
          if (used.count(path.dotted())) continue;
          used.insert(path.dotted());
          keys.push_back({path, rng.chance(0.5) ? 1 : -1});
        }
        if (keys.empty()) keys.push_back({FieldPath({"name"}), 1});
        agg.stages.push_back(SortStage{std::move(keys)});
        break;
      }
      case 2:
        agg.stages.push_back(LimitStage{rng.int_in(0, 25)});
        break;
      case 3: {
        FieldPath path = pools.array_paths.empty() || rng.chance(0.2)
                             ? pool_path(rng, pools)
                             : FieldPath::from_dotted(rng.pick(pools.array_paths));
        agg.stages.push_back(UnwindStage{path});
        break;
      }
      default: {
        GroupStage group;
        std::size_t roll = rng.below(4);
        if (roll == 0) {
          group.id.expr = ValueExpr::lit(Value(nullptr));
        } else if (roll == 1) {
          group.id.is_doc = true;
          group.id.fields.push_back({"k", db_value_expr(rng, pools)});
          if (rng.chance(0.5)) group.id.fields.push_back({"m", db_value_expr(rng, pools)});
        } else {
          group.id.expr = db_value_expr(rng, pools);
        }
        static const std::vector<AccumulatorOp> acc_ops = {
            AccumulatorOp::Sum,  AccumulatorOp::Avg,      AccumulatorOp::Min,
            AccumulatorOp::Max,  AccumulatorOp::Push,     AccumulatorOp::AddToSet,
            AccumulatorOp::First, AccumulatorOp::Last,
        };
        std::set<std::string> used;
        std::size_t m = rng.below(3);
        for (std::size_t j = 0; j < m; ++j) {
          std::string alias = rng.pick(segment_pool());
          if (alias == "_id" || used.count(alias)) continue;
          used.insert(alias);
          group.accumulators.push_back({alias, rng.pick(acc_ops), db_value_expr(rng, pools)});
        }
        agg.stages.push_back(std::move(group));
        break;
      }
    }
  }
  q.body = std::move(agg);
  return q;
}

std::string random_fuzz_input(Rng& rng) {
  std::size_t mode = rng.below(10);
  if (mode < 3) {
    std::size_t n = rng.below(200);
    std::string s;
    s.reserve(n);
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(rng.below(256)));
    return s;
  }
  if (mode < 5) {
    static const std::vector<std::string> prefixes = {
        "db.c.find(", "db.科目.aggregate([", "db..find({})", "db.c.", "db.c.find({a:",
        "db.c.aggregate([{$match:", "db.c.find({}).sort(", "db.c.find({}).limit(",
    };
    std::string s = rng.pick(prefixes);
    std::size_t n = rng.below(60);
    for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char>(rng.below(256)));
    return s;
  }
  std::string s = serialize_query(random_roundtrip_query(rng));
  std::size_t n_edits = rng.below(8) + 1;
  for (std::size_t i = 0; i < n_edits && !s.empty(); ++i) {
    std::size_t pos = rng.below(s.size());
    switch (rng.below(3)) {
      case 0: s[pos] = static_cast<char>(rng.below(256)); break;
      case 1: s.erase(pos, 1); break;
      default: s.insert(pos, 1, static_cast<char>(rng.below(256))); break;
    }
  }
  return s;
}

namespace {

// parent-before-child ordering for image composition
std::vector<std::string> closed_sorted_paths(const std::set<std::string>& raw) {
  std::set<std::string> closed;
  for (const auto& path : raw) {
    std::string prefix;
    for (std::size_t start = 0;;) {
      std::size_t dot = path.find('.', start);
      prefix = dot == std::string::npos ? path : path.substr(0, dot);
      closed.insert(prefix);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
  }
  std::vector<std::string> out(closed.begin(), closed.end());
  std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
    auto depth = [](const std::string& s) { return std::count(s.begin(), s.end(), '.'); };
    auto da = depth(a), db2 = depth(b);
    return da != db2 ? da < db2 : a < b;
  });
  return out;
}

void collect_group_id_names(const Query& q, std::set<std::string>& out) {
  if (q.is_find()) return;
  for (const auto& stage : q.aggregate().stages) {
    if (const auto* group = std::get_if<GroupStage>(&stage)) {
      if (group->id.is_doc) {
        for (const auto& field : group->id.fields) out.insert(field.name);
      }
    }
  }
}

}  // namespace

FieldTranslationMap make_injective_map(const Database& db, const std::vector<Query>& queries) {
  FieldTranslationMap map;
  map.db_id = db.name;
  map.target_language = "XX";
  std::size_t counter = 0;
  SchemaMap schema = infer_schema(db);

  std::map<std::string, std::set<std::string>> paths_by_collection;
  for (const auto& collection : schema.collections) {
    auto paths = schema_paths(collection);
    paths_by_collection[collection.name].insert(paths.begin(), paths.end());
  }
  for (const auto& q : queries) {
    auto& extras = paths_by_collection[q.collection];
    for (const auto& path : field_inventory(q)) extras.insert(path);
    collect_group_id_names(q, extras);
  }

  for (const auto& [name, docs] : db.collections) {
    map.collections[name] = name + "_x" + std::to_string(counter++);
  }
  for (auto& [collection, paths] : paths_by_collection) {
    if (!map.collections.count(collection)) {
      map.collections[collection] = collection + "_x" + std::to_string(counter++);
    }
    auto& renames = map.fields[collection];
    for (const auto& path : closed_sorted_paths(paths)) {
      if (path == "_id") continue;
      std::size_t dot = path.rfind('.');
      std::string leaf = dot == std::string::npos ? path : path.substr(dot + 1);
      std::string image_leaf = leaf + "_x" + std::to_string(counter++);
      if (dot == std::string::npos) {
        renames[path] = image_leaf;
      } else {
        renames[path] = renames.at(path.substr(0, dot)) + "." + image_leaf;
      }
    }
  }
  return map;
}

TranslationTriple make_translation_triple(Rng& rng) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Database db = random_database(rng, 12);
    for (const auto& [name, docs] : db.collections) {
      for (const auto& doc : docs) {
        for (const auto& [key, value] : doc.items()) {
          if (key == "_id" || value.is_object() || value.is_array() || value.is_null()) continue;
          TranslationTriple triple;
          triple.source = db;
          FindQuery find;
          FieldPredicate pred;
          pred.path = FieldPath({key});
          pred.clauses.push_back({CompareOp::Eq, value});
          find.filter.entries.push_back({Filter::Entry::Kind::Predicate, pred, {}});
          find.projection = Projection{
              {FieldPath({key}), ProjectionEntry::Kind::Include, {}},
              {FieldPath({"_id"}), ProjectionEntry::Kind::Exclude, {}},
          };
          triple.query = Query{name, std::move(find)};
          triple.map = make_injective_map(triple.source, {triple.query});
          triple.corrupt_path = key;
          return triple;
        }
      }
    }
  }
  throw std::logic_error("could not build a translation triple");
}

Query mutate_query(Rng& rng, const Query& q, const Database& db) {
  Query out = q;
  switch (rng.below(6)) {
    case 0: {  // different collection
      out.collection = db.collections[rng.below(db.collections.size())].first;
      break;
    }
    case 1: {  // drop the last stage
      if (auto* agg = std::get_if<AggregateQuery>(&out.body); agg && !agg->stages.empty()) {
        agg->stages.pop_back();
      }
      break;
    }
    case 2: {  // append a limit
      if (auto* agg = std::get_if<AggregateQuery>(&out.body)) {
        agg->stages.push_back(LimitStage{rng.int_in(0, 5)});
      }
      break;
    }
    case 3: {  // flip a sort direction
      if (auto* agg = std::get_if<AggregateQuery>(&out.body)) {
        for (auto& stage : agg->stages) {
          if (auto* sort = std::get_if<SortStage>(&stage); sort && !sort->keys.empty()) {
            sort->keys[0].direction = -sort->keys[0].direction;
            break;
          }
        }
      }
      break;
    }
    case 4: {  // perturb a match literal
      if (auto* agg = std::get_if<AggregateQuery>(&out.body)) {
        for (auto& stage : agg->stages) {
          if (auto* match = std::get_if<MatchStage>(&stage)) {
            for (auto& entry : match->filter.entries) {
              if (entry.kind == Filter::Entry::Kind::Predicate &&
                  !entry.predicate.clauses.empty()) {
                entry.predicate.clauses[0].operand = small_scalar(rng);
                break;
              }
            }
            break;
          }
        }
      }
      break;
    }
    default:
      break;  // unchanged: exercises the all-true row
  }
  return out;
}

}  // namespace multilink::testsupport
