#include <map>
#include <string>

#include "multilink/query.hpp"

namespace multilink {

std::string FieldPath::dotted() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out.push_back('.');
    out += segments[i];
  }
  return out;
}

std::string_view compare_op_name(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "$eq";
    case CompareOp::Ne: return "$ne";
    case CompareOp::Gt: return "$gt";
    case CompareOp::Gte: return "$gte";
    case CompareOp::Lt: return "$lt";
    case CompareOp::Lte: return "$lte";
    case CompareOp::In: return "$in";
    case CompareOp::Nin: return "$nin";
    case CompareOp::Exists: return "$exists";
    case CompareOp::Regex: return "$regex";
  }
  return "$eq";
}

std::string_view accumulator_op_name(AccumulatorOp op) {
  switch (op) {
    case AccumulatorOp::Sum: return "$sum";
    case AccumulatorOp::Avg: return "$avg";
    case AccumulatorOp::Min: return "$min";
    case AccumulatorOp::Max: return "$max";
    case AccumulatorOp::Push: return "$push";
    case AccumulatorOp::AddToSet: return "$addToSet";
    case AccumulatorOp::First: return "$first";
    case AccumulatorOp::Last: return "$last";
  }
  return "$sum";
}

std::string_view stage_keyword(const Stage& stage) {
  struct Visitor {
    std::string_view operator()(const MatchStage&) const { return "match"; }
    std::string_view operator()(const ProjectStage&) const { return "project"; }
    std::string_view operator()(const GroupStage&) const { return "group"; }
    std::string_view operator()(const SortStage&) const { return "sort"; }
    std::string_view operator()(const LimitStage&) const { return "limit"; }
    std::string_view operator()(const SkipStage&) const { return "skip"; }
    std::string_view operator()(const UnwindStage&) const { return "unwind"; }
    std::string_view operator()(const LookupStage&) const { return "lookup"; }
    std::string_view operator()(const CountStage&) const { return "count"; }
  };
  return std::visit(Visitor{}, stage);
}

std::vector<std::string> stage_signature(const Query& q) {
  std::vector<std::string> sig;
  if (q.is_find()) {
    // The corpus has no stage notion for find; fixed pseudo-stage order.
    sig.emplace_back("find");
    const FindQuery& find = q.find();
    if (find.projection) sig.emplace_back("projection");
    if (find.sort) sig.emplace_back("sort");
    if (find.limit) sig.emplace_back("limit");
    return sig;
  }
  for (const auto& stage : q.aggregate().stages) {
    sig.emplace_back(stage_keyword(stage));
  }
  return sig;
}

namespace {

void inventory_filter(const Filter& filter, std::set<std::string>& out) {
  for (const auto& entry : filter.entries) {
    if (entry.kind == Filter::Entry::Kind::Predicate) {
      out.insert(entry.predicate.path.dotted());
    } else {
      for (const auto& sub : entry.group) inventory_filter(sub, out);
    }
  }
}

void inventory_projection(const Projection& proj, std::set<std::string>& out) {
  for (const auto& entry : proj) {
    if (entry.kind == ProjectionEntry::Kind::Exclude && entry.target.is_id()) {
      continue;  // `_id: 0` suppression is not a field reference
    }
    out.insert(entry.target.dotted());
    if (entry.kind == ProjectionEntry::Kind::Ref) out.insert(entry.source.dotted());
  }
}

void inventory_expr(const ValueExpr& expr, std::set<std::string>& out) {
  if (expr.is_ref) out.insert(expr.path.dotted());
}

}  // namespace

std::set<std::string> field_inventory(const Query& q) {
  std::set<std::string> out;
  if (q.is_find()) {
    const FindQuery& find = q.find();
    inventory_filter(find.filter, out);
    if (find.projection) inventory_projection(*find.projection, out);
    if (find.sort) {
      for (const auto& key : *find.sort) out.insert(key.path.dotted());
    }
    return out;
  }
  for (const auto& stage : q.aggregate().stages) {
    if (const auto* match = std::get_if<MatchStage>(&stage)) {
      inventory_filter(match->filter, out);
    } else if (const auto* project = std::get_if<ProjectStage>(&stage)) {
      inventory_projection(project->entries, out);
    } else if (const auto* group = std::get_if<GroupStage>(&stage)) {
      if (group->id.is_doc) {
        for (const auto& field : group->id.fields) inventory_expr(field.expr, out);
      } else {
        inventory_expr(group->id.expr, out);
      }
      for (const auto& acc : group->accumulators) {
        out.insert(acc.alias);
        inventory_expr(acc.arg, out);
      }
    } else if (const auto* sort = std::get_if<SortStage>(&stage)) {
      for (const auto& key : sort->keys) out.insert(key.path.dotted());
    } else if (const auto* unwind = std::get_if<UnwindStage>(&stage)) {
      out.insert(unwind->path.dotted());
    } else if (const auto* lookup = std::get_if<LookupStage>(&stage)) {
      out.insert(lookup->local_field.dotted());
      out.insert(lookup->foreign_field.dotted());
      out.insert(lookup->as);
    } else if (const auto* count = std::get_if<CountStage>(&stage)) {
      out.insert(count->alias);
    }
  }
  return out;
}

namespace {

/// Placeholder assignment state: first-occurrence numbering in traversal
/// order, repeated paths / equal literals reuse their placeholder.
class Sketcher {
 public:
  FieldPath field(const FieldPath& path) {
    if (path.is_id()) return path;
    return FieldPath({field_name(path.dotted())});
  }

  std::string field_name(const std::string& dotted) {
    auto it = fields_.find(dotted);
    if (it != fields_.end()) return it->second;
    std::string name = "FIELD_" + std::to_string(fields_.size() + 1);
    fields_.emplace(dotted, name);
    return name;
  }

  Value literal(const Value& v) {
    for (const auto& [seen, name] : values_) {
      if (seen == v) return Value(name);
    }
    std::string name = "VALUE_" + std::to_string(values_.size() + 1);
    values_.emplace_back(v, name);
    return Value(name);
  }

  std::string collection(const std::string& name, bool primary) {
    if (primary) return "COLLECTION";
    auto it = collections_.find(name);
    if (it != collections_.end()) return it->second;
    std::string placeholder = "COLLECTION_" + std::to_string(collections_.size() + 2);
    collections_.emplace(name, placeholder);
    return placeholder;
  }

  OpClause clause(const OpClause& in) {
    OpClause out;
    out.op = in.op;
    switch (in.op) {
      case CompareOp::Exists:
        out.operand = in.operand;  // structural flag
        break;
      case CompareOp::In:
      case CompareOp::Nin: {
        Value arr = Value::array();
        for (const auto& elem : in.operand) arr.push_back(literal(elem));
        out.operand = arr;
        break;
      }
      default:
        out.operand = literal(in.operand);
        break;
    }
    return out;
  }

  Filter filter(const Filter& in) {
    Filter out;
    for (const auto& entry : in.entries) {
      Filter::Entry copy;
      copy.kind = entry.kind;
      if (entry.kind == Filter::Entry::Kind::Predicate) {
        copy.predicate.path = field(entry.predicate.path);
        for (const auto& c : entry.predicate.clauses) {
          copy.predicate.clauses.push_back(clause(c));
        }
        for (const auto& c : entry.predicate.not_clauses) {
          copy.predicate.not_clauses.push_back(clause(c));
        }
      } else {
        for (const auto& sub : entry.group) copy.group.push_back(filter(sub));
      }
      out.entries.push_back(std::move(copy));
    }
    return out;
  }

  Projection projection(const Projection& in) {
    Projection out;
    for (const auto& entry : in) {
      ProjectionEntry copy;
      copy.kind = entry.kind;
      copy.target = field(entry.target);
      if (entry.kind == ProjectionEntry::Kind::Ref) copy.source = field(entry.source);
      out.push_back(std::move(copy));
    }
    return out;
  }

  ValueExpr expr(const ValueExpr& in) {
    if (in.is_ref) return ValueExpr::ref(field(in.path));
    if (in.literal.is_null()) return in;  // null group ids stay structural
    return ValueExpr::lit(literal(in.literal));
  }

 private:
  std::map<std::string, std::string> fields_;
  std::vector<std::pair<Value, std::string>> values_;
  std::map<std::string, std::string> collections_;
};

}  // namespace

Query sketch_of(const Query& q) {
  Sketcher sk;
  Query out;
  out.collection = sk.collection(q.collection, true);
  if (q.is_find()) {
    const FindQuery& find = q.find();
    FindQuery copy;
    copy.filter = sk.filter(find.filter);
    if (find.projection) copy.projection = sk.projection(*find.projection);
    if (find.sort) {
      std::vector<SortKey> keys;
      for (const auto& key : *find.sort) keys.push_back({sk.field(key.path), key.direction});
      copy.sort = std::move(keys);
    }
    copy.limit = find.limit;
    out.body = std::move(copy);
    return out;
  }
  AggregateQuery agg;
  for (const auto& stage : q.aggregate().stages) {
    if (const auto* match = std::get_if<MatchStage>(&stage)) {
      agg.stages.push_back(MatchStage{sk.filter(match->filter)});
    } else if (const auto* project = std::get_if<ProjectStage>(&stage)) {
      agg.stages.push_back(ProjectStage{sk.projection(project->entries)});
    } else if (const auto* group = std::get_if<GroupStage>(&stage)) {
      GroupStage copy;
      copy.id.is_doc = group->id.is_doc;
      if (group->id.is_doc) {
        for (const auto& field : group->id.fields) {
          copy.id.fields.push_back({field.name, sk.expr(field.expr)});
        }
      } else {
        copy.id.expr = sk.expr(group->id.expr);
      }
      for (const auto& acc : group->accumulators) {
        copy.accumulators.push_back({sk.field_name(acc.alias), acc.op, sk.expr(acc.arg)});
      }
      agg.stages.push_back(std::move(copy));
    } else if (const auto* sort = std::get_if<SortStage>(&stage)) {
      SortStage copy;
      for (const auto& key : sort->keys) copy.keys.push_back({sk.field(key.path), key.direction});
      agg.stages.push_back(std::move(copy));
    } else if (const auto* limit = std::get_if<LimitStage>(&stage)) {
      agg.stages.push_back(*limit);
    } else if (const auto* skip = std::get_if<SkipStage>(&stage)) {
      agg.stages.push_back(*skip);
    } else if (const auto* unwind = std::get_if<UnwindStage>(&stage)) {
      agg.stages.push_back(UnwindStage{sk.field(unwind->path)});
    } else if (const auto* lookup = std::get_if<LookupStage>(&stage)) {
      LookupStage copy;
      copy.from = sk.collection(lookup->from, lookup->from == q.collection);
      copy.local_field = sk.field(lookup->local_field);
      copy.foreign_field = sk.field(lookup->foreign_field);
      copy.as = sk.field_name(lookup->as);
      agg.stages.push_back(std::move(copy));
    } else if (const auto* count = std::get_if<CountStage>(&stage)) {
      agg.stages.push_back(CountStage{sk.field_name(count->alias)});
    }
  }
  out.body = std::move(agg);
  return out;
}

}  // namespace multilink
