#include <string>

#include "multilink/query.hpp"

namespace multilink {
namespace {

// JSON-style escaping that passes bytes >= 0x80 through untouched, so any
// byte sequence a parsed query carried survives re-serialization.
void write_escaped(std::string& out, std::string_view s) {
  out.push_back('"');
  for (char c : s) {
    unsigned char u = static_cast<unsigned char>(c);
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (u < 0x20) {
          static const char* hex = "0123456789abcdef";
          out += "\\u00";
          out.push_back(hex[u >> 4]);
          out.push_back(hex[u & 0xF]);
        } else {
          out.push_back(c);
        }
    }
  }
  out.push_back('"');
}

bool bare_key_ok(std::string_view key) {
  if (key.empty()) return false;
  char first = key[0];
  bool head_ok = (first >= 'a' && first <= 'z') || (first >= 'A' && first <= 'Z') ||
                 first == '_' || first == '$';
  if (!head_ok) return false;
  for (char c : key) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '$';
    if (!ok) return false;
  }
  return true;
}

void write_key(std::string& out, std::string_view key) {
  if (bare_key_ok(key)) {
    out += key;
  } else {
    write_escaped(out, key);
  }
}

void write_value(std::string& out, const Value& v) {
  if (v.is_string()) {
    write_escaped(out, v.get_ref<const std::string&>());
    return;
  }
  if (v.is_array()) {
    out.push_back('[');
    bool first = true;
    for (const auto& elem : v) {
      if (!first) out.push_back(',');
      first = false;
      write_value(out, elem);
    }
    out.push_back(']');
    return;
  }
  if (v.is_object()) {
    out.push_back('{');
    bool first = true;
    for (const auto& [key, value] : v.items()) {
      if (!first) out.push_back(',');
      first = false;
      write_key(out, key);
      out.push_back(':');
      write_value(out, value);
    }
    out.push_back('}');
    return;
  }
  out += v.dump();  // null, booleans, numbers
}

// Whether an eq operand can be written as a bare `path: literal` without the
// parser re-reading it as an operator object.
bool eq_literal_safe(const Value& operand) {
  if (!operand.is_object() || operand.empty()) return true;
  for (const auto& item : operand.items()) {
    if (!item.key().empty() && item.key()[0] == '$') return false;
  }
  return true;
}

void write_clause_body(std::string& out, const std::vector<OpClause>& clauses) {
  bool first = true;
  for (const auto& clause : clauses) {
    if (!first) out.push_back(',');
    first = false;
    out += compare_op_name(clause.op);
    out.push_back(':');
    write_value(out, clause.operand);
  }
}

void write_filter(std::string& out, const Filter& filter);

void write_predicate(std::string& out, const FieldPredicate& pred) {
  write_key(out, pred.path.dotted());
  out.push_back(':');
  if (pred.not_clauses.empty() && pred.clauses.size() == 1 &&
      pred.clauses[0].op == CompareOp::Eq && eq_literal_safe(pred.clauses[0].operand)) {
    write_value(out, pred.clauses[0].operand);
    return;
  }
  out.push_back('{');
  write_clause_body(out, pred.clauses);
  if (!pred.not_clauses.empty()) {
    if (!pred.clauses.empty()) out.push_back(',');
    out += "$not:{";
    write_clause_body(out, pred.not_clauses);
    out.push_back('}');
  }
  out.push_back('}');
}

void write_filter(std::string& out, const Filter& filter) {
  out.push_back('{');
  bool first = true;
  for (const auto& entry : filter.entries) {
    if (!first) out.push_back(',');
    first = false;
    switch (entry.kind) {
      case Filter::Entry::Kind::Predicate:
        write_predicate(out, entry.predicate);
        break;
      case Filter::Entry::Kind::And:
      case Filter::Entry::Kind::Or:
      case Filter::Entry::Kind::Nor: {
        out += entry.kind == Filter::Entry::Kind::And ? "$and"
             : entry.kind == Filter::Entry::Kind::Or ? "$or"
                                                     : "$nor";
        out += ":[";
        bool inner_first = true;
        for (const auto& sub : entry.group) {
          if (!inner_first) out.push_back(',');
          inner_first = false;
          write_filter(out, sub);
        }
        out.push_back(']');
        break;
      }
    }
  }
  out.push_back('}');
}

void write_projection(std::string& out, const Projection& proj) {
  out.push_back('{');
  bool first = true;
  for (const auto& entry : proj) {
    if (!first) out.push_back(',');
    first = false;
    write_key(out, entry.target.dotted());
    out.push_back(':');
    switch (entry.kind) {
      case ProjectionEntry::Kind::Include: out.push_back('1'); break;
      case ProjectionEntry::Kind::Exclude: out.push_back('0'); break;
      case ProjectionEntry::Kind::Ref:
        write_escaped(out, "$" + entry.source.dotted());
        break;
    }
  }
  out.push_back('}');
}

void write_value_expr(std::string& out, const ValueExpr& expr) {
  if (expr.is_ref) {
    write_escaped(out, "$" + expr.path.dotted());
  } else {
    write_value(out, expr.literal);
  }
}

void write_sort(std::string& out, const std::vector<SortKey>& keys) {
  out.push_back('{');
  bool first = true;
  for (const auto& key : keys) {
    if (!first) out.push_back(',');
    first = false;
    write_key(out, key.path.dotted());
    out += key.direction > 0 ? ":1" : ":-1";
  }
  out.push_back('}');
}

void write_stage(std::string& out, const Stage& stage) {
  out.push_back('{');
  if (const auto* match = std::get_if<MatchStage>(&stage)) {
    out += "$match:";
    write_filter(out, match->filter);
  } else if (const auto* project = std::get_if<ProjectStage>(&stage)) {
    out += "$project:";
    write_projection(out, project->entries);
  } else if (const auto* group = std::get_if<GroupStage>(&stage)) {
    out += "$group:{_id:";
    if (group->id.is_doc) {
      out.push_back('{');
      bool first = true;
      for (const auto& field : group->id.fields) {
        if (!first) out.push_back(',');
        first = false;
        write_key(out, field.name);
        out.push_back(':');
        write_value_expr(out, field.expr);
      }
      out.push_back('}');
    } else {
      write_value_expr(out, group->id.expr);
    }
    for (const auto& acc : group->accumulators) {
      out.push_back(',');
      write_key(out, acc.alias);
      out.push_back(':');
      out.push_back('{');
      out += accumulator_op_name(acc.op);
      out.push_back(':');
      write_value_expr(out, acc.arg);
      out.push_back('}');
    }
    out.push_back('}');
  } else if (const auto* sort = std::get_if<SortStage>(&stage)) {
    out += "$sort:";
    write_sort(out, sort->keys);
  } else if (const auto* limit = std::get_if<LimitStage>(&stage)) {
    out += "$limit:" + std::to_string(limit->n);
  } else if (const auto* skip = std::get_if<SkipStage>(&stage)) {
    out += "$skip:" + std::to_string(skip->n);
  } else if (const auto* unwind = std::get_if<UnwindStage>(&stage)) {
    out += "$unwind:";
    write_escaped(out, "$" + unwind->path.dotted());
  } else if (const auto* lookup = std::get_if<LookupStage>(&stage)) {
    out += "$lookup:{from:";
    write_escaped(out, lookup->from);
    out += ",localField:";
    write_escaped(out, lookup->local_field.dotted());
    out += ",foreignField:";
    write_escaped(out, lookup->foreign_field.dotted());
    out += ",as:";
    write_escaped(out, lookup->as);
    out.push_back('}');
  } else if (const auto* count = std::get_if<CountStage>(&stage)) {
    out += "$count:";
    write_escaped(out, count->alias);
  }
  out.push_back('}');
}

}  // namespace

std::string serialize_query(const Query& q) {
  std::string out = "db.";
  out += q.collection;
  if (q.is_find()) {
    const FindQuery& find = q.find();
    out += ".find(";
    write_filter(out, find.filter);
    if (find.projection) {
      out.push_back(',');
      write_projection(out, *find.projection);
    }
    out.push_back(')');
    if (find.sort) {
      out += ".sort(";
      write_sort(out, *find.sort);
      out.push_back(')');
    }
    if (find.limit) {
      out += ".limit(" + std::to_string(*find.limit) + ")";
    }
  } else {
    out += ".aggregate([";
    bool first = true;
    for (const auto& stage : q.aggregate().stages) {
      if (!first) out.push_back(',');
      first = false;
      write_stage(out, stage);
    }
    out += "])";
  }
  return out;
}

}  // namespace multilink
