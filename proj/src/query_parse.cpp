#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <regex>
#include <string>
#include <string_view>

#include "multilink/query.hpp"

namespace multilink {
namespace {

constexpr int kMaxNestingDepth = 192;

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }

// Identifiers cover shell bare words: ASCII letters, digits, '_', '$', and
// every byte >= 0x80 so CJK / kana / Cyrillic / accented names pass through
// byte-exactly without the parser caring about UTF-8 boundaries.
bool is_ident_char(char c) {
  unsigned char u = static_cast<unsigned char>(c);
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || is_ascii_digit(c) || c == '_' ||
         c == '$' || u >= 0x80;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

/// Cursor over the statement text producing relaxed-JSON values: bare or
/// quoted keys, single- or double-quoted strings, trailing commas tolerated.
class ShellReader {
 public:
  explicit ShellReader(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }

  void skip_ws() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  bool eof() const { return pos_ >= text_.size(); }

  char peek() const { return eof() ? '\0' : text_[pos_]; }

  bool try_consume(char c) {
    if (!eof() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c, const char* what) {
    skip_ws();
    if (!try_consume(c)) {
      throw ParseError(pos_, std::string("expected ") + what);
    }
  }

  std::string read_identifier() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  Value read_value(int depth) {
    if (depth > kMaxNestingDepth) throw ParseError(pos_, "value nesting too deep");
    skip_ws();
    if (eof()) throw ParseError(pos_, "unexpected end of input");
    char c = peek();
    if (c == '{') return read_object(depth);
    if (c == '[') return read_array(depth);
    if (c == '"' || c == '\'') return Value(read_string());
    if (c == '-' || is_ascii_digit(c)) return read_number();
    if (is_ident_char(c)) {
      std::size_t start = pos_;
      std::string word = read_identifier();
      if (word == "true") return Value(true);
      if (word == "false") return Value(false);
      if (word == "null") return Value(nullptr);
      skip_ws();
      if (peek() == '(') {
        // constructor call such as ISODate(...) / NumberLong(...)
        throw UnsupportedFeature(start, word);
      }
      throw ParseError(start, "unexpected identifier \"" + word + "\"");
    }
    throw ParseError(pos_, "unexpected character");
  }

  std::string read_string() {
    char quote = text_[pos_];
    ++pos_;
    std::string out;
    while (true) {
      if (eof()) throw ParseError(pos_, "unterminated string");
      char c = text_[pos_];
      if (c == quote) {
        ++pos_;
        return out;
      }
      if (c == '\\') {
        ++pos_;
        if (eof()) throw ParseError(pos_, "unterminated escape");
        char e = text_[pos_];
        ++pos_;
        switch (e) {
          case '"': out.push_back('"'); break;
          case '\'': out.push_back('\''); break;
          case '\\': out.push_back('\\'); break;
          case '/': out.push_back('/'); break;
          case 'b': out.push_back('\b'); break;
          case 'f': out.push_back('\f'); break;
          case 'n': out.push_back('\n'); break;
          case 'r': out.push_back('\r'); break;
          case 't': out.push_back('\t'); break;
          case 'u': {
            std::uint32_t cp = read_hex4();
            if (cp >= 0xD800 && cp <= 0xDBFF) {
              if (pos_ + 1 < text_.size() && text_[pos_] == '\\' && text_[pos_ + 1] == 'u') {
                pos_ += 2;
                std::uint32_t low = read_hex4();
                if (low < 0xDC00 || low > 0xDFFF) {
                  throw ParseError(pos_, "invalid low surrogate");
                }
                cp = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
              } else {
                throw ParseError(pos_, "lone high surrogate");
              }
            } else if (cp >= 0xDC00 && cp <= 0xDFFF) {
              throw ParseError(pos_, "lone low surrogate");
            }
            append_utf8(out, cp);
            break;
          }
          default:
            throw ParseError(pos_ - 1, "invalid escape sequence");
        }
        continue;
      }
      out.push_back(c);
      ++pos_;
    }
  }

 private:
  std::uint32_t read_hex4() {
    if (pos_ + 4 > text_.size()) throw ParseError(pos_, "truncated \\u escape");
    std::uint32_t cp = 0;
    for (int i = 0; i < 4; ++i) {
      char c = text_[pos_ + i];
      cp <<= 4;
      if (c >= '0' && c <= '9') {
        cp |= static_cast<std::uint32_t>(c - '0');
      } else if (c >= 'a' && c <= 'f') {
        cp |= static_cast<std::uint32_t>(c - 'a' + 10);
      } else if (c >= 'A' && c <= 'F') {
        cp |= static_cast<std::uint32_t>(c - 'A' + 10);
      } else {
        throw ParseError(pos_ + i, "invalid \\u escape");
      }
    }
    pos_ += 4;
    return cp;
  }

  Value read_object(int depth) {
    std::size_t start = pos_;
    ++pos_;  // '{'
    Value obj = Value::object();
    skip_ws();
    if (try_consume('}')) return obj;
    while (true) {
      skip_ws();
      std::size_t key_pos = pos_;
      std::string key;
      char c = peek();
      if (c == '"' || c == '\'') {
        key = read_string();
      } else if (is_ident_char(c)) {
        if (is_ascii_digit(c)) throw ParseError(key_pos, "numeric keys must be quoted");
        key = read_identifier();
      } else {
        throw ParseError(key_pos, "expected object key");
      }
      if (obj.contains(key)) {
        throw ParseError(key_pos, "duplicate key \"" + key + "\"");
      }
      expect(':', "':' after object key");
      obj[key] = read_value(depth + 1);
      skip_ws();
      if (try_consume(',')) {
        skip_ws();
        if (try_consume('}')) return obj;
        continue;
      }
      if (try_consume('}')) return obj;
      throw ParseError(pos_, "expected ',' or '}' in object started at offset " +
                                 std::to_string(start));
    }
  }

  Value read_array(int depth) {
    ++pos_;  // '['
    Value arr = Value::array();
    skip_ws();
    if (try_consume(']')) return arr;
    while (true) {
      arr.push_back(read_value(depth + 1));
      skip_ws();
      if (try_consume(',')) {
        skip_ws();
        if (try_consume(']')) return arr;
        continue;
      }
      if (try_consume(']')) return arr;
      throw ParseError(pos_, "expected ',' or ']' in array");
    }
  }

  Value read_number() {
    std::size_t start = pos_;
    if (try_consume('-')) {
      if (eof() || !is_ascii_digit(peek())) throw ParseError(start, "invalid number");
    }
    if (peek() == '0') {
      ++pos_;
      if (!eof() && is_ascii_digit(peek())) throw ParseError(start, "leading zeros not allowed");
    } else if (is_ascii_digit(peek())) {
      while (!eof() && is_ascii_digit(peek())) ++pos_;
    } else {
      throw ParseError(start, "invalid number");
    }
    bool is_float = false;
    if (peek() == '.') {
      is_float = true;
      ++pos_;
      if (eof() || !is_ascii_digit(peek())) throw ParseError(pos_, "digits required after '.'");
      while (!eof() && is_ascii_digit(peek())) ++pos_;
    }
    if (peek() == 'e' || peek() == 'E') {
      is_float = true;
      ++pos_;
      if (peek() == '+' || peek() == '-') ++pos_;
      if (eof() || !is_ascii_digit(peek())) throw ParseError(pos_, "digits required in exponent");
      while (!eof() && is_ascii_digit(peek())) ++pos_;
    }
    std::string_view token = text_.substr(start, pos_ - start);
    if (!is_float) {
      std::int64_t iv = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), iv);
      if (ec == std::errc() && ptr == token.data() + token.size()) return Value(iv);
      // out of int64 range: fall through to float
    }
    double dv = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), dv);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(dv)) {
      throw ParseError(start, "number out of range");
    }
    return Value(dv);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// ---- interpretation of shell values into the typed AST ----

bool all_dollar_keys(const Value& v) {
  for (const auto& item : v.items()) {
    if (item.key().empty() || item.key()[0] != '$') return false;
  }
  return true;
}

bool any_dollar_key(const Value& v) {
  for (const auto& item : v.items()) {
    if (!item.key().empty() && item.key()[0] == '$') return true;
  }
  return false;
}

void validate_regex(const std::string& pattern, std::size_t pos) {
  if (pattern.size() > 512) throw ParseError(pos, "regex pattern too long");
  if (std::count(pattern.begin(), pattern.end(), '(') > 32) {
    throw ParseError(pos, "regex pattern too complex");
  }
  try {
    std::regex probe(pattern, std::regex::ECMAScript);
  } catch (const std::regex_error&) {
    throw ParseError(pos, "invalid regex pattern");
  }
}

OpClause make_clause(const std::string& name, const Value& operand, std::size_t pos) {
  OpClause clause;
  if (name == "$eq") {
    clause.op = CompareOp::Eq;
  } else if (name == "$ne") {
    clause.op = CompareOp::Ne;
  } else if (name == "$gt") {
    clause.op = CompareOp::Gt;
  } else if (name == "$gte") {
    clause.op = CompareOp::Gte;
  } else if (name == "$lt") {
    clause.op = CompareOp::Lt;
  } else if (name == "$lte") {
    clause.op = CompareOp::Lte;
  } else if (name == "$in") {
    clause.op = CompareOp::In;
  } else if (name == "$nin") {
    clause.op = CompareOp::Nin;
  } else if (name == "$exists") {
    clause.op = CompareOp::Exists;
  } else if (name == "$regex") {
    clause.op = CompareOp::Regex;
  } else {
    throw UnsupportedFeature(pos, name);
  }
  if ((clause.op == CompareOp::In || clause.op == CompareOp::Nin) && !operand.is_array()) {
    throw ParseError(pos, name + " requires an array operand");
  }
  if (clause.op == CompareOp::Exists && !operand.is_boolean()) {
    throw ParseError(pos, "$exists requires a boolean operand");
  }
  if (clause.op == CompareOp::Regex) {
    if (!operand.is_string()) throw ParseError(pos, "$regex requires a string pattern");
    validate_regex(operand.get_ref<const std::string&>(), pos);
  }
  clause.operand = operand;
  return clause;
}

Filter interpret_filter(const Value& v, std::size_t pos, int depth = 0);

FieldPredicate interpret_predicate(const std::string& key, const Value& v, std::size_t pos) {
  FieldPredicate pred;
  pred.path = FieldPath::from_dotted(key, pos);
  bool operator_object = v.is_object() && !v.empty() && all_dollar_keys(v);
  if (v.is_object() && !v.empty() && !operator_object && any_dollar_key(v)) {
    throw ParseError(pos, "cannot mix operators and plain keys under \"" + key + "\"");
  }
  if (!operator_object) {
    pred.clauses.push_back({CompareOp::Eq, v});
    return pred;
  }
  for (const auto& item : v.items()) {
    if (item.key() == "$not") {
      const Value& inner = item.value();
      if (!inner.is_object() || inner.empty() || !all_dollar_keys(inner)) {
        throw ParseError(pos, "$not requires an operator object");
      }
      for (const auto& sub : inner.items()) {
        if (sub.key() == "$not") throw ParseError(pos, "nested $not is not allowed");
        pred.not_clauses.push_back(make_clause(sub.key(), sub.value(), pos));
      }
    } else if (item.key() == "$options") {
      throw UnsupportedFeature(pos, "$options");
    } else {
      pred.clauses.push_back(make_clause(item.key(), item.value(), pos));
    }
  }
  return pred;
}

Filter interpret_filter(const Value& v, std::size_t pos, int depth) {
  if (depth > kMaxNestingDepth) throw ParseError(pos, "filter nesting too deep");
  if (!v.is_object()) throw ParseError(pos, "filter must be an object");
  Filter filter;
  for (const auto& item : v.items()) {
    const std::string& key = item.key();
    if (key == "$and" || key == "$or" || key == "$nor") {
      if (!item.value().is_array() || item.value().empty()) {
        throw ParseError(pos, key + " requires a non-empty array");
      }
      Filter::Entry entry;
      entry.kind = key == "$and" ? Filter::Entry::Kind::And
                 : key == "$or" ? Filter::Entry::Kind::Or
                                : Filter::Entry::Kind::Nor;
      for (const auto& sub : item.value()) {
        entry.group.push_back(interpret_filter(sub, pos, depth + 1));
      }
      filter.entries.push_back(std::move(entry));
    } else if (!key.empty() && key[0] == '$') {
      throw UnsupportedFeature(pos, key);
    } else {
      Filter::Entry entry;
      entry.kind = Filter::Entry::Kind::Predicate;
      entry.predicate = interpret_predicate(key, item.value(), pos);
      filter.entries.push_back(std::move(entry));
    }
  }
  return filter;
}

Projection interpret_projection(const Value& v, std::size_t pos) {
  if (!v.is_object()) throw ParseError(pos, "projection must be an object");
  Projection proj;
  bool saw_include = false;
  bool saw_exclude = false;
  for (const auto& item : v.items()) {
    ProjectionEntry entry;
    entry.target = FieldPath::from_dotted(item.key(), pos);
    const Value& val = item.value();
    if (val.is_boolean()) {
      entry.kind = val.get<bool>() ? ProjectionEntry::Kind::Include
                                   : ProjectionEntry::Kind::Exclude;
    } else if (val.is_number()) {
      entry.kind = val.get<double>() != 0.0 ? ProjectionEntry::Kind::Include
                                            : ProjectionEntry::Kind::Exclude;
    } else if (val.is_string()) {
      const auto& s = val.get_ref<const std::string&>();
      if (!s.empty() && s[0] == '$') {
        entry.kind = ProjectionEntry::Kind::Ref;
        entry.source = FieldPath::from_dotted(std::string_view(s).substr(1), pos);
      } else {
        throw UnsupportedFeature(pos, "projection constant");
      }
    } else {
      throw UnsupportedFeature(pos, "projection expression");
    }
    if (!entry.target.is_id()) {
      if (entry.kind == ProjectionEntry::Kind::Exclude) {
        saw_exclude = true;
      } else {
        saw_include = true;
      }
    }
    proj.push_back(std::move(entry));
  }
  if (saw_include && saw_exclude) {
    throw ParseError(pos, "cannot mix inclusion and exclusion in a projection");
  }
  return proj;
}

std::vector<SortKey> interpret_sort(const Value& v, std::size_t pos) {
  if (!v.is_object()) throw ParseError(pos, "sort specification must be an object");
  if (v.empty()) throw ParseError(pos, "empty sort specification");
  std::vector<SortKey> keys;
  for (const auto& item : v.items()) {
    const Value& val = item.value();
    int dir = 0;
    if (val.is_number()) {
      double d = val.get<double>();
      if (d == 1.0) dir = 1;
      if (d == -1.0) dir = -1;
    }
    if (dir == 0) throw ParseError(pos, "sort direction must be 1 or -1");
    keys.push_back({FieldPath::from_dotted(item.key(), pos), dir});
  }
  return keys;
}

ValueExpr interpret_value_expr(const Value& v, std::size_t pos) {
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (!s.empty() && s[0] == '$') {
      return ValueExpr::ref(FieldPath::from_dotted(std::string_view(s).substr(1), pos));
    }
    return ValueExpr::lit(v);
  }
  if (v.is_object()) throw UnsupportedFeature(pos, "expression document");
  if (v.is_array()) {
    for (const auto& elem : v) {
      if (elem.is_object() || elem.is_array()) {
        throw UnsupportedFeature(pos, "expression document");
      }
    }
  }
  return ValueExpr::lit(v);
}

void validate_alias(const std::string& alias, std::size_t pos, const char* what) {
  if (alias.empty()) throw ParseError(pos, std::string(what) + " must not be empty");
  if (alias[0] == '$') throw ParseError(pos, std::string(what) + " must not start with '$'");
  if (alias.find('.') != std::string::npos) {
    throw ParseError(pos, std::string(what) + " must not contain '.'");
  }
}

GroupStage interpret_group(const Value& v, std::size_t pos) {
  if (!v.is_object()) throw ParseError(pos, "$group requires an object");
  if (!v.contains("_id")) throw ParseError(pos, "$group requires an _id key");
  GroupStage group;
  for (const auto& item : v.items()) {
    if (item.key() == "_id") {
      const Value& id = item.value();
      if (id.is_object()) {
        group.id.is_doc = true;
        for (const auto& sub : id.items()) {
          validate_alias(sub.key(), pos, "group id field name");
          group.id.fields.push_back({sub.key(), interpret_value_expr(sub.value(), pos)});
        }
      } else {
        group.id.expr = interpret_value_expr(id, pos);
      }
      continue;
    }
    validate_alias(item.key(), pos, "accumulator alias");
    const Value& spec = item.value();
    if (!spec.is_object() || spec.size() != 1) {
      throw ParseError(pos, "accumulator must be a single {$op: expression} object");
    }
    const auto& acc_item = *spec.items().begin();
    const std::string& op_name = acc_item.key();
    AccumulatorOp op;
    if (op_name == "$sum") {
      op = AccumulatorOp::Sum;
    } else if (op_name == "$avg") {
      op = AccumulatorOp::Avg;
    } else if (op_name == "$min") {
      op = AccumulatorOp::Min;
    } else if (op_name == "$max") {
      op = AccumulatorOp::Max;
    } else if (op_name == "$push") {
      op = AccumulatorOp::Push;
    } else if (op_name == "$addToSet") {
      op = AccumulatorOp::AddToSet;
    } else if (op_name == "$first") {
      op = AccumulatorOp::First;
    } else if (op_name == "$last") {
      op = AccumulatorOp::Last;
    } else {
      throw UnsupportedFeature(pos, op_name);
    }
    group.accumulators.push_back({item.key(), op, interpret_value_expr(acc_item.value(), pos)});
  }
  return group;
}

std::int64_t interpret_count_argument(const Value& v, std::size_t pos, const char* stage) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw ParseError(pos, std::string(stage) + " requires a non-negative integer");
  }
  return v.get<std::int64_t>();
}

Stage interpret_stage(const Value& v, std::size_t pos) {
  if (!v.is_object() || v.size() != 1) {
    throw ParseError(pos, "each pipeline stage must be an object with exactly one key");
  }
  const auto& item = *v.items().begin();
  const std::string& name = item.key();
  const Value& arg = item.value();
  if (name.empty() || name[0] != '$') {
    throw ParseError(pos, "stage name must start with '$'");
  }
  if (name == "$match") {
    return MatchStage{interpret_filter(arg, pos)};
  }
  if (name == "$project") {
    Projection proj = interpret_projection(arg, pos);
    if (proj.empty()) throw ParseError(pos, "$project requires at least one field");
    return ProjectStage{std::move(proj)};
  }
  if (name == "$group") {
    return interpret_group(arg, pos);
  }
  if (name == "$sort") {
    return SortStage{interpret_sort(arg, pos)};
  }
  if (name == "$limit") {
    return LimitStage{interpret_count_argument(arg, pos, "$limit")};
  }
  if (name == "$skip") {
    return SkipStage{interpret_count_argument(arg, pos, "$skip")};
  }
  if (name == "$unwind") {
    if (arg.is_object()) throw UnsupportedFeature(pos, "$unwind options");
    if (!arg.is_string()) throw ParseError(pos, "$unwind requires a \"$path\" string");
    const auto& s = arg.get_ref<const std::string&>();
    if (s.empty() || s[0] != '$') throw ParseError(pos, "$unwind path must start with '$'");
    return UnwindStage{FieldPath::from_dotted(std::string_view(s).substr(1), pos)};
  }
  if (name == "$lookup") {
    if (!arg.is_object()) throw ParseError(pos, "$lookup requires an object");
    LookupStage lookup;
    for (const auto& sub : arg.items()) {
      if (!sub.value().is_string()) {
        throw ParseError(pos, "$lookup." + sub.key() + " must be a string");
      }
      const auto& s = sub.value().get_ref<const std::string&>();
      if (sub.key() == "from") {
        lookup.from = s;
      } else if (sub.key() == "localField") {
        lookup.local_field = FieldPath::from_dotted(s, pos);
      } else if (sub.key() == "foreignField") {
        lookup.foreign_field = FieldPath::from_dotted(s, pos);
      } else if (sub.key() == "as") {
        validate_alias(s, pos, "$lookup.as");
        lookup.as = s;
      } else {
        throw UnsupportedFeature(pos, "$lookup." + sub.key());
      }
    }
    if (lookup.from.empty() || lookup.local_field.segments.empty() ||
        lookup.foreign_field.segments.empty() || lookup.as.empty()) {
      throw ParseError(pos, "$lookup requires from, localField, foreignField, and as");
    }
    return lookup;
  }
  if (name == "$count") {
    if (!arg.is_string()) throw ParseError(pos, "$count requires a string field name");
    validate_alias(arg.get_ref<const std::string&>(), pos, "$count field name");
    return CountStage{arg.get_ref<const std::string&>()};
  }
  throw UnsupportedFeature(pos, name);
}

}  // namespace

FieldPath FieldPath::from_dotted(std::string_view dotted, std::size_t position) {
  if (dotted.empty()) throw ParseError(position, "empty field path");
  FieldPath path;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = dotted.find('.', start);
    std::string_view seg =
        dot == std::string_view::npos ? dotted.substr(start) : dotted.substr(start, dot - start);
    if (seg.empty()) throw ParseError(position, "empty segment in field path");
    path.segments.emplace_back(seg);
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return path;
}

Query parse_query(std::string_view text) {
  ShellReader reader(text);
  reader.skip_ws();
  if (reader.eof()) throw ParseError(0, "empty input");

  std::size_t head_pos = reader.pos();
  std::string head = reader.read_identifier();
  if (head != "db") throw ParseError(head_pos, "statement must start with db.<collection>");
  reader.expect('.', "'.' after db");

  std::size_t coll_pos = reader.pos();
  std::string collection = reader.read_identifier();
  if (collection.empty()) throw ParseError(coll_pos, "expected collection name");
  reader.expect('.', "'.' after collection name");

  std::size_t verb_pos = reader.pos();
  std::string verb = reader.read_identifier();
  reader.expect('(', "'(' after method name");

  Query query;
  query.collection = std::move(collection);

  if (verb == "find") {
    std::vector<Value> args;
    std::vector<std::size_t> arg_pos;
    reader.skip_ws();
    if (!reader.try_consume(')')) {
      while (true) {
        reader.skip_ws();
        arg_pos.push_back(reader.pos());
        args.push_back(reader.read_value(0));
        reader.skip_ws();
        if (reader.try_consume(',')) {
          reader.skip_ws();
          if (reader.try_consume(')')) break;
          continue;
        }
        reader.expect(')', "')' or ',' in argument list");
        break;
      }
    }
    if (args.size() > 2) throw ParseError(verb_pos, "find takes at most two arguments");
    FindQuery find;
    if (!args.empty()) find.filter = interpret_filter(args[0], arg_pos[0]);
    if (args.size() == 2) {
      Projection proj = interpret_projection(args[1], arg_pos[1]);
      if (!proj.empty()) find.projection = std::move(proj);
    }
    while (true) {
      reader.skip_ws();
      if (!reader.try_consume('.')) break;
      std::size_t method_pos = reader.pos();
      std::string method = reader.read_identifier();
      if (method == "sort") {
        if (find.sort) throw ParseError(method_pos, "duplicate .sort()");
        reader.expect('(', "'(' after sort");
        reader.skip_ws();
        std::size_t spec_pos = reader.pos();
        Value spec = reader.read_value(0);
        reader.expect(')', "')' after sort specification");
        find.sort = interpret_sort(spec, spec_pos);
      } else if (method == "limit") {
        if (find.limit) throw ParseError(method_pos, "duplicate .limit()");
        reader.expect('(', "'(' after limit");
        reader.skip_ws();
        std::size_t n_pos = reader.pos();
        Value n = reader.read_value(0);
        reader.expect(')', "')' after limit count");
        find.limit = interpret_count_argument(n, n_pos, ".limit()");
      } else if (method.empty()) {
        throw ParseError(method_pos, "expected method name after '.'");
      } else {
        throw UnsupportedFeature(method_pos, "find chain ." + method);
      }
    }
    query.body = std::move(find);
  } else if (verb == "aggregate") {
    reader.skip_ws();
    std::size_t arg_pos = reader.pos();
    AggregateQuery agg;
    if (!reader.try_consume(')')) {
      Value arg = reader.read_value(0);
      reader.skip_ws();
      reader.try_consume(',');
      reader.expect(')', "')' after pipeline");
      if (!arg.is_array()) throw ParseError(arg_pos, "aggregate requires a pipeline array");
      for (const auto& stage : arg) {
        agg.stages.push_back(interpret_stage(stage, arg_pos));
      }
    }
    reader.skip_ws();
    if (reader.peek() == '.') {
      reader.try_consume('.');
      std::size_t method_pos = reader.pos();
      std::string method = reader.read_identifier();
      throw UnsupportedFeature(method_pos, "aggregate chain ." + method);
    }
    query.body = std::move(agg);
  } else if (verb.empty()) {
    throw ParseError(verb_pos, "expected method name");
  } else {
    throw UnsupportedFeature(verb_pos, verb);
  }

  reader.skip_ws();
  reader.try_consume(';');
  reader.skip_ws();
  if (!reader.eof()) throw ParseError(reader.pos(), "unexpected trailing characters");
  return query;
}

}  // namespace multilink
