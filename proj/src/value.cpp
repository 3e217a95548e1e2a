#include "multilink/value.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace multilink {

JsonError::JsonError(std::string origin_, std::size_t position_, const std::string& message)
    : Error(origin_.empty() ? message : origin_ + ": " + message),
      origin(std::move(origin_)),
      position(position_) {}

namespace {

// SAX consumer that builds a DOM but fails on duplicate object keys.
class StrictDomBuilder {
 public:
  explicit StrictDomBuilder(const std::string& origin) : origin_(origin) {}

  Value take() { return std::move(root_); }

  bool null() { return emit(Value(nullptr)); }
  bool boolean(bool v) { return emit(Value(v)); }
  bool number_integer(std::int64_t v) { return emit(Value(v)); }
  bool number_unsigned(std::uint64_t v) { return emit(Value(v)); }
  bool number_float(double v, const std::string&) { return emit(Value(v)); }
  bool string(std::string& v) { return emit(Value(v)); }
  bool binary(Value::binary_t& v) { return emit(Value(v)); }

  bool start_object(std::size_t) {
    stack_.push_back(Value::object());
    return true;
  }
  bool key(std::string& k) {
    if (stack_.back().contains(k)) {
      throw JsonError(origin_, 0, "duplicate object key \"" + k + "\"");
    }
    pending_keys_.push_back(k);
    return true;
  }
  bool end_object() { return pop(); }

  bool start_array(std::size_t) {
    stack_.push_back(Value::array());
    return true;
  }
  bool end_array() { return pop(); }

  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& ex) {
    throw JsonError(origin_, position, ex.what());
  }

 private:
  bool emit(Value v) {
    if (stack_.empty()) {
      root_ = std::move(v);
      return true;
    }
    Value& top = stack_.back();
    if (top.is_array()) {
      top.push_back(std::move(v));
    } else {
      top[pending_keys_.back()] = std::move(v);
      pending_keys_.pop_back();
    }
    return true;
  }

  bool pop() {
    Value done = std::move(stack_.back());
    stack_.pop_back();
    return emit(std::move(done));
  }

  const std::string& origin_;
  Value root_;
  std::vector<Value> stack_;
  std::vector<std::string> pending_keys_;
};

int numeric_compare(const Value& a, const Value& b) {
  if (a.is_number_integer() && b.is_number_integer()) {
    auto x = a.get<std::int64_t>();
    auto y = b.get<std::int64_t>();
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  double x = a.get<double>();
  double y = b.get<double>();
  return x < y ? -1 : (x > y ? 1 : 0);
}

bool numbers_equal(const Value& a, const Value& b, double rel_tol) {
  if (a.is_number_integer() && b.is_number_integer()) {
    return a.get<std::int64_t>() == b.get<std::int64_t>();
  }
  double x = a.get<double>();
  double y = b.get<double>();
  if (x == y) return true;
  if (rel_tol <= 0.0) return false;
  double scale = std::max({1.0, std::fabs(x), std::fabs(y)});
  return std::fabs(x - y) <= rel_tol * scale;
}

}  // namespace

Value json_read(std::string_view text, std::string origin) {
  StrictDomBuilder builder(origin);
  Value::sax_parse(text, &builder);
  return builder.take();
}

int type_rank(const Value& v) {
  if (v.is_null()) return 0;
  if (v.is_number()) return 1;
  if (v.is_string()) return 2;
  if (v.is_array()) return 3;
  if (v.is_object()) return 4;
  return 5;  // boolean
}

int canonical_compare(const Value& a, const Value& b) {
  int ra = type_rank(a);
  int rb = type_rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (ra) {
    case 0:
      return 0;
    case 1:
      return numeric_compare(a, b);
    case 2: {
      const auto& x = a.get_ref<const std::string&>();
      const auto& y = b.get_ref<const std::string&>();
      int c = x.compare(y);
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case 3: {
      std::size_t n = std::min(a.size(), b.size());
      for (std::size_t i = 0; i < n; ++i) {
        int c = canonical_compare(a[i], b[i]);
        if (c != 0) return c;
      }
      return a.size() < b.size() ? -1 : (a.size() > b.size() ? 1 : 0);
    }
    case 4: {
      auto ia = a.items().begin();
      auto ib = b.items().begin();
      auto ea = a.items().end();
      auto eb = b.items().end();
      for (; ia != ea && ib != eb; ++ia, ++ib) {
        int c = ia.key().compare(ib.key());
        if (c != 0) return c < 0 ? -1 : 1;
        c = canonical_compare(ia.value(), ib.value());
        if (c != 0) return c;
      }
      return a.size() < b.size() ? -1 : (a.size() > b.size() ? 1 : 0);
    }
    default: {
      bool x = a.get<bool>();
      bool y = b.get<bool>();
      return x == y ? 0 : (x ? 1 : -1);
    }
  }
}

bool values_equal(const Value& a, const Value& b, double rel_tol) {
  if (a.is_number() && b.is_number()) return numbers_equal(a, b, rel_tol);
  if (a.is_number() || b.is_number()) return false;
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!values_equal(a[i], b[i], rel_tol)) return false;
    }
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (const auto& [k, v] : a.items()) {
      if (!b.contains(k)) return false;
      if (!values_equal(v, b.at(k), rel_tol)) return false;
    }
    return true;
  }
  return a == b;
}

}  // namespace multilink
