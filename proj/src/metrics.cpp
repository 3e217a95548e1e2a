#include "multilink/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace multilink {

namespace {

constexpr double kValueTolerance = 1e-9;

double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

std::vector<std::string> doc_key_set(const Value& doc) {
  std::vector<std::string> keys;
  for (const auto& [key, value] : doc.items()) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

bool key_multisets_equal(const std::vector<Value>& a, const std::vector<Value>& b) {
  if (a.size() != b.size()) return false;
  std::map<std::vector<std::string>, int> counts;
  for (const auto& doc : a) counts[doc_key_set(doc)]++;
  for (const auto& doc : b) {
    auto it = counts.find(doc_key_set(doc));
    if (it == counts.end() || it->second == 0) return false;
    --it->second;
  }
  return true;
}

std::vector<const Value*> doc_values(const Value& doc) {
  std::vector<const Value*> values;
  for (const auto& [key, value] : doc.items()) values.push_back(&value);
  return values;
}

// Value comparison with field names discarded at every nesting level: objects
// match when their member values match as multisets. Keeps value equality
// invariant under field renames, which is the point of the EVM metric.
bool value_shape_equal(const Value& a, const Value& b) {
  if (a.is_object() && b.is_object()) {
    if (a.size() != b.size()) return false;
    auto va = doc_values(a);
    auto vb = doc_values(b);
    std::vector<bool> used(vb.size(), false);
    for (const Value* x : va) {
      bool matched = false;
      for (std::size_t j = 0; j < vb.size(); ++j) {
        if (!used[j] && value_shape_equal(*x, *vb[j])) {
          used[j] = true;
          matched = true;
          break;
        }
      }
      if (!matched) return false;
    }
    return true;
  }
  if (a.is_array() && b.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!value_shape_equal(a[i], b[i])) return false;
    }
    return true;
  }
  return values_equal(a, b, kValueTolerance);
}

bool value_multisets_equal(const Value& a, const Value& b) {
  auto va = doc_values(a);
  auto vb = doc_values(b);
  if (va.size() != vb.size()) return false;
  std::vector<bool> used(vb.size(), false);
  for (const Value* x : va) {
    bool matched = false;
    for (std::size_t j = 0; j < vb.size(); ++j) {
      if (!used[j] && value_shape_equal(*x, *vb[j])) {
        used[j] = true;
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  return true;
}

bool value_multiset_rows_match(const ResultSet& a, const ResultSet& b) {
  if (a.docs.size() != b.docs.size()) return false;
  if (a.ordered && b.ordered) {
    for (std::size_t i = 0; i < a.docs.size(); ++i) {
      if (!value_multisets_equal(a.docs[i], b.docs[i])) return false;
    }
    return true;
  }
  std::vector<bool> used(b.docs.size(), false);
  for (const auto& doc : a.docs) {
    bool matched = false;
    for (std::size_t j = 0; j < b.docs.size(); ++j) {
      if (!used[j] && value_multisets_equal(doc, b.docs[j])) {
        used[j] = true;
        matched = true;
        break;
      }
    }
    if (!matched) return false;
  }
  return true;
}

struct GoldContext {
  const Database* db = nullptr;
  Query query;
  ResultSet results;
};

ItemFlags score_item(const EvalItem& item, const GoldContext& gold) {
  ItemFlags flags;
  Query pred;
  try {
    pred = parse_query(item.pred_text);
  } catch (const ParseError& e) {
    flags.pred_error = e.what();
    return flags;
  }
  flags.em = exact_match(pred, gold.query);
  flags.qsm = stages_match(pred, gold.query);
  flags.qfc = fields_coverage(pred, gold.query);
  try {
    ResultSet pred_results = execute(*gold.db, pred);
    flags.ex = results_equal(pred_results, gold.results);
    flags.efm = key_multisets_equal(pred_results.docs, gold.results.docs);
    flags.evm = execution_values_match(pred_results, gold.results);
  } catch (const ExecError& e) {
    flags.pred_error = e.what();
  }
  return flags;
}

std::vector<GoldContext> validate(const DbResolver& resolver,
                                  const std::vector<EvalItem>& items) {
  std::vector<GoldContext> contexts(items.size());
  std::vector<std::string> problems;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const EvalItem& item = items[i];
    std::string where = "item " + std::to_string(i) + " (db " + item.db_id + ")";
    contexts[i].db = resolver(item.db_id);
    if (!contexts[i].db) {
      problems.push_back(where + ": unresolvable db_id");
      continue;
    }
    try {
      contexts[i].query = parse_query(item.gold_text);
    } catch (const ParseError& e) {
      problems.push_back(where + ": gold does not parse: " + e.what());
      continue;
    }
    try {
      contexts[i].results = execute(*contexts[i].db, contexts[i].query);
    } catch (const ExecError& e) {
      problems.push_back(where + ": gold does not execute: " + e.what());
    }
  }
  if (!problems.empty()) throw DatasetError(std::move(problems));
  return contexts;
}

MetricReport finish(std::vector<ItemFlags> flags) {
  MetricReport report;
  report.n = flags.size();
  report.per_item = std::move(flags);
  for (const auto& f : report.per_item) {
    report.n_em += f.em;
    report.n_qsm += f.qsm;
    report.n_qfc += f.qfc;
    report.n_ex += f.ex;
    report.n_efm += f.efm;
    report.n_evm += f.evm;
  }
  return report;
}

}  // namespace

Value MetricReport::to_json() const {
  Value v = Value::object();
  v["n"] = n;
  v["em"] = round4(em());
  v["qsm"] = round4(qsm());
  v["qfc"] = round4(qfc());
  v["ex"] = round4(ex());
  v["efm"] = round4(efm());
  v["evm"] = round4(evm());
  Value items = Value::array();
  for (std::size_t i = 0; i < per_item.size(); ++i) {
    const ItemFlags& f = per_item[i];
    Value item = Value::object();
    item["i"] = i;
    item["em"] = f.em;
    item["qsm"] = f.qsm;
    item["qfc"] = f.qfc;
    item["ex"] = f.ex;
    item["efm"] = f.efm;
    item["evm"] = f.evm;
    if (!f.pred_error.empty()) item["error"] = f.pred_error;
    items.push_back(std::move(item));
  }
  v["per_item"] = std::move(items);
  return v;
}

bool execution_values_match(const ResultSet& a, const ResultSet& b) {
  return value_multiset_rows_match(a, b);
}

bool exact_match(const Query& pred, const Query& gold) { return pred == gold; }

bool stages_match(const Query& pred, const Query& gold) {
  return stage_signature(pred) == stage_signature(gold);
}

bool fields_coverage(const Query& pred, const Query& gold) {
  std::set<std::string> have = field_inventory(pred);
  for (const auto& needed : field_inventory(gold)) {
    if (!have.count(needed)) return false;
  }
  return true;
}

ExecutionMetrics execution_metrics(const Database& db, const Query& pred, const Query& gold) {
  ResultSet gold_results = execute(db, gold);
  ExecutionMetrics out;
  ResultSet pred_results;
  try {
    pred_results = execute(db, pred);
  } catch (const ExecError&) {
    return out;
  }
  out.ex = results_equal(pred_results, gold_results);
  out.efm = key_multisets_equal(pred_results.docs, gold_results.docs);
  out.evm = execution_values_match(pred_results, gold_results);
  return out;
}

MetricReport evaluate(const DbResolver& resolver, const std::vector<EvalItem>& items) {
  std::vector<GoldContext> contexts = validate(resolver, items);
  std::vector<ItemFlags> flags(items.size());
  const std::int64_t count = static_cast<std::int64_t>(items.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::int64_t i = 0; i < count; ++i) {
    flags[static_cast<std::size_t>(i)] =
        score_item(items[static_cast<std::size_t>(i)], contexts[static_cast<std::size_t>(i)]);
  }
  return finish(std::move(flags));
}

MetricReport evaluate_serial(const DbResolver& resolver, const std::vector<EvalItem>& items) {
  std::vector<GoldContext> contexts = validate(resolver, items);
  std::vector<ItemFlags> flags;
  flags.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    flags.push_back(score_item(items[i], contexts[i]));
  }
  return finish(std::move(flags));
}

}  // namespace multilink
