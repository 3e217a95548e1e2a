#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "multilink/dataset.hpp"
#include "multilink/doc_engine.hpp"
#include "multilink/language.hpp"
#include "multilink/query.hpp"

namespace multilink {

struct EvalItem {
  std::string nlq;
  Language language = Language::EN;
  std::string db_id;
  std::string gold_text;
  std::string pred_text;

  static EvalItem from_record(const DatasetRecord& record) {
    return {record.nlq, record.language, record.db_id, record.query,
            record.prediction.value_or("")};
  }
};

struct ItemFlags {
  bool em = false, qsm = false, qfc = false, ex = false, efm = false, evm = false;
  std::string pred_error;  // parse/execution failure note, empty when clean
};

struct MetricReport {
  std::size_t n = 0;
  std::vector<ItemFlags> per_item;
  std::size_t n_em = 0, n_qsm = 0, n_qfc = 0, n_ex = 0, n_efm = 0, n_evm = 0;

  double em() const { return ratio(n_em); }
  double qsm() const { return ratio(n_qsm); }
  double qfc() const { return ratio(n_qfc); }
  double ex() const { return ratio(n_ex); }
  double efm() const { return ratio(n_efm); }
  double evm() const { return ratio(n_evm); }

  /// {"n", "em", "qsm", "qfc", "ex", "efm", "evm", "per_item"} in that order,
  /// ratios rounded to four decimals.
  Value to_json() const;

 private:
  double ratio(std::size_t count) const {
    return n == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(n);
  }
};

/// Exact match: canonical ASTs equal, including collection, stages,
/// expressions, and literals (1 and 1.0 unify).
bool exact_match(const Query& pred, const Query& gold);

/// Stage-sequence match: equal stage signatures.
bool stages_match(const Query& pred, const Query& gold);

/// Field coverage: pred's field inventory is a superset of gold's.
bool fields_coverage(const Query& pred, const Query& gold);

struct ExecutionMetrics {
  bool ex = false, efm = false, evm = false;
};

/// The EVM comparator: multisets of per-document value multisets (field names
/// discarded) agree; element-wise when both result sets are ordered.
bool execution_values_match(const ResultSet& a, const ResultSet& b);

/// Runs both queries. ex: results_equal. efm: multisets of per-document
/// top-level key sets agree. evm: multisets of per-document value multisets
/// (keys discarded) agree, compared element-wise when both sides are ordered.
/// Any pred execution error yields all-false.
ExecutionMetrics execution_metrics(const Database& db, const Query& pred, const Query& gold);

using DbResolver = std::function<const Database*(const std::string&)>;

/// Scores every item; unparseable predictions score all-false. Validation
/// problems with the dataset itself (unresolvable db, unparseable or
/// non-executing gold) raise DatasetError listing every offending item.
/// Scoring runs in parallel (OpenMP); the report is aggregated by counting,
/// so it is identical regardless of scheduling.
MetricReport evaluate(const DbResolver& resolver, const std::vector<EvalItem>& items);

/// Plain serial loop kept as the reference for the parallel path.
MetricReport evaluate_serial(const DbResolver& resolver, const std::vector<EvalItem>& items);

}  // namespace multilink
