#pragma once

// Independent per-definition reference evaluator used as the oracle for the
// production executor. It re-derives the documented stage semantics with its
// own path resolution, equality, and ordering code and must never call into
// the doc_engine execution path. Scope: aggregate pipelines over
// {match, sort, limit, unwind, group}.

#include <vector>

#include "multilink/doc_engine.hpp"
#include "multilink/query.hpp"
#include "multilink/value.hpp"

namespace multilink::testsupport {

std::vector<Value> ref_execute(const Database& db, const Query& q);

/// Equality used when comparing engine output against the reference:
/// element-wise, key-set objects, unified numbers, relative tolerance 1e-12.
bool ref_results_match(const std::vector<Value>& expected, const std::vector<Value>& actual);

}  // namespace multilink::testsupport
