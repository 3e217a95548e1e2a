#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "multilink/errors.hpp"
#include "multilink/query.hpp"
#include "multilink/value.hpp"

namespace multilink {

struct IoError : Error {
  using Error::Error;
};

struct FormatError : Error {
  std::string file;
  std::size_t position = 0;
  FormatError(std::string file_, std::size_t position_, const std::string& message)
      : Error(file_ + ": " + message), file(std::move(file_)), position(position_) {}
};

struct ExecError : Error {
  using Error::Error;
};

struct UnknownCollection : ExecError {
  std::string collection;
  explicit UnknownCollection(std::string collection_)
      : ExecError("unknown collection \"" + collection_ + "\""),
        collection(std::move(collection_)) {}
};

/// In-process document database. Collections keep their load order and
/// documents keep source-file order; the executor never mutates either.
struct Database {
  std::string name;
  std::vector<std::pair<std::string, std::vector<Value>>> collections;

  const std::vector<Value>* find_collection(std::string_view name) const;
  std::vector<Value>& add_collection(std::string name);
};

/// Loads a database from either a directory of one UTF-8 JSON array file per
/// collection (collection name = file stem) or a manifest JSON file mapping
/// collection names to files. Duplicate keys inside any source object are a
/// FormatError.
Database load_database(const std::filesystem::path& path);

/// Writes one <collection>.json array file per collection. Loading the dump
/// yields an equal database.
void dump_database(const Database& db, const std::filesystem::path& dir);

struct ResultSet {
  std::vector<Value> docs;
  bool ordered = false;  // true iff a sort was still effective at the end
};

/// Executes a query over the supported stage subset. MongoDB semantics as
/// documented per stage in the implementation; FindQuery runs
/// match -> project -> sort -> limit.
ResultSet execute(const Database& db, const Query& q);

/// Ordered element-wise comparison when either side is ordered, multiset
/// comparison otherwise. Documents compare by key set and deep value equality
/// with integer/float unification and relative float tolerance 1e-9.
bool results_equal(const ResultSet& a, const ResultSet& b);

}  // namespace multilink
