#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "multilink/errors.hpp"
#include "multilink/language.hpp"
#include "multilink/value.hpp"

namespace multilink {

struct DatasetError : Error {
  std::vector<std::string> problems;
  explicit DatasetError(std::vector<std::string> problems_)
      : Error(problems_.empty() ? "dataset error"
                                : "dataset error: " + problems_[0] +
                                      (problems_.size() > 1
                                           ? " (+" + std::to_string(problems_.size() - 1) +
                                                 " more)"
                                           : "")),
        problems(std::move(problems_)) {}
  explicit DatasetError(std::string problem)
      : DatasetError(std::vector<std::string>{std::move(problem)}) {}
};

/// One JSONL dataset line: {"nlq": ..., "language": ..., "db_id": ...,
/// "query": ..., "prediction": ...?}.
struct DatasetRecord {
  std::string nlq;
  Language language = Language::EN;
  std::string db_id;
  std::string query;  // gold query text
  std::optional<std::string> prediction;

  Value to_json() const;
  static DatasetRecord from_json(const Value& v);
};

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path);
std::vector<DatasetRecord> parse_jsonl(std::string_view text);
std::string to_jsonl(const std::vector<DatasetRecord>& records);
void write_jsonl(const std::vector<DatasetRecord>& records, const std::filesystem::path& path);

}  // namespace multilink
