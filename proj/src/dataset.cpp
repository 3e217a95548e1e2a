#include "multilink/dataset.hpp"

#include <fstream>
#include <sstream>

namespace multilink {

Value DatasetRecord::to_json() const {
  Value v = Value::object();
  v["nlq"] = nlq;
  v["language"] = std::string(to_string(language));
  v["db_id"] = db_id;
  v["query"] = query;
  if (prediction) v["prediction"] = *prediction;
  return v;
}

DatasetRecord DatasetRecord::from_json(const Value& v) {
  if (!v.is_object()) throw DatasetError("dataset line is not a JSON object");
  for (const char* key : {"nlq", "language", "db_id", "query"}) {
    if (!v.contains(key) || !v[key].is_string()) {
      throw DatasetError(std::string("dataset line missing string field \"") + key + "\"");
    }
  }
  DatasetRecord record;
  record.nlq = v["nlq"].get<std::string>();
  record.language = language_from_string(v["language"].get_ref<const std::string&>());
  record.db_id = v["db_id"].get<std::string>();
  record.query = v["query"].get<std::string>();
  if (v.contains("prediction")) {
    if (!v["prediction"].is_string()) throw DatasetError("\"prediction\" must be a string");
    record.prediction = v["prediction"].get<std::string>();
  }
  return record;
}

std::vector<DatasetRecord> parse_jsonl(std::string_view text) {
  std::vector<DatasetRecord> records;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    std::string_view line = end == std::string_view::npos ? text.substr(start)
                                                          : text.substr(start, end - start);
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      try {
        records.push_back(DatasetRecord::from_json(json_read(line)));
      } catch (const Error& e) {
        throw DatasetError("line " + std::to_string(line_number) + ": " + e.what());
      }
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return records;
}

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_jsonl(buffer.str());
}

std::string to_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const auto& record : records) {
    out += record.to_json().dump();
    out.push_back('\n');
  }
  return out;
}

void write_jsonl(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << to_jsonl(records);
}

}  // namespace multilink
