#include "multilink/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace multilink {

// ---- schema-link codec ----

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::string trim_string(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' ||
                        s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return std::string(s);
}

}  // namespace

SchemaLinkResult parse_schema_links(std::string_view text) {
  SchemaLinkResult links;
  std::size_t line_number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    std::string_view line = end == std::string_view::npos ? text.substr(start)
                                                          : text.substr(start, end - start);
    ++line_number;
    line = trim(line);
    if (!line.empty()) {
      if (line[0] != '#') throw LinkFormatError(line_number, "line must start with '#'");
      line.remove_prefix(1);
      std::size_t colon = line.find(':');
      if (colon == std::string_view::npos) {
        throw LinkFormatError(line_number, "missing ':' after collection name");
      }
      std::string collection(trim(line.substr(0, colon)));
      if (collection.empty()) throw LinkFormatError(line_number, "empty collection name");
      std::string_view rest = line.substr(colon + 1);

      std::vector<FieldPath> fields;
      std::size_t field_start = 0;
      while (field_start <= rest.size()) {
        std::size_t comma = rest.find(',', field_start);
        std::string_view field = comma == std::string_view::npos
                                     ? rest.substr(field_start)
                                     : rest.substr(field_start, comma - field_start);
        field = trim(field);
        if (!field.empty()) {
          try {
            fields.push_back(FieldPath::from_dotted(field));
          } catch (const ParseError& e) {
            throw LinkFormatError(line_number, e.what());
          }
        } else if (comma != std::string_view::npos || field_start < rest.size()) {
          throw LinkFormatError(line_number, "empty field name");
        }
        if (comma == std::string_view::npos) break;
        field_start = comma + 1;
      }
      if (fields.empty()) throw LinkFormatError(line_number, "no fields listed");

      auto existing = std::find_if(links.begin(), links.end(), [&](const SchemaLink& link) {
        return link.collection == collection;
      });
      if (existing == links.end()) {
        links.push_back({std::move(collection), std::move(fields)});
      } else {
        for (auto& field : fields) {
          if (std::find(existing->fields.begin(), existing->fields.end(), field) ==
              existing->fields.end()) {
            existing->fields.push_back(std::move(field));
          }
        }
      }
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return links;
}

std::string serialize_schema_links(const SchemaLinkResult& links) {
  std::string out;
  for (const auto& link : links) {
    out += "# " + link.collection + ": ";
    for (std::size_t i = 0; i < link.fields.size(); ++i) {
      if (i) out += ", ";
      out += link.fields[i].dotted();
    }
    out.push_back('\n');
  }
  return out;
}

// ---- configuration ----

PipelineConfig PipelineConfig::from_json(const Value& v) {
  PipelineConfig config;
  if (!v.is_object()) throw Error("pipeline config must be a JSON object");
  if (v.contains("k")) config.retrieval_k = v["k"].get<std::size_t>();
  if (v.contains("threshold")) config.similarity_threshold = v["threshold"].get<double>();
  if (v.contains("temperature")) config.temperature = v["temperature"].get<double>();
  if (v.contains("max_repair_retries")) {
    config.max_repair_retries = v["max_repair_retries"].get<int>();
  }
  if (v.contains("embed_dimension")) config.embed_dimension = v["embed_dimension"].get<std::size_t>();
  if (v.contains("parallelism")) config.parallelism = v["parallelism"].get<int>();
  if (v.contains("prompt_template")) {
    config.prompt_template = v["prompt_template"].get<std::string>();
  }
  if (config.prompt_template != "default.v1") {
    throw Error("unknown prompt template \"" + config.prompt_template + "\"");
  }
  if (v.contains("languages")) {
    config.augment_languages.clear();
    for (const auto& lang : v["languages"]) {
      config.augment_languages.push_back(
          language_from_string(lang.get_ref<const std::string&>()));
    }
  }
  if (config.similarity_threshold < 0.0 || config.similarity_threshold > 1.0) {
    throw Error("threshold must lie in [0, 1]");
  }
  if (config.max_repair_retries < 0) throw Error("max_repair_retries must be >= 0");
  return config;
}

// ---- prompt templates (versioned prompt text lives here) ----

namespace {

constexpr const char* kTranslatorSystem =
    "You translate database questions and schema listings into English.\n"
    "Keep quoted values exactly as they appear; translate everything else.\n"
    "Answer in exactly this format, nothing more:\n"
    "NLQ: <the question in English>\n"
    "SCHEMA:\n"
    "<the schema listing in English, same line structure>";

constexpr const char* kSketchSystem =
    "You draft MongoDB query skeletons. Given an English question and a\n"
    "schema listing, output one MongoDB shell query that captures the right\n"
    "method and stage structure. Use placeholder names like FIELD_1 and\n"
    "\"VALUE_1\" where you are unsure of exact fields or constants. Output\n"
    "only the query.";

constexpr const char* kLinkerSystem =
    "You map a database question to the collections and fields it touches.\n"
    "Answer with one line per collection, exactly in this form:\n"
    "# <collection>: <field>, <field.sub_field>, ...";

constexpr const char* kGeneratorSystem =
    "You are an expert MongoDB engineer. Convert the user's question into a\n"
    "single MongoDB shell query (db.<collection>.find(...) or\n"
    "db.<collection>.aggregate([...])). Reason step by step, then give the\n"
    "final query in a fenced code block.";

constexpr const char* kAugmenterSystem =
    "You invent new MongoDB query examples for a given database. Work through\n"
    "these steps:\n"
    "(1) analyze the structural relationships between the collections and\n"
    "    fields in the schema;\n"
    "(2) identify the logical relationships between fields and collections\n"
    "    that the example question and query rely on;\n"
    "(3) write new MongoDB queries whose intents are completely different\n"
    "    from the example;\n"
    "(4) write a natural-language question matching each new query, plus\n"
    "    paraphrased variants;\n"
    "(5) translate each question into German, French, Russian, Japanese, and\n"
    "    Mandarin Chinese.\n"
    "Answer with a fenced JSON array; each element is\n"
    "{\"query\": \"db....\", \"nlq\": {\"EN\": [..], \"DE\": [..], \"FR\": [..],"
    " \"RU\": [..], \"JA\": [..], \"ZH\": [..]}}.";

}  // namespace

// ---- steps ----

namespace {

std::string call_provider(ChatProvider& provider, const std::string& role,
                          const std::string& system, const std::string& user, double temperature,
                          std::vector<ProviderCall>& transcript) {
  ProviderCall call;
  call.role = role;
  call.system = system;
  call.user = user;
  call.temperature = temperature;
  auto start = std::chrono::steady_clock::now();
  try {
    call.response = provider.complete({role, system, user, temperature});
  } catch (const ProviderError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProviderError(role, e.what());
  }
  call.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
          .count();
  transcript.push_back(call);
  return call.response;
}

ChatProvider& require_provider(ChatProvider* provider, const char* role) {
  if (!provider) throw ProviderError(role, "no provider configured");
  return *provider;
}

}  // namespace

TranslatedInputs translate_inputs(const std::string& nlq, Language language,
                                  const std::string& schema_text, ChatProvider& translator,
                                  const PipelineConfig& config,
                                  std::vector<ProviderCall>& transcript) {
  if (language == Language::EN) return {nlq, schema_text};
  std::string user = "NLQ: " + nlq + "\nSCHEMA:\n" + schema_text;
  std::string response =
      call_provider(translator, "translator", kTranslatorSystem, user, config.temperature,
                    transcript);
  std::size_t nlq_pos = response.find("NLQ:");
  std::size_t schema_pos = response.find("SCHEMA:");
  if (nlq_pos == std::string::npos || schema_pos == std::string::npos || schema_pos < nlq_pos) {
    throw ProviderError("translator", "malformed translation response");
  }
  std::size_t nlq_end = response.find('\n', nlq_pos);
  if (nlq_end == std::string::npos || nlq_end > schema_pos) nlq_end = schema_pos;
  TranslatedInputs out;
  out.nlq_en = trim_string(response.substr(nlq_pos + 4, nlq_end - (nlq_pos + 4)));
  std::size_t schema_start = response.find('\n', schema_pos);
  out.schema_en =
      schema_start == std::string::npos ? "" : trim_string(response.substr(schema_start + 1));
  if (out.nlq_en.empty()) throw ProviderError("translator", "empty translated NLQ");
  return out;
}

Query predict_sketch(const std::string& nlq_en, const std::string& schema_en,
                     ChatProvider& sketch_predictor, const PipelineConfig& config,
                     std::vector<ProviderCall>& transcript) {
  std::string user = "## Schema\n" + schema_en + "\n## Question\n" + nlq_en + "\n";
  std::string last_error;
  for (int attempt = 0; attempt <= config.max_repair_retries; ++attempt) {
    std::string prompt = user;
    if (attempt > 0) {
      prompt += "\nYour previous output failed to parse: " + last_error +
                "\nOutput exactly one valid query.\n";
    }
    std::string response = call_provider(sketch_predictor, "sketch", kSketchSystem, prompt,
                                         config.temperature, transcript);
    try {
      return parse_query(extract_query_text(response));
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw SketchUnparseable("sketch did not parse after repair: " + last_error);
}

GenerationPrompt assemble_generation_prompt(const std::string& nlq,
                                            const std::string& schema_text,
                                            const std::string& sketch_text,
                                            const SchemaLinkResult& links,
                                            const std::vector<ScoredExample>& examples) {
  std::string user;
  user += "## Database schema\n";
  user += schema_text.empty() ? "(none)\n" : schema_text;
  user += "\n## Query sketch (structure hint, field names are placeholders)\n";
  user += sketch_text.empty() ? "(none)\n" : sketch_text + "\n";
  user += "\n## Schema links (collections and fields likely involved)\n";
  std::string links_text = serialize_schema_links(links);
  user += links_text.empty() ? "(none)\n" : links_text;
  user += "\n## Examples\n";
  if (examples.empty()) {
    user += "(none)\n";
  } else {
    for (std::size_t i = 0; i < examples.size(); ++i) {
      user += "Example " + std::to_string(i + 1) + ":\nQ: " + examples[i].pair.nlq +
              "\nA: " + examples[i].pair.query_text + "\n";
    }
  }
  user += "\n## Question\n" + nlq + "\n";
  user +=
      "\nReason step by step: identify the target collection, the fields "
      "involved, and the stages or find arguments required. Then output "
      "exactly one MongoDB query in a fenced code block.\n";
  return {kGeneratorSystem, user};
}

namespace {

// content of the last complete ``` fenced block, if any
bool last_fenced_block(const std::string& response, std::string& out) {
  std::vector<std::pair<std::size_t, std::size_t>> fences;
  std::size_t pos = 0;
  while (true) {
    std::size_t open = response.find("```", pos);
    if (open == std::string::npos) break;
    std::size_t body = response.find('\n', open);
    if (body == std::string::npos) break;
    std::size_t close = response.find("```", body);
    if (close == std::string::npos) break;
    fences.push_back({body + 1, close});
    pos = close + 3;
  }
  if (fences.empty()) return false;
  out = trim_string(response.substr(fences.back().first,
                                    fences.back().second - fences.back().first));
  return true;
}

// for structured payloads (JSON batches, link lines): fenced block or all
std::string extract_block_or_all(const std::string& response) {
  std::string block;
  if (last_fenced_block(response, block)) return block;
  return trim_string(response);
}

}  // namespace

std::string extract_query_text(const std::string& response) {
  std::string block;
  if (last_fenced_block(response, block)) return block;
  // last statement starting with "db."
  std::size_t db = response.rfind("db.");
  if (db != std::string::npos) {
    std::size_t end = response.find(';', db);
    std::string candidate = end == std::string::npos ? response.substr(db)
                                                     : response.substr(db, end - db + 1);
    return trim_string(candidate);
  }
  return trim_string(response);
}

PredictionRecord run_item(const DatasetRecord& item, const DbResolver& resolver,
                          const std::map<Language, VectorIndex>& indices,
                          const ProviderSet& providers, const Embedder& embedder,
                          const PipelineConfig& config) {
  PredictionRecord record;
  record.input = item;

  record.classified = classify_language(item.nlq);

  const Database* db = resolver(item.db_id);
  if (!db) throw Error("unresolvable db_id \"" + item.db_id + "\"");
  record.schema_text = render_schema_text(infer_schema(*db));

  TranslatedInputs translated =
      translate_inputs(item.nlq, record.classified,
                       record.schema_text, require_provider(providers.translator, "translator"),
                       config, record.transcript);
  record.nlq_en = translated.nlq_en;
  record.schema_en = translated.schema_en;

  // sketch and links are advisory context; their failures are recorded, not fatal
  try {
    Query sketch = predict_sketch(record.nlq_en, record.schema_en,
                                  require_provider(providers.sketch_predictor, "sketch"), config,
                                  record.transcript);
    record.sketch_text = serialize_query(sketch);
    for (const auto& keyword : stage_signature(sketch)) {
      if (!record.sketch_signature.empty()) record.sketch_signature += " ";
      record.sketch_signature += keyword;
    }
  } catch (const SketchUnparseable& e) {
    record.error = e.what();
  }

  SchemaLinkResult links;
  {
    std::string user = "## Schema\n" + record.schema_text + "\n## Question\n" + item.nlq + "\n";
    std::string response =
        call_provider(require_provider(providers.schema_linker, "linker"), "linker",
                      kLinkerSystem, user, config.temperature, record.transcript);
    try {
      links = parse_schema_links(extract_block_or_all(response));
      record.links_text = serialize_schema_links(links);
    } catch (const LinkFormatError& e) {
      if (!record.error.empty()) record.error += "; ";
      record.error += e.what();
    }
  }

  auto index = indices.find(record.classified);
  if (index == indices.end()) {
    throw Error("no vector index for language " + std::string(to_string(record.classified)));
  }
  record.examples =
      retrieve(index->second, item.nlq, embedder, config.retrieval_k,
               config.similarity_threshold);

  GenerationPrompt prompt = assemble_generation_prompt(
      item.nlq, record.schema_text, record.sketch_text, links, record.examples);

  std::string last_error;
  for (int attempt = 0; attempt <= config.max_repair_retries; ++attempt) {
    std::string user = prompt.user;
    if (attempt > 0) {
      user += "\nYour previous output failed to parse: " + last_error +
              "\nOutput exactly one valid query in a fenced code block.\n";
    }
    std::string response =
        call_provider(require_provider(providers.generator, "generator"), "generator",
                      prompt.system, user, config.temperature, record.transcript);
    record.pred_text = extract_query_text(response);
    try {
      Query parsed = parse_query(record.pred_text);
      record.pred_text = serialize_query(parsed);
      return record;
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  if (!record.error.empty()) record.error += "; ";
  record.error += "generation did not parse after repair: " + last_error;
  return record;
}

std::vector<PredictionRecord> run_items(const std::vector<DatasetRecord>& items,
                                        const DbResolver& resolver,
                                        const std::map<Language, VectorIndex>& indices,
                                        const ProviderSet& providers, const Embedder& embedder,
                                        const PipelineConfig& config) {
  std::vector<PredictionRecord> records(items.size());
  const std::int64_t count = static_cast<std::int64_t>(items.size());
#ifdef _OPENMP
  int threads = config.parallelism > 0 ? config.parallelism : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
#endif
  for (std::int64_t i = 0; i < count; ++i) {
    auto idx = static_cast<std::size_t>(i);
    try {
      records[idx] = run_item(items[idx], resolver, indices, providers, embedder, config);
    } catch (const std::exception& e) {
      records[idx].input = items[idx];
      records[idx].error = e.what();
    }
  }
  return records;
}

std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& record : records) {
    Value line = record.input.to_json();
    line["prediction"] = record.pred_text;
    if (!record.error.empty()) line["error"] = record.error;
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

std::string transcripts_to_jsonl(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& call : records[i].transcript) {
      Value line = Value::object();
      line["item"] = i;
      line["role"] = call.role;
      line["system"] = call.system;
      line["user"] = call.user;
      line["temperature"] = call.temperature;
      line["response"] = call.response;
      line["latency_ms"] = call.latency_ms;
      out += line.dump();
      out.push_back('\n');
    }
  }
  return out;
}

// ---- augmentation ----

AugmentResult augment(const std::vector<DatasetRecord>& sources, const DbResolver& resolver,
                      ChatProvider& augmenter, const std::vector<Language>& languages,
                      const PipelineConfig& config) {
  AugmentResult result;

  // canonical gold ASTs per db, for the different-intent check
  std::map<std::string, std::vector<Query>> gold_by_db;
  std::vector<std::string> problems;
  for (const auto& source : sources) {
    try {
      gold_by_db[source.db_id].push_back(parse_query(source.query));
    } catch (const ParseError& e) {
      problems.push_back("source query for db " + source.db_id + " does not parse: " + e.what());
    }
  }
  if (!problems.empty()) throw DatasetError(std::move(problems));

  std::map<std::string, std::vector<Query>> accepted_by_db;
  std::vector<ProviderCall> transcript;
  for (const auto& source : sources) {
    const Database* db = resolver(source.db_id);
    if (!db) {
      result.rejections.push_back({source.db_id, source.query, "unresolvable db_id"});
      continue;
    }
    std::string schema_text = render_schema_text(infer_schema(*db));
    std::string user = "## Schema\n" + schema_text + "\n## Example pair\nQ: " + source.nlq +
                       "\nA: " + source.query + "\n";
    std::string response;
    try {
      response = call_provider(augmenter, "augmenter", kAugmenterSystem, user,
                               config.temperature, transcript);
    } catch (const ProviderError& e) {
      result.rejections.push_back({source.db_id, source.query, e.what()});
      continue;
    }
    Value batch;
    try {
      batch = json_read(extract_block_or_all(response));
      if (!batch.is_array()) throw Error("augmenter response is not a JSON array");
    } catch (const Error& e) {
      result.rejections.push_back({source.db_id, response, e.what()});
      continue;
    }
    for (const auto& candidate : batch) {
      if (!candidate.is_object() || !candidate.contains("query") ||
          !candidate["query"].is_string()) {
        result.rejections.push_back({source.db_id, candidate.dump(), "candidate has no query"});
        continue;
      }
      const std::string& query_text = candidate["query"].get_ref<const std::string&>();
      Query parsed;
      try {
        parsed = parse_query(query_text);
      } catch (const ParseError& e) {
        result.rejections.push_back({source.db_id, query_text, e.what()});
        continue;
      }
      try {
        execute(*db, parsed);
      } catch (const ExecError& e) {
        result.rejections.push_back({source.db_id, query_text, e.what()});
        continue;
      }
      bool duplicate = false;
      for (const auto& gold : gold_by_db[source.db_id]) {
        if (parsed == gold) {
          duplicate = true;
          break;
        }
      }
      for (const auto& prior : accepted_by_db[source.db_id]) {
        if (duplicate) break;
        if (parsed == prior) duplicate = true;
      }
      if (duplicate) {
        result.rejections.push_back({source.db_id, query_text, "duplicate of an existing query"});
        continue;
      }
      accepted_by_db[source.db_id].push_back(parsed);
      std::string canonical = serialize_query(parsed);
      const Value nlqs = candidate.value("nlq", Value::object());
      for (Language lang : languages) {
        std::string tag(to_string(lang));
        if (!nlqs.contains(tag) || !nlqs[tag].is_array()) continue;
        for (const auto& nlq : nlqs[tag]) {
          if (!nlq.is_string()) continue;
          DatasetRecord record;
          record.nlq = nlq.get<std::string>();
          record.language = lang;
          record.db_id = source.db_id;
          record.query = canonical;
          result.accepted.push_back(std::move(record));
        }
      }
    }
  }
  return result;
}

// ---- fine-tuning corpus export ----

namespace {

SchemaLinkResult links_from_query(const Query& q) {
  std::set<std::string> foreign;
  SchemaLinkResult links;
  if (!q.is_find()) {
    for (const auto& stage : q.aggregate().stages) {
      if (const auto* lookup = std::get_if<LookupStage>(&stage)) {
        std::string path = lookup->foreign_field.dotted();
        foreign.insert(path);
        auto existing = std::find_if(links.begin(), links.end(), [&](const SchemaLink& link) {
          return link.collection == lookup->from;
        });
        if (existing == links.end()) {
          links.push_back({lookup->from, {lookup->foreign_field}});
        } else if (std::find(existing->fields.begin(), existing->fields.end(),
                             lookup->foreign_field) == existing->fields.end()) {
          existing->fields.push_back(lookup->foreign_field);
        }
      }
    }
  }
  SchemaLink primary{q.collection, {}};
  for (const auto& path : field_inventory(q)) {
    if (!foreign.count(path)) primary.fields.push_back(FieldPath::from_dotted(path));
  }
  SchemaLinkResult out;
  if (!primary.fields.empty()) out.push_back(std::move(primary));
  for (auto& link : links) out.push_back(std::move(link));
  return out;
}

}  // namespace

void export_finetune_corpora(const std::vector<DatasetRecord>& records,
                             const DbResolver& resolver, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::map<Language, std::string> link_corpora;
  std::string sketch_corpus;
  std::vector<std::string> problems;

  for (const auto& record : records) {
    const Database* db = resolver(record.db_id);
    if (!db) {
      problems.push_back("unresolvable db_id \"" + record.db_id + "\"");
      continue;
    }
    Query gold;
    try {
      gold = parse_query(record.query);
    } catch (const ParseError& e) {
      problems.push_back("gold for db " + record.db_id + " does not parse: " + e.what());
      continue;
    }
    std::string schema_text = render_schema_text(infer_schema(*db));

    if (record.language == Language::EN) {
      Value line = Value::object();
      line["nlq"] = record.nlq;
      line["schema"] = schema_text;
      line["target"] = serialize_query(sketch_of(gold));
      sketch_corpus += line.dump();
      sketch_corpus.push_back('\n');
    }
    SchemaLinkResult links = links_from_query(gold);
    if (!links.empty()) {
      Value line = Value::object();
      line["nlq"] = record.nlq;
      line["schema"] = schema_text;
      line["target"] = serialize_schema_links(links);
      link_corpora[record.language] += line.dump();
      link_corpora[record.language].push_back('\n');
    }
  }
  if (!problems.empty()) throw DatasetError(std::move(problems));

  {
    std::ofstream out(out_dir / "sketch_en.jsonl", std::ios::binary);
    out << sketch_corpus;
  }
  for (const auto& [lang, corpus] : link_corpora) {
    std::string name = "links_" + std::string(to_string(lang)) + ".jsonl";
    std::ofstream out(out_dir / name, std::ios::binary);
    out << corpus;
  }
}

}  // namespace multilink
