#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "multilink/dataset.hpp"
#include "multilink/doc_engine.hpp"
#include "multilink/metrics.hpp"
#include "multilink/providers.hpp"
#include "multilink/query.hpp"
#include "multilink/retrieval.hpp"
#include "multilink/schema_tools.hpp"

namespace multilink {

// ---- schema-link codec: "# Collection: Field, Field.sub" lines ----

struct SchemaLink {
  std::string collection;
  std::vector<FieldPath> fields;
  bool operator==(const SchemaLink&) const = default;
};
using SchemaLinkResult = std::vector<SchemaLink>;

struct LinkFormatError : Error {
  std::size_t line;
  LinkFormatError(std::size_t line_, const std::string& message)
      : Error("schema links line " + std::to_string(line_) + ": " + message), line(line_) {}
};

/// Parses `# <collection>: <field>[, <field>...]` lines; whitespace is
/// normalized, repeated collections merge their field lists (first
/// occurrence wins the position). Blank lines are skipped.
SchemaLinkResult parse_schema_links(std::string_view text);
std::string serialize_schema_links(const SchemaLinkResult& links);

// ---- configuration ----

struct PipelineConfig {
  std::size_t retrieval_k = 6;
  double similarity_threshold = 0.5;
  double temperature = 0.0;
  int max_repair_retries = 1;
  std::size_t embed_dimension = 256;
  int parallelism = 1;
  std::string prompt_template = "default.v1";
  std::vector<Language> augment_languages{kAllLanguages.begin(), kAllLanguages.end()};

  /// Keys: k, threshold, temperature, max_repair_retries, embed_dimension,
  /// parallelism, prompt_template, languages. Absent keys keep their
  /// defaults; unknown template ids are rejected.
  static PipelineConfig from_json(const Value& v);
};

struct ProviderSet {
  ChatProvider* translator = nullptr;
  ChatProvider* sketch_predictor = nullptr;
  ChatProvider* schema_linker = nullptr;
  ChatProvider* generator = nullptr;
  ChatProvider* augmenter = nullptr;
};

struct ProviderCall {
  std::string role;
  std::string system;
  std::string user;
  double temperature = 0.0;
  std::string response;
  double latency_ms = 0.0;
};

struct SketchUnparseable : Error {
  using Error::Error;
};
struct GenerationUnparseable : Error {
  using Error::Error;
};

// ---- individual steps ----

struct TranslatedInputs {
  std::string nlq_en;
  std::string schema_en;
};

/// English inputs short-circuit with zero provider calls; otherwise one
/// translator call returns both parts ("NLQ: ...\nSCHEMA:\n...").
TranslatedInputs translate_inputs(const std::string& nlq, Language language,
                                  const std::string& schema_text, ChatProvider& translator,
                                  const PipelineConfig& config,
                                  std::vector<ProviderCall>& transcript);

/// One sketch-predictor call; the response must parse as a query. A failing
/// parse triggers one repair re-prompt carrying the parse error; a second
/// failure raises SketchUnparseable.
Query predict_sketch(const std::string& nlq_en, const std::string& schema_en,
                     ChatProvider& sketch_predictor, const PipelineConfig& config,
                     std::vector<ProviderCall>& transcript);

struct GenerationPrompt {
  std::string system;
  std::string user;
};

/// Fixed section order: instructions, schema, sketch, schema links, retrieved
/// examples, the question, step-by-step reasoning instructions. Byte-identical
/// output for identical inputs; empty sections are marked "(none)".
GenerationPrompt assemble_generation_prompt(const std::string& nlq,
                                            const std::string& schema_text,
                                            const std::string& sketch_text,
                                            const SchemaLinkResult& links,
                                            const std::vector<ScoredExample>& examples);

/// Last fenced code block, else the last `db.`-prefixed statement, else the
/// whole trimmed response.
std::string extract_query_text(const std::string& response);

// ---- the per-item loop ----

struct PredictionRecord {
  DatasetRecord input;
  Language classified = Language::EN;
  std::string nlq_en;
  std::string schema_text;
  std::string schema_en;
  std::string sketch_text;       // empty when sketch prediction failed
  std::string sketch_signature;  // space-joined stage keywords, for the run log
  std::string links_text;        // empty when linking failed or returned nothing
  std::vector<ScoredExample> examples;
  std::string pred_text;
  std::string error;  // classification/provider/generation failure note
  std::vector<ProviderCall> transcript;
};

/// LangClassify -> Translate -> SketchPredict -> SchemaLink -> Retrieve ->
/// Generate. Sketch and links are advisory: their failures are recorded and
/// the loop continues. Generation parse failures get one repair re-prompt;
/// if that fails too the item is still emitted with the raw extracted text
/// and the error note.
PredictionRecord run_item(const DatasetRecord& item, const DbResolver& resolver,
                          const std::map<Language, VectorIndex>& indices,
                          const ProviderSet& providers, const Embedder& embedder,
                          const PipelineConfig& config);

/// Runs items concurrently (bounded by config.parallelism); output order is
/// input order. Per-item errors are captured in the records, never thrown.
std::vector<PredictionRecord> run_items(const std::vector<DatasetRecord>& items,
                                        const DbResolver& resolver,
                                        const std::map<Language, VectorIndex>& indices,
                                        const ProviderSet& providers, const Embedder& embedder,
                                        const PipelineConfig& config);

/// Dataset lines with predictions filled in; byte-deterministic.
std::string predictions_to_jsonl(const std::vector<PredictionRecord>& records);

/// One line per provider call: {"item", "role", "system", "user",
/// "temperature", "response", "latency_ms"}.
std::string transcripts_to_jsonl(const std::vector<PredictionRecord>& records);

// ---- intention-aware augmentation ----

struct AugmentRejection {
  std::string db_id;
  std::string candidate;
  std::string reason;
};

struct AugmentResult {
  std::vector<DatasetRecord> accepted;
  std::vector<AugmentRejection> rejections;
};

/// One provider call per source pair walks the five augmentation steps
/// (schema analysis, logical relations, new queries with different intents,
/// NLQ creation with paraphrases, multilingual synthesis) and returns a JSON
/// array of {"query": ..., "nlq": {"EN": [...], ...}} candidates. Every
/// candidate is validated by parse and execution against its database;
/// failures and duplicates of source queries are rejected, never fatal.
AugmentResult augment(const std::vector<DatasetRecord>& sources, const DbResolver& resolver,
                      ChatProvider& augmenter, const std::vector<Language>& languages,
                      const PipelineConfig& config);

/// Writes fine-tuning corpora: sketch_en.jsonl (English NLQ + schema ->
/// serialized gold sketch) and links_<LANG>.jsonl per language (NLQ + schema
/// -> gold schema links derived from the gold query's field inventory).
void export_finetune_corpora(const std::vector<DatasetRecord>& records,
                             const DbResolver& resolver, const std::filesystem::path& out_dir);

}  // namespace multilink
