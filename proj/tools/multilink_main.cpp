#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "multilink/dataset.hpp"
#include "multilink/doc_engine.hpp"
#include "multilink/metrics.hpp"
#include "multilink/pipeline.hpp"
#include "multilink/query.hpp"
#include "multilink/retrieval.hpp"
#include "multilink/schema_tools.hpp"

namespace fs = std::filesystem;
using namespace multilink;

namespace {

std::string read_text(const std::string& path) {
  if (path == "-") {
    std::ostringstream buffer;
    buffer << std::cin.rdbuf();
    return buffer.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

Value read_json_file(const std::string& path) { return json_read(read_text(path), path); }

/// Databases live under a root directory, one subdirectory (or .json
/// manifest) per db_id. Everything is preloaded so the resolver is a pure
/// lookup, safe for concurrent use.
class DbStore {
 public:
  explicit DbStore(fs::path root) : root_(std::move(root)) {}

  void preload(const std::vector<DatasetRecord>& records) {
    for (const auto& record : records) load(record.db_id);
  }

  const Database* load(const std::string& db_id) {
    auto it = cache_.find(db_id);
    if (it != cache_.end()) return &it->second;
    fs::path dir = root_ / db_id;
    fs::path manifest = root_ / (db_id + ".json");
    fs::path source;
    if (fs::is_directory(dir)) {
      source = dir;
    } else if (fs::is_regular_file(manifest)) {
      source = manifest;
    } else {
      throw Error("no database for db_id \"" + db_id + "\" under " + root_.string());
    }
    auto [pos, inserted] = cache_.emplace(db_id, load_database(source));
    return &pos->second;
  }

  DbResolver resolver() {
    return [this](const std::string& db_id) -> const Database* {
      auto it = cache_.find(db_id);
      return it == cache_.end() ? nullptr : &it->second;
    };
  }

 private:
  fs::path root_;
  std::map<std::string, Database> cache_;
};

std::unique_ptr<ChatProvider> make_provider(const Value& spec, const fs::path& base_dir) {
  if (!spec.is_object() || !spec.contains("kind")) {
    throw Error("provider spec needs a \"kind\"");
  }
  const std::string kind = spec["kind"].get<std::string>();
  if (kind == "scripted") {
    fs::path script = spec.at("script").get<std::string>();
    if (script.is_relative()) script = base_dir / script;
    return std::make_unique<ScriptedChatProvider>(ScriptedChatProvider::from_file(script));
  }
  if (kind == "http") {
    HttpChatProvider::Options options;
    options.base_url = spec.at("base_url").get<std::string>();
    options.model = spec.value("model", "");
    options.path = spec.value("path", options.path);
    options.api_key_env = spec.value("api_key_env", options.api_key_env);
    return std::make_unique<HttpChatProvider>(options);
  }
  throw Error("unknown provider kind \"" + kind + "\"");
}

struct LoadedProviders {
  std::vector<std::unique_ptr<ChatProvider>> owned;
  ProviderSet set;
};

LoadedProviders load_providers(const Value& config, const fs::path& base_dir) {
  LoadedProviders loaded;
  if (!config.contains("providers")) return loaded;
  const Value& specs = config["providers"];
  auto build = [&](const char* role) -> ChatProvider* {
    const Value* spec = nullptr;
    if (specs.contains(role)) {
      spec = &specs[role];
    } else if (specs.contains("default")) {
      spec = &specs["default"];
    }
    if (!spec) return nullptr;
    loaded.owned.push_back(make_provider(*spec, base_dir));
    return loaded.owned.back().get();
  };
  loaded.set.translator = build("translator");
  loaded.set.sketch_predictor = build("sketch");
  loaded.set.schema_linker = build("linker");
  loaded.set.generator = build("generator");
  loaded.set.augmenter = build("augmenter");
  return loaded;
}

std::map<Language, VectorIndex> load_indices(const fs::path& dir) {
  std::map<Language, VectorIndex> indices;
  for (Language lang : kAllLanguages) {
    fs::path file = dir / ("index_" + std::string(to_string(lang)) + ".json");
    if (fs::is_regular_file(file)) indices[lang] = load_index(file);
  }
  if (indices.empty()) throw Error("no index_<LANG>.json files under " + dir.string());
  return indices;
}

std::vector<EvalItem> to_eval_items(const std::vector<DatasetRecord>& records) {
  std::vector<EvalItem> items;
  items.reserve(records.size());
  for (const auto& record : records) items.push_back(EvalItem::from_record(record));
  return items;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"multilingual text-to-NoSQL toolkit"};
  app.require_subcommand(1);

  // parse
  auto* cmd_parse = app.add_subcommand("parse", "parse a query file and echo the canonical form");
  std::string parse_file;
  cmd_parse->add_option("file", parse_file, "query file ('-' for stdin)")->required();

  // exec
  auto* cmd_exec = app.add_subcommand("exec", "execute a query against a database directory");
  std::string exec_db, exec_query;
  cmd_exec->add_option("--db", exec_db, "database directory or manifest")->required();
  cmd_exec->add_option("query", exec_query, "query text")->required();

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "score predictions against gold queries");
  std::string eval_dbs, eval_data, eval_out;
  int eval_parallel = 0;
  cmd_eval->add_option("--dbs", eval_dbs, "root directory of databases")->required();
  cmd_eval->add_option("--data", eval_data, "JSONL with gold queries and predictions")->required();
  cmd_eval->add_option("--out", eval_out, "write the report JSON here as well");
  cmd_eval->add_option("--parallel", eval_parallel, "worker threads (0 = library default)");

  // schema
  auto* cmd_schema = app.add_subcommand("schema", "print the inferred schema of a database");
  std::string schema_db;
  cmd_schema->add_option("--db", schema_db, "database directory or manifest")->required();

  // map-apply
  auto* cmd_map_apply = app.add_subcommand("map-apply", "rewrite a database with a field map");
  std::string ma_map, ma_db, ma_out;
  cmd_map_apply->add_option("--map", ma_map, "field translation map JSON")->required();
  cmd_map_apply->add_option("--db", ma_db, "source database directory or manifest")->required();
  cmd_map_apply->add_option("--out", ma_out, "output directory")->required();

  // map-check
  auto* cmd_map_check = app.add_subcommand("map-check", "report field-map collisions (exit 2 if any)");
  std::string mc_map, mc_db;
  cmd_map_check->add_option("--map", mc_map, "field translation map JSON")->required();
  cmd_map_check->add_option("--db", mc_db, "database directory or manifest")->required();

  // split
  auto* cmd_split = app.add_subcommand("split", "cross-domain train/test split by db_id");
  std::string split_data, split_train = "train.jsonl", split_test = "test.jsonl";
  double split_ratio = 0.85;
  std::uint64_t split_seed = 0;
  cmd_split->add_option("--data", split_data, "dataset JSONL")->required();
  cmd_split->add_option("--ratio", split_ratio, "train share of databases (default 0.85)");
  cmd_split->add_option("--seed", split_seed, "shuffle seed")->required();
  cmd_split->add_option("--train-out", split_train, "train output path");
  cmd_split->add_option("--test-out", split_test, "test output path");

  // index-build
  auto* cmd_index = app.add_subcommand("index-build", "build per-language vector libraries");
  std::string ib_data, ib_out;
  std::size_t ib_dim = 256;
  cmd_index->add_option("--data", ib_data, "training pairs JSONL")->required();
  cmd_index->add_option("--out", ib_out, "output directory")->required();
  cmd_index->add_option("--dimension", ib_dim, "embedding dimension (default 256)");

  // retrieve
  auto* cmd_retrieve = app.add_subcommand("retrieve", "top-k similar examples for a text");
  std::string rt_index, rt_text;
  std::size_t rt_k = 6;
  double rt_threshold = 0.5;
  cmd_retrieve->add_option("--index", rt_index, "index directory")->required();
  cmd_retrieve->add_option("--text", rt_text, "probe text")->required();
  cmd_retrieve->add_option("-k,--k", rt_k, "retrieval count (default 6)");
  cmd_retrieve->add_option("--threshold", rt_threshold, "similarity threshold (default 0.5)");

  // run
  auto* cmd_run = app.add_subcommand("run", "run the generation pipeline over a dataset");
  std::string run_config, run_data, run_out, run_transcripts, run_artifacts;
  int run_parallel = 0;
  cmd_run->add_option("--config", run_config, "pipeline config JSON")->required();
  cmd_run->add_option("--data", run_data, "dataset JSONL")->required();
  cmd_run->add_option("--out", run_out, "predictions JSONL output")->required();
  cmd_run->add_option("--transcripts", run_transcripts, "provider transcript JSONL output");
  cmd_run->add_option("--artifacts", run_artifacts, "full per-item artifact JSONL output");
  cmd_run->add_option("--parallel", run_parallel, "worker threads (overrides the config)");

  // augment
  auto* cmd_augment = app.add_subcommand("augment", "synthesize new (NLQ, query) pairs");
  std::string aug_config, aug_data, aug_out;
  cmd_augment->add_option("--config", aug_config, "pipeline config JSON")->required();
  cmd_augment->add_option("--data", aug_data, "source pairs JSONL")->required();
  cmd_augment->add_option("--out", aug_out, "accepted pairs JSONL output")->required();

  // export-finetune
  auto* cmd_export = app.add_subcommand("export-finetune", "write sketch/link fine-tuning corpora");
  std::string ef_dbs, ef_data, ef_out;
  cmd_export->add_option("--dbs", ef_dbs, "root directory of databases")->required();
  cmd_export->add_option("--data", ef_data, "dataset JSONL")->required();
  cmd_export->add_option("--out", ef_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (cmd_parse->parsed()) {
    Query q = parse_query(read_text(parse_file));
    std::cout << serialize_query(q) << "\n";
    return 0;
  }

  if (cmd_exec->parsed()) {
    Database db = load_database(exec_db);
    ResultSet results = execute(db, parse_query(exec_query));
    Value out = Value::array();
    for (const auto& doc : results.docs) out.push_back(doc);
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (cmd_eval->parsed()) {
    auto records = read_jsonl(eval_data);
    DbStore store{fs::path(eval_dbs)};
    store.preload(records);
#ifdef _OPENMP
    if (eval_parallel > 0) omp_set_num_threads(eval_parallel);
#endif
    MetricReport report = evaluate(store.resolver(), to_eval_items(records));
    std::string text = report.to_json().dump(2) + "\n";
    std::cout << text;
    if (!eval_out.empty()) write_text(eval_out, text);
    return 0;
  }

  if (cmd_schema->parsed()) {
    Database db = load_database(schema_db);
    std::cout << schema_to_json(infer_schema(db)).dump(2) << "\n";
    return 0;
  }

  if (cmd_map_apply->parsed()) {
    Database db = load_database(ma_db);
    auto map = FieldTranslationMap::from_json(read_json_file(ma_map));
    dump_database(apply_map(db, map), ma_out);
    std::cerr << "wrote " << db.collections.size() << " collections to " << ma_out << "\n";
    return 0;
  }

  if (cmd_map_check->parsed()) {
    Database db = load_database(mc_db);
    auto map = FieldTranslationMap::from_json(read_json_file(mc_map));
    auto warnings = detect_collisions(infer_schema(db), map);
    for (const auto& warning : warnings) std::cout << warning.message() << "\n";
    std::cerr << warnings.size() << " collision(s)\n";
    return warnings.empty() ? 0 : 2;
  }

  if (cmd_split->parsed()) {
    auto records = read_jsonl(split_data);
    auto [train, test] = split_dataset(records, split_ratio, split_seed);
    write_jsonl(train, split_train);
    write_jsonl(test, split_test);
    auto count_dbs = [](const std::vector<DatasetRecord>& rs) {
      std::set<std::string> ids;
      for (const auto& r : rs) ids.insert(r.db_id);
      return ids.size();
    };
    std::cerr << "train_dbs=" << count_dbs(train) << " test_dbs=" << count_dbs(test)
              << " train_items=" << train.size() << " test_items=" << test.size() << "\n";
    return 0;
  }

  if (cmd_index->parsed()) {
    auto records = read_jsonl(ib_data);
    std::vector<std::string> problems;
    std::vector<ExamplePair> pairs;
    for (std::size_t i = 0; i < records.size(); ++i) {
      try {
        parse_query(records[i].query);
      } catch (const ParseError& e) {
        problems.push_back("line " + std::to_string(i + 1) + ": " + e.what());
        continue;
      }
      pairs.push_back({records[i].nlq, records[i].query, records[i].language, records[i].db_id});
    }
    if (!problems.empty()) throw DatasetError(std::move(problems));
    auto indices = build_index(pairs, hashing_embedder(ib_dim));
    fs::create_directories(ib_out);
    for (const auto& [lang, index] : indices) {
      save_index(index, fs::path(ib_out) / ("index_" + std::string(to_string(lang)) + ".json"));
    }
    std::cerr << "built " << indices.size() << " language indices\n";
    return 0;
  }

  if (cmd_retrieve->parsed()) {
    Language lang = classify_language(rt_text);
    fs::path file = fs::path(rt_index) / ("index_" + std::string(to_string(lang)) + ".json");
    VectorIndex index = load_index(file);
    auto hits = retrieve(index, rt_text, hashing_embedder(index.dimension), rt_k, rt_threshold);
    Value out = Value::array();
    for (const auto& hit : hits) {
      Value entry = Value::object();
      entry["similarity"] = hit.similarity;
      entry["nlq"] = hit.pair.nlq;
      entry["query"] = hit.pair.query_text;
      entry["db_id"] = hit.pair.db_id;
      out.push_back(std::move(entry));
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (cmd_run->parsed()) {
    Value config_json = read_json_file(run_config);
    PipelineConfig config = PipelineConfig::from_json(config_json);
    if (!config_json.contains("dbs") || !config_json.contains("indices")) {
      throw Error("run config needs \"dbs\" and \"indices\" paths");
    }
    fs::path config_dir = fs::path(run_config).parent_path();
    auto resolve_path = [&](const std::string& p) {
      fs::path path(p);
      return path.is_relative() ? config_dir / path : path;
    };
    if (run_parallel > 0) config.parallelism = run_parallel;
    auto records = read_jsonl(run_data);
    DbStore store{resolve_path(config_json["dbs"].get<std::string>())};
    store.preload(records);
    auto indices = load_indices(resolve_path(config_json["indices"].get<std::string>()));
    LoadedProviders providers = load_providers(config_json, config_dir);
    auto outputs = run_items(records, store.resolver(), indices, providers.set,
                             hashing_embedder(config.embed_dimension), config);
    write_text(run_out, predictions_to_jsonl(outputs));
    if (!run_transcripts.empty()) write_text(run_transcripts, transcripts_to_jsonl(outputs));
    if (!run_artifacts.empty()) {
      std::string artifacts;
      for (const auto& record : outputs) {
        Value line = record.input.to_json();
        line["prediction"] = record.pred_text;
        line["classified"] = std::string(to_string(record.classified));
        line["nlq_en"] = record.nlq_en;
        line["schema"] = record.schema_text;
        line["sketch"] = record.sketch_text;
        line["sketch_signature"] = record.sketch_signature;
        line["links"] = record.links_text;
        Value examples = Value::array();
        for (const auto& hit : record.examples) {
          Value e = Value::object();
          e["similarity"] = hit.similarity;
          e["nlq"] = hit.pair.nlq;
          e["query"] = hit.pair.query_text;
          examples.push_back(std::move(e));
        }
        line["examples"] = std::move(examples);
        if (!record.error.empty()) line["error"] = record.error;
        artifacts += line.dump();
        artifacts.push_back('\n');
      }
      write_text(run_artifacts, artifacts);
    }
    std::size_t failed = 0;
    for (const auto& record : outputs) failed += record.error.empty() ? 0 : 1;
    std::cerr << "ran " << outputs.size() << " items, " << failed << " with errors\n";
    return 0;
  }

  if (cmd_augment->parsed()) {
    Value config_json = read_json_file(aug_config);
    PipelineConfig config = PipelineConfig::from_json(config_json);
    if (!config_json.contains("dbs")) throw Error("augment config needs a \"dbs\" path");
    fs::path config_dir = fs::path(aug_config).parent_path();
    fs::path dbs = config_json["dbs"].get<std::string>();
    if (dbs.is_relative()) dbs = config_dir / dbs;
    auto records = read_jsonl(aug_data);
    DbStore store{dbs};
    store.preload(records);
    LoadedProviders providers = load_providers(config_json, config_dir);
    if (!providers.set.augmenter) throw Error("augment config needs an \"augmenter\" provider");
    AugmentResult result = augment(records, store.resolver(), *providers.set.augmenter,
                                   config.augment_languages, config);
    write_jsonl(result.accepted, aug_out);
    for (const auto& rejection : result.rejections) {
      std::cerr << "rejected [" << rejection.db_id << "] " << rejection.reason << ": "
                << rejection.candidate.substr(0, 120) << "\n";
    }
    std::cerr << "accepted " << result.accepted.size() << " records, rejected "
              << result.rejections.size() << " candidates\n";
    return 0;
  }

  if (cmd_export->parsed()) {
    auto records = read_jsonl(ef_data);
    DbStore store{fs::path(ef_dbs)};
    store.preload(records);
    export_finetune_corpora(records, store.resolver(), ef_out);
    std::cerr << "wrote fine-tuning corpora to " << ef_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
