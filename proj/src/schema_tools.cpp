#include "multilink/schema_tools.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "multilink/metrics.hpp"

namespace multilink {

FieldNode* FieldNode::child(const std::string& name_) {
  for (auto& node : children) {
    if (node.name == name_) return &node;
  }
  return nullptr;
}

const FieldNode* FieldNode::child(const std::string& name_) const {
  for (const auto& node : children) {
    if (node.name == name_) return &node;
  }
  return nullptr;
}

const CollectionSchema* SchemaMap::find(std::string_view name) const {
  for (const auto& collection : collections) {
    if (collection.name == name) return &collection;
  }
  return nullptr;
}

namespace {

std::string kind_of(const Value& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "bool";
  if (v.is_number_integer()) return "int";
  if (v.is_number_float()) return "float";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

FieldNode& ensure_child(std::vector<FieldNode>& nodes, const std::string& name) {
  for (auto& node : nodes) {
    if (node.name == name) return node;
  }
  nodes.push_back(FieldNode{name, {}, {}});
  return nodes.back();
}

void observe_object(std::vector<FieldNode>& nodes, const Value& obj) {
  for (const auto& [key, value] : obj.items()) {
    FieldNode& node = ensure_child(nodes, key);
    node.kinds.insert(kind_of(value));
    if (value.is_object()) {
      observe_object(node.children, value);
    } else if (value.is_array()) {
      for (const auto& elem : value) {
        if (elem.is_object()) observe_object(node.children, elem);
      }
    }
  }
}

void collect_paths(const std::vector<FieldNode>& nodes, const std::string& prefix,
                   std::vector<std::string>& out) {
  for (const auto& node : nodes) {
    std::string path = prefix.empty() ? node.name : prefix + "." + node.name;
    out.push_back(path);
    collect_paths(node.children, path, out);
  }
}

Value nodes_to_json(const std::vector<FieldNode>& nodes) {
  Value arr = Value::array();
  for (const auto& node : nodes) {
    Value v = Value::object();
    v["name"] = node.name;
    Value kinds = Value::array();
    for (const auto& kind : node.kinds) kinds.push_back(kind);
    v["kinds"] = std::move(kinds);
    if (!node.children.empty()) v["fields"] = nodes_to_json(node.children);
    arr.push_back(std::move(v));
  }
  return arr;
}

}  // namespace

SchemaMap infer_schema(const Database& db) {
  SchemaMap schema;
  for (const auto& [name, docs] : db.collections) {
    CollectionSchema collection;
    collection.name = name;
    for (const auto& doc : docs) observe_object(collection.fields, doc);
    schema.collections.push_back(std::move(collection));
  }
  return schema;
}

std::vector<std::string> schema_paths(const CollectionSchema& collection) {
  std::vector<std::string> paths;
  collect_paths(collection.fields, "", paths);
  return paths;
}

Value schema_to_json(const SchemaMap& schema) {
  Value collections = Value::array();
  for (const auto& collection : schema.collections) {
    Value v = Value::object();
    v["name"] = collection.name;
    v["fields"] = nodes_to_json(collection.fields);
    collections.push_back(std::move(v));
  }
  Value out = Value::object();
  out["collections"] = std::move(collections);
  return out;
}

std::string render_schema_text(const SchemaMap& schema) {
  std::string out;
  for (const auto& collection : schema.collections) {
    out += "# " + collection.name + ":";
    bool first = true;
    for (const auto& path : schema_paths(collection)) {
      out += first ? " " : ", ";
      out += path;
      first = false;
    }
    out.push_back('\n');
  }
  return out;
}

// ---- translation maps ----

Value FieldTranslationMap::to_json() const {
  Value v = Value::object();
  v["db_id"] = db_id;
  v["target_language"] = target_language;
  Value cols = Value::object();
  for (const auto& [src, image] : collections) cols[src] = image;
  v["collections"] = std::move(cols);
  Value field_maps = Value::object();
  for (const auto& [collection, renames] : fields) {
    Value entry = Value::object();
    for (const auto& [src, image] : renames) entry[src] = image;
    field_maps[collection] = std::move(entry);
  }
  v["fields"] = std::move(field_maps);
  return v;
}

FieldTranslationMap FieldTranslationMap::from_json(const Value& v) {
  if (!v.is_object() || !v.contains("collections") || !v.contains("fields")) {
    throw Error("translation map must carry \"collections\" and \"fields\" objects");
  }
  FieldTranslationMap m;
  m.db_id = v.value("db_id", "");
  m.target_language = v.value("target_language", "");
  for (const auto& [src, image] : v["collections"].items()) {
    if (!image.is_string()) throw Error("collection image for \"" + src + "\" must be a string");
    m.collections[src] = image.get<std::string>();
  }
  for (const auto& [collection, renames] : v["fields"].items()) {
    if (!renames.is_object()) {
      throw Error("field map for collection \"" + collection + "\" must be an object");
    }
    for (const auto& [src, image] : renames.items()) {
      if (!image.is_string()) {
        throw Error("field image for \"" + src + "\" must be a string");
      }
      FieldPath src_path = FieldPath::from_dotted(src);
      FieldPath image_path = FieldPath::from_dotted(image.get_ref<const std::string&>());
      if (src_path.segments.size() != image_path.segments.size()) {
        throw Error("image of \"" + src + "\" must preserve path depth");
      }
      m.fields[collection][src] = image.get<std::string>();
    }
  }
  return m;
}

const std::string* FieldTranslationMap::image_of(const std::string& collection,
                                                 const std::string& path) const {
  auto per_collection = fields.find(collection);
  if (per_collection == fields.end()) return nullptr;
  auto it = per_collection->second.find(path);
  if (it == per_collection->second.end()) return nullptr;
  return &it->second;
}

namespace {

std::string last_segment(const std::string& dotted) {
  std::size_t dot = dotted.rfind('.');
  return dot == std::string::npos ? dotted : dotted.substr(dot + 1);
}

std::string rename_key(const FieldTranslationMap& m, const std::string& collection,
                       const std::string& full_path, const std::string& key) {
  if (const std::string* image = m.image_of(collection, full_path)) {
    return last_segment(*image);
  }
  if (key == "_id") return key;
  throw UnmappedName("collection \"" + collection + "\"", full_path);
}

Value rename_doc(const FieldTranslationMap& m, const std::string& collection, const Value& node,
                 const std::string& prefix) {
  if (node.is_object()) {
    Value out = Value::object();
    for (const auto& [key, value] : node.items()) {
      std::string full = prefix.empty() ? key : prefix + "." + key;
      out[rename_key(m, collection, full, key)] = rename_doc(m, collection, value, full);
    }
    return out;
  }
  if (node.is_array()) {
    Value out = Value::array();
    for (const auto& elem : node) out.push_back(rename_doc(m, collection, elem, prefix));
    return out;
  }
  return node;  // values stay as-is
}

FieldPath rename_path(const FieldTranslationMap& m, const std::string& collection,
                      const FieldPath& path) {
  std::string dotted = path.dotted();
  if (const std::string* image = m.image_of(collection, dotted)) {
    return FieldPath::from_dotted(*image);
  }
  if (path.is_id()) return path;
  throw UnmappedName("collection \"" + collection + "\"", dotted);
}

std::string rename_alias(const FieldTranslationMap& m, const std::string& collection,
                         const std::string& alias) {
  if (const std::string* image = m.image_of(collection, alias)) return *image;
  if (alias == "_id") return alias;
  throw UnmappedName("collection \"" + collection + "\"", alias);
}

std::string rename_collection(const FieldTranslationMap& m, const std::string& name) {
  auto it = m.collections.find(name);
  if (it == m.collections.end()) throw UnmappedName("collections", name);
  return it->second;
}

Filter rename_filter(const FieldTranslationMap& m, const std::string& collection,
                     const Filter& filter) {
  Filter out;
  for (const auto& entry : filter.entries) {
    Filter::Entry copy;
    copy.kind = entry.kind;
    if (entry.kind == Filter::Entry::Kind::Predicate) {
      copy.predicate = entry.predicate;
      copy.predicate.path = rename_path(m, collection, entry.predicate.path);
    } else {
      for (const auto& sub : entry.group) {
        copy.group.push_back(rename_filter(m, collection, sub));
      }
    }
    out.entries.push_back(std::move(copy));
  }
  return out;
}

Projection rename_projection(const FieldTranslationMap& m, const std::string& collection,
                             const Projection& proj) {
  Projection out;
  for (const auto& entry : proj) {
    ProjectionEntry copy = entry;
    copy.target = rename_path(m, collection, entry.target);
    if (entry.kind == ProjectionEntry::Kind::Ref) {
      copy.source = rename_path(m, collection, entry.source);
    }
    out.push_back(std::move(copy));
  }
  return out;
}

ValueExpr rename_expr(const FieldTranslationMap& m, const std::string& collection,
                      const ValueExpr& expr) {
  if (!expr.is_ref) return expr;
  return ValueExpr::ref(rename_path(m, collection, expr.path));
}

std::vector<SortKey> rename_sort(const FieldTranslationMap& m, const std::string& collection,
                                 const std::vector<SortKey>& keys) {
  std::vector<SortKey> out;
  for (const auto& key : keys) out.push_back({rename_path(m, collection, key.path), key.direction});
  return out;
}

}  // namespace

Database apply_map(const Database& db, const FieldTranslationMap& m) {
  Database out;
  out.name = db.name;
  for (const auto& [name, docs] : db.collections) {
    auto& renamed = out.add_collection(rename_collection(m, name));
    renamed.reserve(docs.size());
    for (const auto& doc : docs) renamed.push_back(rename_doc(m, name, doc, ""));
  }
  return out;
}

Query apply_map_query(const Query& q, const FieldTranslationMap& m) {
  const std::string& src = q.collection;
  Query out;
  out.collection = rename_collection(m, src);
  if (q.is_find()) {
    const FindQuery& find = q.find();
    FindQuery copy;
    copy.filter = rename_filter(m, src, find.filter);
    if (find.projection) copy.projection = rename_projection(m, src, *find.projection);
    if (find.sort) copy.sort = rename_sort(m, src, *find.sort);
    copy.limit = find.limit;
    out.body = std::move(copy);
    return out;
  }
  AggregateQuery agg;
  for (const auto& stage : q.aggregate().stages) {
    if (const auto* match = std::get_if<MatchStage>(&stage)) {
      agg.stages.push_back(MatchStage{rename_filter(m, src, match->filter)});
    } else if (const auto* project = std::get_if<ProjectStage>(&stage)) {
      agg.stages.push_back(ProjectStage{rename_projection(m, src, project->entries)});
    } else if (const auto* group = std::get_if<GroupStage>(&stage)) {
      GroupStage copy;
      copy.id.is_doc = group->id.is_doc;
      if (group->id.is_doc) {
        for (const auto& field : group->id.fields) {
          copy.id.fields.push_back({rename_alias(m, src, field.name),
                                    rename_expr(m, src, field.expr)});
        }
      } else {
        copy.id.expr = rename_expr(m, src, group->id.expr);
      }
      for (const auto& acc : group->accumulators) {
        copy.accumulators.push_back(
            {rename_alias(m, src, acc.alias), acc.op, rename_expr(m, src, acc.arg)});
      }
      agg.stages.push_back(std::move(copy));
    } else if (const auto* sort = std::get_if<SortStage>(&stage)) {
      agg.stages.push_back(SortStage{rename_sort(m, src, sort->keys)});
    } else if (const auto* unwind = std::get_if<UnwindStage>(&stage)) {
      agg.stages.push_back(UnwindStage{rename_path(m, src, unwind->path)});
    } else if (const auto* lookup = std::get_if<LookupStage>(&stage)) {
      LookupStage copy;
      copy.from = rename_collection(m, lookup->from);
      copy.local_field = rename_path(m, src, lookup->local_field);
      copy.foreign_field = rename_path(m, lookup->from, lookup->foreign_field);
      copy.as = rename_alias(m, src, lookup->as);
      agg.stages.push_back(std::move(copy));
    } else if (const auto* count = std::get_if<CountStage>(&stage)) {
      agg.stages.push_back(CountStage{rename_alias(m, src, count->alias)});
    } else {
      agg.stages.push_back(stage);
    }
  }
  out.body = std::move(agg);
  return out;
}

bool verify_translation(const Database& db_source, const Query& q_source,
                        const Database& db_target, const Query& q_target) {
  ResultSet source_results, target_results;
  try {
    source_results = execute(db_source, q_source);
  } catch (const ExecError& e) {
    throw ExecutionError(ExecutionError::Side::Source, e.what());
  }
  try {
    target_results = execute(db_target, q_target);
  } catch (const ExecError& e) {
    throw ExecutionError(ExecutionError::Side::Target, e.what());
  }
  return execution_values_match(source_results, target_results);
}

std::vector<CollisionWarning> detect_collisions(const SchemaMap& schema,
                                                const FieldTranslationMap& m) {
  std::vector<CollisionWarning> warnings;

  for (const auto& collection : schema.collections) {
    // image path -> source paths, first-observation order
    std::vector<std::pair<std::string, std::vector<std::string>>> images;
    for (const auto& path : schema_paths(collection)) {
      const std::string* image = m.image_of(collection.name, path);
      std::string image_path = image ? *image : (path == "_id" ? path : std::string());
      if (image_path.empty()) continue;
      auto it = std::find_if(images.begin(), images.end(),
                             [&](const auto& e) { return e.first == image_path; });
      if (it == images.end()) {
        images.push_back({image_path, {path}});
      } else {
        it->second.push_back(path);
      }
    }
    for (const auto& [image, sources] : images) {
      for (std::size_t i = 0; i < sources.size(); ++i) {
        for (std::size_t j = i + 1; j < sources.size(); ++j) {
          warnings.push_back({"collection \"" + collection.name + "\"", sources[i], sources[j],
                              image});
        }
      }
    }
  }

  // collection names against each other and against top-level field names
  std::vector<std::pair<std::string, std::string>> collection_images;
  for (const auto& collection : schema.collections) {
    auto it = m.collections.find(collection.name);
    if (it != m.collections.end()) collection_images.push_back({collection.name, it->second});
  }
  for (std::size_t i = 0; i < collection_images.size(); ++i) {
    for (std::size_t j = i + 1; j < collection_images.size(); ++j) {
      if (collection_images[i].second == collection_images[j].second) {
        warnings.push_back({"collections", collection_images[i].first,
                            collection_images[j].first, collection_images[i].second});
      }
    }
  }
  for (const auto& [collection_src, collection_image] : collection_images) {
    for (const auto& collection : schema.collections) {
      for (const auto& field : collection.fields) {
        const std::string* image = m.image_of(collection.name, field.name);
        if (image && *image == collection_image && collection_src != field.name) {
          warnings.push_back({"collection name vs top-level field", collection_src,
                              collection.name + "." + field.name, collection_image});
        }
      }
    }
  }
  return warnings;
}

std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_dataset(
    const std::vector<DatasetRecord>& records, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DatasetError("split ratio must be in (0, 1)");
  std::vector<std::string> db_ids;
  for (const auto& record : records) {
    if (std::find(db_ids.begin(), db_ids.end(), record.db_id) == db_ids.end()) {
      db_ids.push_back(record.db_id);
    }
  }
  std::sort(db_ids.begin(), db_ids.end());
  if (db_ids.size() < 2) {
    throw DatasetError("cross-domain split needs at least two distinct db_ids");
  }

  // hand-rolled Fisher-Yates: std::shuffle is implementation-defined
  std::mt19937_64 rng(seed);
  for (std::size_t i = db_ids.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(db_ids[i], db_ids[j]);
  }

  auto n_train = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(db_ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, db_ids.size() - 1);
  std::set<std::string> train_ids(db_ids.begin(),
                                  db_ids.begin() + static_cast<std::ptrdiff_t>(n_train));

  std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> out;
  for (const auto& record : records) {
    (train_ids.count(record.db_id) ? out.first : out.second).push_back(record);
  }
  return out;
}

}  // namespace multilink
