#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "multilink/errors.hpp"
#include "multilink/language.hpp"

namespace multilink {

struct ClassificationAmbiguous : Error {
  using Error::Error;
};

/// Script-based language identification. Any kana means JA; Han-dominant
/// text without kana is ZH; Cyrillic-dominant text is RU; Latin text is
/// split EN/FR/DE by stop-word and diacritic scoring (ties resolve
/// EN > FR > DE). Text with no letters at all raises ClassificationAmbiguous.
Language classify_language(std::string_view text);

struct ExamplePair {
  std::string nlq;
  std::string query_text;
  Language language = Language::EN;
  std::string db_id;
};

struct EmbeddingError : Error {
  using Error::Error;
};

using Embedder = std::function<std::vector<double>(const std::string&)>;

/// Deterministic feature-hashing embedder over UTF-8 byte 1–3-grams.
/// Reproducible everywhere, no model required. Production deployments plug
/// a hosted embedding model in behind the same contract.
Embedder hashing_embedder(std::size_t dimension = 256);

struct VectorIndex {
  struct Entry {
    std::vector<double> vec;  // unit L2 norm
    ExamplePair pair;
  };
  Language language = Language::EN;
  std::size_t dimension = 0;
  std::vector<Entry> entries;
};

/// Buckets pairs by language and embeds each NLQ (L2-normalized).
/// Zero-norm or dimension-mismatched embeddings raise EmbeddingError naming
/// the pair.
std::map<Language, VectorIndex> build_index(const std::vector<ExamplePair>& pairs,
                                            const Embedder& embedder);

struct ScoredExample {
  double similarity = 0.0;
  ExamplePair pair;
};

/// Up to k entries with cosine >= threshold, descending similarity, ties by
/// insertion order. Scoring is OpenMP-parallel; results are order-stable.
std::vector<ScoredExample> retrieve(const VectorIndex& index, const std::string& text,
                                    const Embedder& embedder, std::size_t k = 6,
                                    double threshold = 0.5);

/// Straight-line serial implementation kept as the reference for the
/// parallel scan.
std::vector<ScoredExample> retrieve_serial(const VectorIndex& index, const std::string& text,
                                           const Embedder& embedder, std::size_t k = 6,
                                           double threshold = 0.5);

/// Index file: {"language", "dimension", "count", "entries": [...]}; loading
/// re-validates unit norms to 1e-6.
void save_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex load_index(const std::filesystem::path& path);

}  // namespace multilink
