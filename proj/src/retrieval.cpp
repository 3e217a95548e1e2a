#include "multilink/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "multilink/value.hpp"

namespace multilink {
namespace {

// ---- language classification ----

std::vector<std::uint32_t> decode_utf8(std::string_view text) {
  std::vector<std::uint32_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    std::uint32_t cp = 0;
    std::size_t len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      len = 3;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      len = 4;
    } else {
      ++i;  // stray continuation byte; skip
      continue;
    }
    if (i + len > text.size()) break;
    bool valid = true;
    for (std::size_t j = 1; j < len; ++j) {
      unsigned char cc = static_cast<unsigned char>(text[i + j]);
      if ((cc >> 6) != 0x2) {
        valid = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (valid) {
      out.push_back(cp);
      i += len;
    } else {
      ++i;
    }
  }
  return out;
}

bool is_han(std::uint32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF);
}

bool is_kana(std::uint32_t cp) {
  return (cp >= 0x3041 && cp <= 0x3096) || (cp >= 0x30A1 && cp <= 0x30FA) || cp == 0x30FC ||
         (cp >= 0xFF66 && cp <= 0xFF9D);
}

bool is_cyrillic(std::uint32_t cp) {
  return (cp >= 0x0400 && cp <= 0x04FF) || (cp >= 0x0500 && cp <= 0x052F);
}

bool is_latin_letter(std::uint32_t cp) {
  if ((cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z')) return true;
  if (cp >= 0xC0 && cp <= 0xFF && cp != 0xD7 && cp != 0xF7) return true;
  return cp >= 0x100 && cp <= 0x24F;
}

std::uint32_t fold_latin(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

const std::set<std::string>& stopwords(Language lang) {
  static const std::set<std::string> en = {
      "the", "a",    "an",   "is",   "are",  "was",   "were", "what",  "which", "who",
      "whose", "how", "many", "much", "where", "when", "why",  "of",   "for",   "on",
      "at",   "by",   "with", "and",  "or",   "not",   "do",   "does", "did",   "show",
      "list", "find", "all",  "than", "that", "this",  "there", "have", "has",  "number",
      "names", "name", "each", "their", "its", "to"};
  static const std::set<std::string> fr = {
      "le",   "la",    "les",  "un",   "une",   "des",   "du",    "de",    "est",  "sont",
      "quel", "quelle", "quels", "quelles", "qui", "que", "quoi", "où",    "quand", "comment",
      "combien", "pour", "dans", "sur",  "avec", "et",    "ou",    "ne",    "pas",  "tous",
      "toutes", "tout", "liste", "affichez", "affiche", "nom",  "noms",  "nombre", "il",
      "elle", "par",   "aux",   "au",   "leurs", "leur",  "chaque"};
  static const std::set<std::string> de = {
      "der",  "die",   "das",  "den",  "dem",   "ein",   "eine", "einen", "einem", "ist",
      "sind", "war",   "waren", "was", "welche", "welcher", "welches", "wer", "wessen", "wie",
      "viele", "viel", "wo",   "wann", "warum", "für",   "im",   "an",    "am",    "auf",
      "mit",  "und",   "oder", "nicht", "zeige", "zeigen", "liste", "alle", "als",  "dass",
      "haben", "hat",  "anzahl", "von", "aus",  "jedes", "jeder", "ihre",  "des"};
  switch (lang) {
    case Language::FR: return fr;
    case Language::DE: return de;
    default: return en;
  }
}

int diacritic_score(Language lang, std::uint32_t cp) {
  // folded codepoints
  static const std::set<std::uint32_t> de = {0xE4, 0xF6, 0xFC, 0xDF};  // ä ö ü ß
  static const std::set<std::uint32_t> fr = {0xE0, 0xE2, 0xE7, 0xE8, 0xE9, 0xEA,
                                             0xEB, 0xEE, 0xEF, 0xF4, 0xF9, 0xFB, 0x153};
  if (lang == Language::DE) return de.count(cp) ? 3 : 0;
  if (lang == Language::FR) return fr.count(cp) ? 3 : 0;
  return 0;
}

Language classify_latin(const std::vector<std::uint32_t>& codepoints) {
  std::vector<std::string> tokens;
  std::string current;
  int scores[3] = {0, 0, 0};  // EN, FR, DE
  const Language langs[3] = {Language::EN, Language::FR, Language::DE};
  for (std::uint32_t cp : codepoints) {
    if (is_latin_letter(cp)) {
      std::uint32_t folded = fold_latin(cp);
      scores[1] += diacritic_score(Language::FR, folded);
      scores[2] += diacritic_score(Language::DE, folded);
      // append folded codepoint as UTF-8
      if (folded < 0x80) {
        current.push_back(static_cast<char>(folded));
      } else {
        current.push_back(static_cast<char>(0xC0 | (folded >> 6)));
        current.push_back(static_cast<char>(0x80 | (folded & 0x3F)));
      }
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  for (const auto& token : tokens) {
    for (int i = 0; i < 3; ++i) {
      if (stopwords(langs[i]).count(token)) scores[i] += 2;
    }
  }
  int best = 0;
  for (int i = 1; i < 3; ++i) {
    if (scores[i] > scores[best]) best = i;  // ties keep the earlier language
  }
  return langs[best];
}

}  // namespace

Language classify_language(std::string_view text) {
  std::vector<std::uint32_t> codepoints = decode_utf8(text);
  std::size_t han = 0, kana = 0, cyrillic = 0, latin = 0;
  for (std::uint32_t cp : codepoints) {
    if (is_kana(cp)) {
      ++kana;
    } else if (is_han(cp)) {
      ++han;
    } else if (is_cyrillic(cp)) {
      ++cyrillic;
    } else if (is_latin_letter(cp)) {
      ++latin;
    }
  }
  if (kana > 0) return Language::JA;
  if (han > 0 && han >= cyrillic && 2 * han >= latin) return Language::ZH;
  if (cyrillic > 0 && cyrillic >= latin) return Language::RU;
  if (latin > 0) return classify_latin(codepoints);
  throw ClassificationAmbiguous("no script signal in text");
}

// ---- embedding and retrieval ----

namespace {

std::uint64_t fnv1a(const char* data, std::size_t len) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

double l2_norm(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

std::vector<double> embed_normalized(const Embedder& embedder, const std::string& text,
                                     std::size_t expected_dim, bool* ok) {
  std::vector<double> v = embedder(text);
  if (expected_dim != 0 && v.size() != expected_dim) {
    throw EmbeddingError("embedder returned dimension " + std::to_string(v.size()) +
                         ", expected " + std::to_string(expected_dim));
  }
  double norm = l2_norm(v);
  if (norm == 0.0) {
    if (ok) {
      *ok = false;
      return v;
    }
    throw EmbeddingError("text embeds to the zero vector");
  }
  for (double& x : v) x /= norm;
  if (ok) *ok = true;
  return v;
}

}  // namespace

Embedder hashing_embedder(std::size_t dimension) {
  return [dimension](const std::string& text) {
    std::vector<double> v(dimension, 0.0);
    for (std::size_t n = 1; n <= 3; ++n) {
      if (text.size() < n) break;
      for (std::size_t i = 0; i + n <= text.size(); ++i) {
        std::uint64_t h = fnv1a(text.data() + i, n);
        double sign = (h >> 63) ? -1.0 : 1.0;
        v[(h >> 1) % dimension] += sign;
      }
    }
    return v;
  };
}

std::map<Language, VectorIndex> build_index(const std::vector<ExamplePair>& pairs,
                                            const Embedder& embedder) {
  std::map<Language, VectorIndex> indices;
  for (const auto& pair : pairs) {
    VectorIndex& index = indices[pair.language];
    index.language = pair.language;
    std::vector<double> vec;
    try {
      vec = embed_normalized(embedder, pair.nlq, index.dimension, nullptr);
    } catch (const EmbeddingError& e) {
      throw EmbeddingError(std::string(e.what()) + " (pair nlq: " + pair.nlq + ")");
    }
    index.dimension = vec.size();
    index.entries.push_back({std::move(vec), pair});
  }
  return indices;
}

std::vector<ScoredExample> retrieve(const VectorIndex& index, const std::string& text,
                                    const Embedder& embedder, std::size_t k, double threshold) {
  if (k == 0 || index.entries.empty()) return {};
  bool ok = true;
  std::vector<double> probe = embed_normalized(embedder, text, index.dimension, &ok);
  if (!ok) return {};

  std::vector<double> scores(index.entries.size());
  const std::int64_t count = static_cast<std::int64_t>(index.entries.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (count > 256)
#endif
  for (std::int64_t i = 0; i < count; ++i) {
    scores[static_cast<std::size_t>(i)] = dot(probe, index.entries[static_cast<std::size_t>(i)].vec);
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (order.size() > k) order.resize(k);

  std::vector<ScoredExample> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back({scores[i], index.entries[i].pair});
  return out;
}

std::vector<ScoredExample> retrieve_serial(const VectorIndex& index, const std::string& text,
                                           const Embedder& embedder, std::size_t k,
                                           double threshold) {
  if (k == 0 || index.entries.empty()) return {};
  bool ok = true;
  std::vector<double> probe = embed_normalized(embedder, text, index.dimension, &ok);
  if (!ok) return {};

  std::vector<double> scores;
  scores.reserve(index.entries.size());
  for (const auto& entry : index.entries) scores.push_back(dot(probe, entry.vec));

  // repeated max-scan instead of sorting: an intentionally different shape
  std::vector<bool> taken(scores.size(), false);
  std::vector<ScoredExample> out;
  while (out.size() < k) {
    std::size_t best = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (taken[i] || scores[i] < threshold) continue;
      if (best == scores.size() || scores[i] > scores[best]) best = i;
    }
    if (best == scores.size()) break;
    taken[best] = true;
    out.push_back({scores[best], index.entries[best].pair});
  }
  return out;
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  Value v = Value::object();
  v["language"] = std::string(to_string(index.language));
  v["dimension"] = index.dimension;
  v["count"] = index.entries.size();
  Value entries = Value::array();
  for (const auto& entry : index.entries) {
    Value e = Value::object();
    e["nlq"] = entry.pair.nlq;
    e["query"] = entry.pair.query_text;
    e["db_id"] = entry.pair.db_id;
    Value vec = Value::array();
    for (double x : entry.vec) vec.push_back(x);
    e["vector"] = std::move(vec);
    entries.push_back(std::move(e));
  }
  v["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write index file " + path.string());
  out << v.dump(1) << "\n";
}

VectorIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open index file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Value v = json_read(buffer.str(), path.filename().string());
  VectorIndex index;
  index.language = language_from_string(v.at("language").get_ref<const std::string&>());
  index.dimension = v.at("dimension").get<std::size_t>();
  for (const auto& e : v.at("entries")) {
    VectorIndex::Entry entry;
    entry.pair.nlq = e.at("nlq").get<std::string>();
    entry.pair.query_text = e.at("query").get<std::string>();
    entry.pair.db_id = e.at("db_id").get<std::string>();
    entry.pair.language = index.language;
    for (const auto& x : e.at("vector")) entry.vec.push_back(x.get<double>());
    if (entry.vec.size() != index.dimension) {
      throw Error("index entry dimension mismatch in " + path.string());
    }
    double norm = l2_norm(entry.vec);
    if (std::fabs(norm - 1.0) > 1e-6) {
      throw Error("index vector norm " + std::to_string(norm) + " out of tolerance in " +
                  path.string());
    }
    index.entries.push_back(std::move(entry));
  }
  if (v.contains("count") && v.at("count").get<std::size_t>() != index.entries.size()) {
    throw Error("index count header disagrees with entry list in " + path.string());
  }
  return index;
}

}  // namespace multilink
