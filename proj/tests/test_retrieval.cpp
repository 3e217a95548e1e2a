#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "generators.hpp"
#include "multilink/dataset.hpp"
#include "multilink/retrieval.hpp"
#include "testenv.hpp"

using namespace multilink;
using namespace multilink::testsupport;

namespace {

std::vector<ExamplePair> synthetic_pairs(std::size_t n, Language lang) {
  static const char* templates[] = {
      "how many users signed up in", "list the orders shipped to", "what is the total price of",
      "which products belong to",    "show the names of students in",
  };
  std::vector<ExamplePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string nlq = std::string(templates[i % 5]) + " region " + std::to_string(i);
    pairs.push_back({nlq, "db.c.find({})", lang, "db_" + std::to_string(i % 7)});
  }
  return pairs;
}

// independent scoring path used as the oracle for retrieve()
std::vector<std::pair<double, std::string>> brute_force(const VectorIndex& index,
                                                        const std::string& text,
                                                        const Embedder& embedder, std::size_t k,
                                                        double threshold) {
  std::vector<double> probe = embedder(text);
  double norm = 0.0;
  for (double x : probe) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<std::pair<double, std::string>> scored;
  if (norm == 0.0) return scored;
  for (const auto& entry : index.entries) {
    double dot = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) dot += probe[i] / norm * entry.vec[i];
    if (dot >= threshold) scored.push_back({dot, entry.pair.nlq});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

}  // namespace

TEST_CASE("language classification on corpus examples") {
  CHECK(classify_language("学生在西班牙语课程的注册日期是什么时候？") == Language::ZH);
  CHECK(classify_language("登山者为位于乌干达的山峰记录的攀登时间是什么？") == Language::ZH);
  CHECK(classify_language("Wann ist das Anmeldedatum für Studenten im Spanischkurs?") ==
        Language::DE);
  CHECK(classify_language("When is the registration date for students in the Spanish course?") ==
        Language::EN);
  CHECK(classify_language("Quelle est la date d'inscription des étudiants au cours d'espagnol ?") ==
        Language::FR);
  CHECK(classify_language("Когда дата регистрации студентов на курс испанского языка?") ==
        Language::RU);
  CHECK(classify_language("スペイン語コースの学生の登録日はいつですか？") == Language::JA);
  // Han with quoted Latin values stays Chinese; kana wins over Han
  CHECK(classify_language("有多少论文是'Atsushi Ohori'的作者?") == Language::ZH);
  CHECK(classify_language("東京のクラスを表示") == Language::JA);
  CHECK_THROWS_AS(classify_language(""), ClassificationAmbiguous);
  CHECK_THROWS_AS(classify_language("12345 !!! ..."), ClassificationAmbiguous);
}

TEST_CASE("classification is total over the run fixture and stays in the six") {
  for (const auto& record : read_jsonl(fixture("run20.jsonl"))) {
    Language got = classify_language(record.nlq);
    CHECK(got == record.language);
  }
}

TEST_CASE("hashing embedder is deterministic with a fixed dimension") {
  Embedder embed = hashing_embedder(256);
  auto a = embed("list the orders shipped to region 3");
  auto b = embed("list the orders shipped to region 3");
  CHECK(a.size() == 256);
  CHECK(a == b);
  CHECK(embed("счёт пользователей").size() == 256);
}

TEST_CASE("build_index buckets by language and normalizes") {
  Embedder embed = hashing_embedder(64);
  SUBCASE("zero pairs give an empty index set") {
    CHECK(build_index({}, embed).empty());
  }
  SUBCASE("12 pairs across six languages give six indices of size two") {
    std::vector<ExamplePair> pairs;
    for (Language lang : kAllLanguages) {
      pairs.push_back({"first " + std::string(to_string(lang)), "db.c.find({})", lang, "d"});
      pairs.push_back({"second " + std::string(to_string(lang)), "db.c.find({})", lang, "d"});
    }
    auto indices = build_index(pairs, embed);
    REQUIRE(indices.size() == 6);
    for (const auto& [lang, index] : indices) {
      CHECK(index.entries.size() == 2);
      CHECK(index.dimension == 64);
      for (const auto& entry : index.entries) {
        double norm = 0.0;
        for (double x : entry.vec) norm += x * x;
        CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-9);
      }
    }
  }
  SUBCASE("rebuilding is identical") {
    auto pairs = synthetic_pairs(40, Language::EN);
    auto a = build_index(pairs, embed);
    auto b = build_index(pairs, embed);
    REQUIRE(a.size() == b.size());
    for (const auto& [lang, index] : a) {
      for (std::size_t i = 0; i < index.entries.size(); ++i) {
        CHECK(index.entries[i].vec == b.at(lang).entries[i].vec);
      }
    }
  }
  SUBCASE("zero-norm embeddings name the offending pair") {
    std::vector<ExamplePair> pairs = {{"", "db.c.find({})", Language::EN, "d"}};
    CHECK_THROWS_AS(build_index(pairs, embed), EmbeddingError);
  }
}

TEST_CASE("retrieve: self-similarity, thresholds, ties, k") {
  Embedder embed = hashing_embedder(256);
  auto pairs = synthetic_pairs(30, Language::EN);
  auto indices = build_index(pairs, embed);
  const VectorIndex& index = indices.at(Language::EN);

  SUBCASE("a stored NLQ retrieves itself first with similarity 1.0") {
    auto hits = retrieve(index, pairs[7].nlq, embed, 6, 0.5);
    REQUIRE(!hits.empty());
    CHECK(hits[0].pair.nlq == pairs[7].nlq);
    CHECK(std::fabs(hits[0].similarity - 1.0) < 1e-6);
  }
  SUBCASE("an impossible threshold returns nothing") {
    CHECK(retrieve(index, pairs[0].nlq, embed, 6, 1.1).empty());
  }
  SUBCASE("k bounds the result and k=0 short-circuits") {
    CHECK(retrieve(index, pairs[0].nlq, embed, 2, 0.0).size() == 2);
    CHECK(retrieve(index, pairs[0].nlq, embed, 0, 0.0).empty());
  }
  SUBCASE("equal scores break ties by insertion order") {
    std::vector<ExamplePair> dup = {
        {"identical text", "db.a.find({})", Language::EN, "d1"},
        {"identical text", "db.b.find({})", Language::EN, "d2"},
        {"identical text", "db.c.find({})", Language::EN, "d3"},
    };
    auto idx = build_index(dup, embed);
    auto hits = retrieve(idx.at(Language::EN), "identical text", embed, 3, 0.5);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].pair.db_id == "d1");
    CHECK(hits[1].pair.db_id == "d2");
    CHECK(hits[2].pair.db_id == "d3");
  }
  SUBCASE("results are non-increasing in similarity") {
    auto hits = retrieve(index, "how many users signed up in region1", embed, 10, 0.0);
    for (std::size_t i = 1; i < hits.size(); ++i) {
      CHECK(hits[i - 1].similarity >= hits[i].similarity);
    }
  }
}

TEST_CASE("retrieve matches an exhaustive scan and the serial reference") {
  Embedder embed = hashing_embedder(128);
  auto pairs = synthetic_pairs(200, Language::EN);
  auto indices = build_index(pairs, embed);
  const VectorIndex& index = indices.at(Language::EN);
  Rng rng(5150);
  for (int probe_i = 0; probe_i < 30; ++probe_i) {
    std::string probe = probe_i % 2 == 0
                            ? pairs[rng.below(pairs.size())].nlq
                            : "orders signed in region " + std::to_string(rng.below(50));
    auto expected = brute_force(index, probe, embed, 6, 0.5);
    auto got = retrieve(index, probe, embed, 6, 0.5);
    auto serial = retrieve_serial(index, probe, embed, 6, 0.5);
    REQUIRE(got.size() == expected.size());
    REQUIRE(serial.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].pair.nlq == expected[i].second);
      CHECK(got[i].similarity == doctest::Approx(expected[i].first).epsilon(1e-9));
      CHECK(serial[i].pair.nlq == got[i].pair.nlq);
    }
  }
}

TEST_CASE("index persistence round-trips and validates norms") {
  Embedder embed = hashing_embedder(32);
  auto pairs = synthetic_pairs(10, Language::FR);
  auto indices = build_index(pairs, embed);
  auto path = std::filesystem::temp_directory_path() / "mlk_index_FR.json";
  save_index(indices.at(Language::FR), path);
  VectorIndex loaded = load_index(path);
  CHECK(loaded.language == Language::FR);
  CHECK(loaded.dimension == 32);
  REQUIRE(loaded.entries.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(loaded.entries[i].pair.nlq == indices.at(Language::FR).entries[i].pair.nlq);
    CHECK(loaded.entries[i].vec == indices.at(Language::FR).entries[i].vec);
  }

  // corrupt a vector: loading must reject the bad norm
  {
    std::ifstream in(path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    Value raw = json_read(buffer.str());
    raw["entries"][0]["vector"][0] = raw["entries"][0]["vector"][0].get<double>() + 0.5;
    std::ofstream out(path);
    out << raw.dump();
  }
  CHECK_THROWS_AS(load_index(path), Error);
  std::filesystem::remove(path);
}
