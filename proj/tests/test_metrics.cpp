#include <doctest.h>

#include <algorithm>

#include "generators.hpp"
#include "multilink/metrics.hpp"
#include "testenv.hpp"

using namespace multilink;
using namespace multilink::testsupport;

namespace {

const char* kTable6Target =
    "db.科目.aggregate([{ $unwind: \"$课程\" }, { $match: { \"课程.课程名称\": \"Spanish\" } }, "
    "{ $unwind: \"$课程.学生课程注册\" }, "
    "{ $project: { 注册的日期: \"$课程.学生课程注册.注册的日期\", _id: 0 } }]);";
const char* kTable6Smart =
    "db.课程.aggregate([{ $match: { 课程名称: \"Spanish\" } }, { $unwind: \"$学生课程注册\" }, "
    "{ $project: { 注册的日期: \"$学生课程注册.注册的日期\", _id: 0 } }]);";
const char* kTable6Rag =
    "db.科目.aggregate([{ $unwind: \"$课程\" }, { $match: { \"课程.课程名称\": \"西班牙语\" } }, "
    "{ $unwind: \"$课程.学生课程注册\" }, "
    "{ $project: { 注册日期: \"$课程.学生课程注册.注册的日期\", _id: 0 } }]);";

Database table6() { return load_database(fixture("dbs/table6_zh")); }

DbResolver table6_resolver(const Database& db) {
  return [&db](const std::string& id) -> const Database* {
    return id == "table6_zh" ? &db : nullptr;
  };
}

std::vector<EvalItem> fixture_items() {
  std::vector<EvalItem> items;
  for (const auto& record : read_jsonl(fixture("eval_items.jsonl"))) {
    items.push_back(EvalItem::from_record(record));
  }
  return items;
}

}  // namespace

TEST_CASE("exact match is canonical, not textual") {
  Query gold = parse_query(kTable6Target);
  CHECK(exact_match(gold, gold));
  CHECK(!exact_match(parse_query(kTable6Smart), gold));
  // quoting style and whitespace do not matter
  CHECK(exact_match(parse_query("db.c.find({'a': 1})"), parse_query("db.c.find({\"a\":1})")));
  // integer/float literals unify
  CHECK(exact_match(parse_query("db.c.find({a: 1})"), parse_query("db.c.find({a: 1.0})")));
}

TEST_CASE("stage-sequence match") {
  Query gold = parse_query(kTable6Target);
  CHECK(stages_match(parse_query(kTable6Rag), gold));  // only a literal differs
  CHECK(stages_match(gold, gold));
  CHECK(!stages_match(parse_query(kTable6Smart), gold));  // [match,unwind,project]
}

TEST_CASE("field coverage is superset-based") {
  Query gold = parse_query("db.c.find({a: 1}, {b: 1, _id: 0}).sort({d: 1})");
  CHECK(fields_coverage(gold, gold));
  Query more = parse_query("db.c.find({a: 1}, {b: 1, extra: 1, _id: 0}).sort({d: 1})");
  CHECK(fields_coverage(more, gold));
  Query missing_sort_key = parse_query("db.c.find({a: 1}, {b: 1, _id: 0})");
  CHECK(!fields_coverage(missing_sort_key, gold));
}

TEST_CASE("execution metrics on the table 6 fixture") {
  Database db = table6();
  Query gold = parse_query(kTable6Target);
  SUBCASE("identity") {
    auto m = execution_metrics(db, gold, gold);
    CHECK(m.ex);
    CHECK(m.efm);
    CHECK(m.evm);
  }
  SUBCASE("empty-result baseline fails all three") {
    auto m = execution_metrics(db, parse_query(kTable6Rag), gold);
    CHECK(!m.ex);
    CHECK(!m.efm);
    CHECK(!m.evm);
  }
  SUBCASE("alias-only change keeps value match") {
    Query renamed = parse_query(
        "db.科目.aggregate([{ $unwind: \"$课程\" }, { $match: { \"课程.课程名称\": \"Spanish\" } }, "
        "{ $unwind: \"$课程.学生课程注册\" }, "
        "{ $project: { 注册日期: \"$课程.学生课程注册.注册的日期\", _id: 0 } }]);");
    auto m = execution_metrics(db, renamed, gold);
    CHECK(!m.ex);
    CHECK(!m.efm);
    CHECK(m.evm);
  }
  SUBCASE("pred execution errors score all-false") {
    auto m = execution_metrics(db, parse_query("db.nope.find({})"), gold);
    CHECK(!m.ex);
    CHECK(!m.efm);
    CHECK(!m.evm);
  }
}

TEST_CASE("the ten-item fixture set reproduces the hand-computed flags") {
  Database db = table6();
  MetricReport report = evaluate(table6_resolver(db), fixture_items());
  REQUIRE(report.n == 10);

  struct Expected {
    bool em, qsm, qfc, ex, efm, evm;
  };
  // worked out by hand from the fixture queries and the table6_zh contents
  const Expected expected[10] = {
      {true, true, true, true, true, true},        // 1: pred == gold
      {false, true, false, false, false, false},   // 2: value+alias wrong, empty results
      {false, false, false, false, false, false},  // 3: wrong collection and stages
      {false, true, false, false, false, true},    // 4: alias renamed, values intact
      {false, false, false, false, false, false},  // 5: unparseable prediction
      {false, true, true, false, false, false},    // 6: extra projected field
      {true, true, true, true, true, true},        // 7: same query, different quoting
      {false, true, true, false, true, false},     // 8: flipped sort direction
      {false, true, true, false, false, false},    // 9: unknown collection
      {false, true, true, false, false, false},    // 10: different collection
  };
  for (std::size_t i = 0; i < 10; ++i) {
    CAPTURE(i);
    CHECK(report.per_item[i].em == expected[i].em);
    CHECK(report.per_item[i].qsm == expected[i].qsm);
    CHECK(report.per_item[i].qfc == expected[i].qfc);
    CHECK(report.per_item[i].ex == expected[i].ex);
    CHECK(report.per_item[i].efm == expected[i].efm);
    CHECK(report.per_item[i].evm == expected[i].evm);
  }
  CHECK(report.per_item[4].pred_error.find("$fancyStage") != std::string::npos);

  // exact rational aggregates
  CHECK(report.n_em == 2);
  CHECK(report.n_qsm == 8);
  CHECK(report.n_qfc == 6);
  CHECK(report.n_ex == 2);
  CHECK(report.n_efm == 3);
  CHECK(report.n_evm == 3);
  CHECK(report.em() == 2.0 / 10.0);
  CHECK(report.qsm() == 8.0 / 10.0);
  CHECK(report.qfc() == 6.0 / 10.0);
  CHECK(report.ex() == 2.0 / 10.0);
  CHECK(report.efm() == 3.0 / 10.0);
  CHECK(report.evm() == 3.0 / 10.0);
}

TEST_CASE("all-gold items score 1.0 everywhere and the report JSON is stable") {
  Database db = table6();
  std::vector<EvalItem> items = fixture_items();
  for (auto& item : items) item.pred_text = item.gold_text;
  MetricReport report = evaluate(table6_resolver(db), items);
  CHECK(report.em() == 1.0);
  CHECK(report.qsm() == 1.0);
  CHECK(report.qfc() == 1.0);
  CHECK(report.ex() == 1.0);
  CHECK(report.efm() == 1.0);
  CHECK(report.evm() == 1.0);

  Value json = report.to_json();
  std::string dumped = json.dump();
  CHECK(dumped.rfind("{\"n\":10,\"em\":1.0,\"qsm\":1.0,\"qfc\":1.0,\"ex\":1.0,"
                     "\"efm\":1.0,\"evm\":1.0,\"per_item\":[", 0) == 0);

  // four-decimal rounding of a non-terminating ratio
  std::vector<EvalItem> three(items.begin(), items.begin() + 3);
  three[0].pred_text = "db.课程.find({nope: 1})";
  MetricReport r3 = evaluate(table6_resolver(db), three);
  CHECK(r3.to_json()["em"].get<double>() == doctest::Approx(0.6667).epsilon(1e-12));
}

TEST_CASE("aggregates are permutation-invariant") {
  Database db = table6();
  std::vector<EvalItem> items = fixture_items();
  MetricReport a = evaluate(table6_resolver(db), items);
  std::reverse(items.begin(), items.end());
  MetricReport b = evaluate(table6_resolver(db), items);
  CHECK(a.n_em == b.n_em);
  CHECK(a.n_qsm == b.n_qsm);
  CHECK(a.n_qfc == b.n_qfc);
  CHECK(a.n_ex == b.n_ex);
  CHECK(a.n_efm == b.n_efm);
  CHECK(a.n_evm == b.n_evm);
}

TEST_CASE("parallel and serial evaluation agree") {
  Database db = table6();
  std::vector<EvalItem> items = fixture_items();
  MetricReport parallel = evaluate(table6_resolver(db), items);
  MetricReport serial = evaluate_serial(table6_resolver(db), items);
  REQUIRE(parallel.n == serial.n);
  for (std::size_t i = 0; i < parallel.n; ++i) {
    CHECK(parallel.per_item[i].em == serial.per_item[i].em);
    CHECK(parallel.per_item[i].qsm == serial.per_item[i].qsm);
    CHECK(parallel.per_item[i].qfc == serial.per_item[i].qfc);
    CHECK(parallel.per_item[i].ex == serial.per_item[i].ex);
    CHECK(parallel.per_item[i].efm == serial.per_item[i].efm);
    CHECK(parallel.per_item[i].evm == serial.per_item[i].evm);
  }
}

TEST_CASE("dataset problems raise DatasetError with all offenders listed") {
  Database db = table6();
  std::vector<EvalItem> items = fixture_items();
  items[1].db_id = "missing_db";
  items[3].gold_text = "not a query";
  CHECK_THROWS_AS(evaluate(table6_resolver(db), items), DatasetError);
  try {
    evaluate(table6_resolver(db), items);
  } catch (const DatasetError& e) {
    CHECK(e.problems.size() == 2);
  }
}

TEST_CASE("metric implications on random near-miss pairs (smoke)") {
  Rng rng(808);
  for (int checked = 0; checked < 200; ++checked) {
    Database db = random_database(rng, 12);
    Query gold = random_oracle_pipeline(rng, db);
    Query pred = mutate_query(rng, gold, db);
    EvalItem item{"q", Language::EN, "rand", serialize_query(gold), serialize_query(pred)};
    DbResolver resolver = [&db](const std::string&) { return &db; };
    MetricReport report = evaluate(resolver, {item});
    const ItemFlags& f = report.per_item[0];
    if (f.em) {
      CHECK(f.qsm);
      CHECK(f.qfc);
      CHECK(f.ex);
    }
    if (f.ex) {
      CHECK(f.efm);
      CHECK(f.evm);
    }
  }
}

TEST_CASE("evm is invariant under renaming final projection aliases") {
  Database db = table6();
  Query gold = parse_query(kTable6Target);
  Query pred = parse_query(kTable6Target);
  auto& stages = std::get<AggregateQuery>(pred.body).stages;
  auto& project = std::get<ProjectStage>(stages.back());
  for (auto& entry : project.entries) {
    if (entry.kind == ProjectionEntry::Kind::Ref) entry.target = FieldPath({"renamed_alias"});
  }
  auto base = execution_metrics(db, gold, gold);
  auto renamed = execution_metrics(db, pred, gold);
  CHECK(base.evm == renamed.evm);
  CHECK(renamed.evm);
  CHECK(!renamed.efm);
}
