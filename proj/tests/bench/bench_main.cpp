// Benchmark comparing the OpenMP-parallel kernels against their serial
// reference implementations: per-item metric evaluation and the retrieval
// cosine scan. `--quick` shrinks the workload for the ctest smoke run.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "generators.hpp"
#include "multilink/metrics.hpp"
#include "multilink/retrieval.hpp"

using namespace multilink;
using namespace multilink::testsupport;

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

void bench_evaluate(std::size_t n_items) {
  Rng rng(12001);
  std::vector<Database> dbs;
  for (int i = 0; i < 8; ++i) dbs.push_back(random_database(rng, 60));
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < n_items; ++i) {
    const Database& db = dbs[i % dbs.size()];
    Query gold = random_oracle_pipeline(rng, db, 3);
    Query pred = mutate_query(rng, gold, db);
    items.push_back({"q" + std::to_string(i), Language::EN, "db" + std::to_string(i % dbs.size()),
                     serialize_query(gold), serialize_query(pred)});
  }
  DbResolver resolver = [&dbs](const std::string& id) -> const Database* {
    return &dbs[static_cast<std::size_t>(std::stoi(id.substr(2))) % dbs.size()];
  };

  auto t0 = std::chrono::steady_clock::now();
  MetricReport serial = evaluate_serial(resolver, items);
  double serial_ms = ms_since(t0);

  auto t1 = std::chrono::steady_clock::now();
  MetricReport parallel = evaluate(resolver, items);
  double parallel_ms = ms_since(t1);

  bool equal = serial.n_em == parallel.n_em && serial.n_qsm == parallel.n_qsm &&
               serial.n_qfc == parallel.n_qfc && serial.n_ex == parallel.n_ex &&
               serial.n_efm == parallel.n_efm && serial.n_evm == parallel.n_evm;
  std::printf("evaluate      items=%-6zu serial=%8.1fms  parallel=%8.1fms  speedup=%.2fx  %s\n",
              items.size(), serial_ms, parallel_ms,
              parallel_ms > 0 ? serial_ms / parallel_ms : 0.0,
              equal ? "results-equal" : "RESULTS-DIFFER");
  if (!equal) std::exit(1);
}

void bench_retrieve(std::size_t n_entries, std::size_t n_probes) {
  Embedder embed = hashing_embedder(256);
  std::vector<ExamplePair> pairs;
  for (std::size_t i = 0; i < n_entries; ++i) {
    pairs.push_back({"synthetic question about table " + std::to_string(i % 50) + " row " +
                         std::to_string(i),
                     "db.c.find({})", Language::EN, "d"});
  }
  VectorIndex index = build_index(pairs, embed).at(Language::EN);

  std::vector<std::string> probes;
  Rng rng(12002);
  for (std::size_t i = 0; i < n_probes; ++i) {
    probes.push_back(pairs[rng.below(pairs.size())].nlq + " variant");
  }

  auto t0 = std::chrono::steady_clock::now();
  std::size_t serial_hits = 0;
  for (const auto& probe : probes) {
    serial_hits += retrieve_serial(index, probe, embed, 6, 0.5).size();
  }
  double serial_ms = ms_since(t0);

  auto t1 = std::chrono::steady_clock::now();
  std::size_t parallel_hits = 0;
  for (const auto& probe : probes) {
    parallel_hits += retrieve(index, probe, embed, 6, 0.5).size();
  }
  double parallel_ms = ms_since(t1);

  std::printf("retrieve      entries=%-5zu probes=%-4zu serial=%8.1fms  parallel=%8.1fms  "
              "speedup=%.2fx  %s\n",
              n_entries, n_probes, serial_ms, parallel_ms,
              parallel_ms > 0 ? serial_ms / parallel_ms : 0.0,
              serial_hits == parallel_hits ? "results-equal" : "RESULTS-DIFFER");
  if (serial_hits != parallel_hits) std::exit(1);
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--quick") == 0) quick = true;
  }
#ifdef _OPENMP
  std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
  std::printf("openmp: not enabled (serial build)\n");
#endif
  bench_evaluate(quick ? 200 : 4000);
  bench_retrieve(quick ? 2000 : 40000, quick ? 50 : 400);
  return 0;
}
