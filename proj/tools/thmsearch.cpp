// thmsearch: drives the pipeline (ingest -> informalize -> embed -> index) and
// serves, searches and benchmarks the result.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "thmsearch/benchmark.hpp"
#include "thmsearch/bm25.hpp"
#include "thmsearch/config.hpp"
#include "thmsearch/error.hpp"
#include "thmsearch/manifest.hpp"
#include "thmsearch/pipeline.hpp"
#include "thmsearch/remote.hpp"
#include "thmsearch/service.hpp"

namespace ts = thmsearch;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Common {
  std::string config_path;
  std::string workdir;
  bool mock = false;

  ts::Config load() const {
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) {
      if (!std::filesystem::exists(config_path)) throw ts::UsageError("config file not found: " + config_path);
      file = config_path;
    }
    auto cfg = ts::load_config(file);
    if (!workdir.empty()) cfg.workdir = workdir;
    if (mock) ts::use_mock_providers(cfg);
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c, bool providers) {
  cmd->add_option("--config", c.config_path, "JSON config file (env THMSEARCH_* overrides it)");
  cmd->add_option("--out,--workdir", c.workdir, "working directory holding the pipeline artifacts");
  if (providers) cmd->add_flag("--mock-providers", c.mock, "use deterministic offline providers");
}

void print_diagnostics(const ts::IngestReport& r) {
  for (const auto& d : r.diagnostics) std::cerr << "  " << ts::format_diagnostic(d) << "\n";
}

int cmd_ingest(const Common& common, const std::string& corpus, bool strict, bool all_kinds) {
  auto cfg = common.load();
  ts::Manifest manifest = ts::Manifest::load(cfg.workdir);
  auto report = ts::run_ingest(manifest, {corpus, strict, all_kinds});
  print_diagnostics(report);
  std::cout << "ingested " << report.written << " records (" << report.parsed << " parsed), "
            << report.diagnostics.size() << " diagnostics\n";
  return 0;
}

int cmd_informalize(const Common& common) {
  auto cfg = common.load();
  auto manifest = ts::Manifest::load(cfg.workdir);
  auto generator = ts::make_generator(cfg.informalization, ts::GeneratorRole::informalization);
  ts::InformalizeCorpusOptions opts;
  opts.concurrency = cfg.concurrency;
  opts.requests_per_second = cfg.requests_per_second;
  opts.call.timeout = cfg.informalization.timeout;
  auto r = ts::run_informalize(manifest, *generator, opts);
  std::cout << "informalized " << r.records << " records (" << r.generated << " generated, " << r.reused
            << " reused from cache) with " << generator->id() << "\n";
  return 0;
}

int cmd_embed(const Common& common, const std::string& preset) {
  auto cfg = common.load();
  auto manifest = ts::Manifest::load(cfg.workdir);
  auto embedder = ts::make_embedder(cfg.embedding);
  const auto& pair = ts::find_preset_pair(preset.empty() ? cfg.preset : preset);
  ts::EmbedOptions opts;
  opts.concurrency = cfg.concurrency;
  opts.batch_size = cfg.batch_size;
  auto r = ts::run_embed(manifest, *embedder, pair, opts);
  std::cout << "embedded " << r.documents << " documents with " << embedder->id() << " (preset " << pair.id << "): "
            << r.stats.cache_hits << " cache hits, " << r.stats.provider_texts << " texts in "
            << r.stats.provider_calls << " provider calls\n";
  return 0;
}

int cmd_index(const Common& common, ts::HnswParams params) {
  auto cfg = common.load();
  auto manifest = ts::Manifest::load(cfg.workdir);
  auto r = ts::run_index(manifest, params);
  std::printf("indexed %zu vectors (m=%u, ef_construction=%u)\n", r.size, params.m, params.ef_construction);
  std::printf("recall audit: %.4f mean recall@%zu over %zu sampled queries (threshold %.2f)\n", r.audit.mean_recall,
              r.audit.k, r.audit.sample_size, r.audit.threshold);
  if (!r.audit.passed()) std::printf("warning: recall audit below threshold; consider a larger ef_construction or m\n");
  return 0;
}

struct Loaded {
  ts::Config cfg;
  std::unique_ptr<ts::EmbeddingProvider> embedder;
  std::unique_ptr<ts::TextGenerator> augmenter;
  ts::SearchArtifacts artifacts;
  std::unique_ptr<ts::SearchEngine> engine;
};

std::unique_ptr<Loaded> load_engine(const Common& common) {
  auto l = std::make_unique<Loaded>();
  l->cfg = common.load();
  ts::Manifest::load(l->cfg.workdir).require_current("index", "search");
  l->embedder = ts::make_embedder(l->cfg.embedding);
  l->augmenter = ts::make_generator(l->cfg.augmentation, ts::GeneratorRole::augmentation);
  l->artifacts = ts::load_search_artifacts(l->cfg.corpus_file(), l->cfg.informal_file(), l->cfg.index_file(),
                                           *l->embedder);
  ts::AugmentOptions aug;
  aug.timeout = l->cfg.request_timeout;
  l->engine = std::make_unique<ts::SearchEngine>(l->artifacts.corpus, *l->artifacts.index, *l->embedder,
                                                 l->augmenter.get(), l->artifacts.presets, aug);
  return l;
}

int cmd_search(const Common& common, const std::string& query, std::optional<std::size_t> k,
               std::optional<bool> augment, bool json) {
  if (query.empty()) throw ts::UsageError("query is empty");
  auto l = load_engine(common);
  ts::SearchOptions opts;
  opts.k = k.value_or(l->cfg.default_k);
  opts.augment = augment.value_or(l->cfg.augment);
  auto outcome = l->engine->run_search(query, opts);
  if (json) {
    std::cout << ts::to_json(outcome).dump() << "\n";
    return 0;
  }
  if (outcome.augmented_query && outcome.augmented_query->augmented)
    std::cout << "augmented: " << outcome.augmented_query->informal_name << "\n";
  std::printf("%4s  %-48s %7s  %s\n", "rank", "name", "score", "informal name");
  for (const auto& r : outcome.results) {
    std::string informal = r.informal ? r.informal->informal_name : "-";
    std::printf("%4zu  %-48s %7.4f  %s\n", r.rank, r.theorem->name.c_str(), r.score, informal.c_str());
  }
  return 0;
}

int cmd_bench(const Common& common, const std::string& benchmark, const std::string& engine_name,
              const std::string& run_path, const std::string& idcg, std::optional<bool> augment, bool json) {
  auto groups = ts::bench::load_benchmark(benchmark);
  ts::bench::EvaluateOptions eval;
  auto mode = ts::bench::parse_idcg_mode(idcg);
  if (!mode) throw ts::UsageError("--idcg-mode must be 'retrieved' or 'global'");
  eval.idcg_mode = *mode;
  const std::size_t k = std::max({eval.k_ndcg, eval.k_precision, eval.k_recall});

  std::unique_ptr<Loaded> loaded;
  ts::bench::Engine engine;
  if (engine_name == "runfile") {
    if (run_path.empty()) throw ts::UsageError("--engine runfile needs --run <file>");
    engine = ts::bench::run_file_engine(ts::bench::load_run_file(run_path));
  } else if (engine_name == "bm25") {
    auto cfg = common.load();
    ts::Manifest::load(cfg.workdir).require_current("ingest", "bench");
    auto records = ts::load_corpus_file(cfg.corpus_file());
    std::unordered_map<std::string, ts::InformalPair> pairs;
    if (std::filesystem::exists(cfg.informal_file())) pairs = ts::load_pairs(cfg.informal_file());
    auto kind = pairs.empty() ? ts::DocumentKind::formal : ts::DocumentKind::bilingual;
    auto index = std::make_shared<const ts::Bm25Index>(ts::corpus_documents(records, pairs, kind));
    engine = ts::bm25_engine(index, k);
  } else if (engine_name == "semantic") {
    loaded = load_engine(common);
    engine = ts::semantic_engine(*loaded->engine, k, augment.value_or(loaded->cfg.augment));
  } else {
    throw ts::UsageError("--engine must be semantic, bm25 or runfile");
  }
  auto report = ts::bench::evaluate(engine, groups, eval);
  if (json) {
    auto j = ts::bench::to_json(report);
    j["engine"] = engine_name;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << ts::bench::format_report(report, engine_name);
  }
  return 0;
}

int cmd_serve(const Common& common, const std::string& host, std::optional<int> port, bool cors) {
  auto cfg = common.load();
  if (!host.empty()) cfg.host = host;
  if (port) cfg.port = *port;
  if (cors) cfg.cors = true;
  ts::Manifest::load(cfg.workdir).require_current("index", "serve");
  auto service = ts::SearchService::from_config(cfg);
  int bound = service->bind();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread watcher([&] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service->stop();
  });
  std::printf("serving %zu theorems on http://%s:%d\n", service->engine().corpus().records.size(), cfg.host.c_str(),
              bound);
  std::fflush(stdout);
  service->run();
  g_stop = true;
  watcher.join();
  std::printf("stopped\n");
  return 0;
}

int cmd_synth(std::size_t count, std::uint64_t seed, const std::string& output) {
  if (count == 0) throw ts::UsageError("--count must be >= 1");
  ts::detail::write_file_atomic(output, ts::generate_synthetic_corpus(count, seed));
  std::cout << "wrote synthetic corpus with " << count << " theorems to " << output << "\n";
  return 0;
}

int cmd_selfbench(const Common& common, const std::string& output) {
  auto cfg = common.load();
  ts::Manifest::load(cfg.workdir).require_current("informalize", "selfbench");
  auto groups = ts::self_retrieval_benchmark(ts::load_corpus_file(cfg.corpus_file()), ts::load_pairs(cfg.informal_file()));
  ts::detail::write_file_atomic(output, ts::bench::to_json(groups).dump(2) + "\n");
  std::cout << "wrote self-retrieval benchmark with " << groups.size() << " groups to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thmsearch: semantic search over formal theorem libraries"};
  app.require_subcommand(1);
  Common common;

  auto* ingest = app.add_subcommand("ingest", "parse and validate a corpus export into the working directory");
  std::string corpus;
  bool strict = false, all_kinds = false;
  add_common(ingest, common, false);
  ingest->add_option("--corpus", corpus, "interchange JSONL file")->required();
  ingest->add_flag("--strict", strict, "treat any diagnostic as fatal");
  ingest->add_flag("--all-kinds", all_kinds, "keep definitions and other declarations as searchable records");

  auto* informalize = app.add_subcommand("informalize", "generate informal names and statements");
  add_common(informalize, common, true);

  auto* embed = app.add_subcommand("embed", "embed corpus documents");
  std::string preset;
  add_common(embed, common, true);
  embed->add_option("--preset", preset, "instruction preset pair (default from config: bilingual)");

  auto* index = app.add_subcommand("index", "build the HNSW index from the embeddings");
  ts::HnswParams params;
  std::uint32_t m = params.m;
  add_common(index, common, false);
  index->add_option("--m", m, "max neighbors per node above layer 0 (layer 0 gets 2m)");
  index->add_option("--ef-construction", params.ef_construction, "beam width while inserting");
  index->add_option("--ef-search", params.ef_search, "default beam width for queries");
  index->add_option("--seed", params.seed, "level-assignment seed");

  auto* search = app.add_subcommand("search", "search the index");
  std::string query;
  std::optional<std::size_t> k;
  bool augment_flag = true, json = false;
  add_common(search, common, true);
  search->add_option("query", query, "search query")->required();
  search->add_option("--k", k, "number of results")->check(CLI::Range(1, 100));
  auto* search_aug = search->add_flag("--augment,!--no-augment", augment_flag, "rewrite the query before embedding");
  search->add_flag("--json", json, "print the service response body");

  auto* bench = app.add_subcommand("bench", "evaluate an engine on a benchmark file");
  std::string benchmark, engine = "semantic", run_path, idcg = "retrieved";
  bool bench_json = false, bench_augment = true;
  add_common(bench, common, true);
  bench->add_option("--benchmark", benchmark, "benchmark JSON file")->required();
  bench->add_option("--engine", engine, "semantic | bm25 | runfile");
  bench->add_option("--run", run_path, "run file for --engine runfile");
  bench->add_option("--idcg-mode", idcg, "retrieved | global");
  auto* bench_aug = bench->add_flag("--augment,!--no-augment", bench_augment, "augment queries (semantic engine)");
  bench->add_flag("--json", bench_json, "machine-readable report");

  auto* serve = app.add_subcommand("serve", "run the HTTP search service");
  std::string host;
  std::optional<int> port;
  bool cors = false;
  add_common(serve, common, true);
  serve->add_option("--host", host, "listen address");
  serve->add_option("--port", port, "listen port (0 picks a free one)");
  serve->add_flag("--cors", cors, "allow cross-origin requests");

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus export");
  std::size_t count = 500;
  std::uint64_t seed = 7;
  std::string synth_out;
  synth->add_option("--count", count, "number of theorems");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--output", synth_out, "output JSONL path")->required();

  auto* selfbench = app.add_subcommand("selfbench", "write a self-retrieval benchmark for the informalized corpus");
  std::string selfbench_out;
  add_common(selfbench, common, false);
  selfbench->add_option("--output", selfbench_out, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(common, corpus, strict, all_kinds);
    if (*informalize) return cmd_informalize(common);
    if (*embed) return cmd_embed(common, preset);
    if (*index) {
      auto p = ts::HnswParams::with_m(m);
      p.ef_construction = params.ef_construction;
      p.ef_search = params.ef_search;
      p.seed = params.seed;
      p.validate();
      return cmd_index(common, p);
    }
    if (*search) {
      std::optional<bool> aug;
      if (search_aug->count() > 0) aug = augment_flag;
      return cmd_search(common, query, k, aug, json);
    }
    if (*bench) {
      std::optional<bool> aug;
      if (bench_aug->count() > 0) aug = bench_augment;
      return cmd_bench(common, benchmark, engine, run_path, idcg, aug, bench_json);
    }
    if (*serve) return cmd_serve(common, host, port, cors);
    if (*synth) return cmd_synth(count, seed, synth_out);
    if (*selfbench) return cmd_selfbench(common, selfbench_out);
  } catch (const ts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ts::ErrorClass::data);
  }
  return 0;
}
