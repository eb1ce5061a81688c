#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "cohertrace/errors.hpp"
#include "cohertrace/score_cache.hpp"
#include "cohertrace/sweep.hpp"
#include "cohertrace/synth_corpus.hpp"
#include "io_util.hpp"
#include "support.hpp"

using namespace cohertrace;
using nlohmann::json;

namespace {

std::filesystem::path small_corpus(const testing::TempDir& dir, std::size_t per_severity = 4) {
  auto cfg = load_synth_config(testing::data_dir() / "synth" / "calibration.json");
  cfg.counts_per_severity = {per_severity, per_severity, per_severity, per_severity, per_severity};
  cfg.length_min = 40;
  cfg.length_max = 90;
  const auto path = dir / "corpus.jsonl";
  save_corpus(generate_corpus(cfg, 3), path, CorpusFormat::Jsonl);
  return path;
}

SweepConfig base_config(const testing::TempDir& dir) {
  SweepConfig cfg;
  cfg.corpus_path = small_corpus(dir);
  cfg.backends = {{"hash", std::nullopt, ""}};
  cfg.windows = {8, 16, 64};
  cfg.output_dir = dir / "out";
  return cfg;
}

BackendPtr hash_factory(const BackendDescriptor& d) { return std::make_shared<testing::HashBackend>(true, d.source); }

std::string slurp(const std::filesystem::path& p) { return detail::read_file(p); }

}  // namespace

TEST_SUITE("sweep") {

TEST_CASE("config parsing") {
  testing::TempDir dir;
  const auto text = R"({
    "corpus": {"path": "data/c.jsonl", "schema": {"id": "pid", "scheme": "TALD"}},
    "backends": ["ref:models/a.bin", {"source": "http://localhost:9", "windows": [8], "label": "LM"}],
    "windows": [8, 64],
    "aggregates": ["MAX", "global"],
    "cache": "cache.bin",
    "concurrency": 2,
    "output_dir": "results",
    "seed": 7
  })";
  const auto cfg = parse_sweep_config(text, dir.path());
  CHECK(cfg.corpus_path == dir / "data/c.jsonl");
  CHECK(cfg.schema.id_field == "pid");
  CHECK(cfg.backends[0].source == "ref:" + (dir / "models/a.bin").string());
  CHECK(cfg.backends[1].label == "LM");
  CHECK(*cfg.backends[1].windows == std::vector<std::size_t>{8});
  CHECK(cfg.aggregates == std::set<SweepAggregate>{SweepAggregate::Max, SweepAggregate::Global});
  CHECK(*cfg.cache_path == dir / "cache.bin");
  CHECK(cfg.concurrency == 2);
  CHECK(cfg.profile_windows == std::vector<std::size_t>{64});

  CHECK_THROWS_AS(parse_sweep_config(R"({"corpus": {"path": "x"}, "backends": ["ref:a"], "colour": 1})", dir.path()),
                  ConfigError);
  CHECK_THROWS_AS(parse_sweep_config(R"({"corpus": {"path": "x"}, "backends": []})", dir.path()), ConfigError);
  CHECK_THROWS_AS(parse_sweep_config(R"({"corpus": {"path": "x"}, "backends": ["ref:a"], "windows": [1]})", dir.path()),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_sweep_config(R"({"corpus": {"path": "x"}, "backends": [{"source": "ref:a", "windows": [32]}],
                            "windows": [8]})",
                         dir.path()),
      ConfigError);
  CHECK_THROWS_AS(parse_sweep_config("[1, 2", dir.path()), ConfigError);
  // Without window 64 there is no default profile export.
  CHECK(parse_sweep_config(R"({"corpus": {"path": "x"}, "backends": ["ref:a"], "windows": [8]})", dir.path())
            .profile_windows.empty());
}

TEST_CASE("unknown backend sources are rejected") {
  CHECK_THROWS_AS(open_backend({"ftp://x", std::nullopt, ""}), ConfigError);
}

TEST_CASE("score lines round trip") {
  TranscriptScore s;
  s.transcript_id = "t1";
  s.backend_id = "b";
  s.global_ppl = 12.345678901234567;
  s.per_window[WindowSpec(8)] = {20.5, 15.25, 3, false};
  s.per_window[WindowSpec(128)] = {12.345678901234567, 12.345678901234567, 1, true};
  const auto line = score_to_json(s);
  CHECK(line.rfind(R"({"transcript_id":"t1","backend_id":"b","global_ppl":12.345678901234567,"windows":{"8":)", 0) == 0);
  const auto back = score_from_json(line);
  CHECK(back.global_ppl == s.global_ppl);
  CHECK(back.per_window.at(WindowSpec(128)).fallback_global);
  CHECK(back.per_window.at(WindowSpec(8)).mean_ppl == 15.25);
  CHECK(scores_from_jsonl(scores_to_jsonl(std::vector<TranscriptScore>{s, s})).size() == 2);
}

TEST_CASE("sweep writes tables, profiles and manifest") {
  testing::TempDir dir;
  auto cfg = base_config(dir);
  const auto result = run_sweep(cfg, hash_factory);
  CHECK(result.scores.size() == 20);
  for (const auto* name : {"scores.jsonl", "table_max.md", "table_max.csv", "table_mean.md", "table_mean.csv",
                           "profiles_w64.csv", "manifest.json"}) {
    CHECK(std::filesystem::exists(cfg.output_dir / name));
  }
  const auto& max = result.tables.at(SweepAggregate::Max);
  CHECK(max.windows == std::vector<std::size_t>{8, 16, 64});
  CHECK(max.has_global);
  CHECK(max.rows == std::vector<std::string>{"hash"});

  const auto manifest = json::parse(slurp(cfg.output_dir / "manifest.json"));
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["config_sha256"].get<std::string>().size() == 64);
  CHECK(manifest["backends"][0]["backend_id"] == "hash");
  CHECK(manifest["transcripts"].size() == 20);

  const auto rep = run_report(cfg.output_dir, TableFormat::Markdown);
  CHECK(rep.rendered.at(SweepAggregate::Max) == render_table(max, TableFormat::Markdown));
  CHECK(rep.rendered.at(SweepAggregate::Mean) == slurp(cfg.output_dir / "table_mean.md"));
}

TEST_CASE("sweep output is independent of concurrency") {
  testing::TempDir dir;
  auto cfg = base_config(dir);
  run_sweep(cfg, hash_factory);
  const auto serial = slurp(cfg.output_dir / "scores.jsonl");
  const auto serial_table = slurp(cfg.output_dir / "table_max.md");
  cfg.concurrency = 3;
  cfg.output_dir = dir / "out3";
  run_sweep(cfg, hash_factory);
  CHECK(slurp(cfg.output_dir / "scores.jsonl") == serial);
  CHECK(slurp(cfg.output_dir / "table_max.md") == serial_table);
}

TEST_CASE("per-backend windows leave empty cells") {
  testing::TempDir dir;
  auto cfg = base_config(dir);
  cfg.backends = {{"full", std::nullopt, ""}, {"part", std::vector<std::size_t>{16}, "Partial"}};
  const auto result = run_sweep(cfg, hash_factory);
  const auto& t = result.tables.at(SweepAggregate::Max);
  CHECK(t.rows == std::vector<std::string>{"full", "Partial"});
  CHECK_FALSE(t.cells[1][0].has_value());
  CHECK(t.cells[1][1].has_value());
  CHECK(*t.row_max[1] == 1);
  CHECK(slurp(cfg.output_dir / "table_max.md").find("| Partial | - |") != std::string::npos);
}

TEST_CASE("backend failure aborts with partial results") {
  testing::TempDir dir;
  auto cfg = base_config(dir);
  const auto corpus = load_corpus(cfg.corpus_path, CorpusFormat::Jsonl);
  // Poison a word that appears only late in the corpus.
  std::string poison;
  const auto last = testing::split_ws(corpus.transcripts.back().text);
  for (const auto& w : last) {
    bool elsewhere = false;
    for (std::size_t i = 0; i + 1 < corpus.transcripts.size() && !elsewhere; ++i) {
      const auto words = testing::split_ws(corpus.transcripts[i].text);
      elsewhere = std::find(words.begin(), words.end(), w) != words.end();
    }
    if (!elsewhere) {
      poison = w;
      break;
    }
  }
  REQUIRE_FALSE(poison.empty());
  auto factory = [&](const BackendDescriptor&) -> BackendPtr { return std::make_shared<testing::PoisonBackend>(poison); };
  CHECK_THROWS_AS(run_sweep(cfg, factory), BackendError);
  const auto manifest = json::parse(slurp(cfg.output_dir / "manifest.json"));
  CHECK(manifest["status"] == "aborted");
  CHECK(manifest["error"].get<std::string>().find(corpus.transcripts.back().id) != std::string::npos);
  CHECK(manifest["completed"].size() == 19);
  CHECK(scores_from_jsonl(slurp(cfg.output_dir / "scores.jsonl")).size() == 19);
  CHECK_THROWS_AS(run_report(cfg.output_dir, TableFormat::Markdown), Error);
}

TEST_CASE("cached rerun makes no backend calls") {
  testing::TempDir dir;
  auto cfg = base_config(dir);
  cfg.cache_path = dir / "cache.bin";
  auto inner = std::make_shared<testing::HashBackend>(true, "hash");
  std::shared_ptr<CountingBackend> counting;
  auto factory = [&](const BackendDescriptor&) -> BackendPtr {
    counting = std::make_shared<CountingBackend>(inner);
    return counting;
  };
  run_sweep(cfg, factory);
  CHECK(counting->calls() > 0);
  const auto cold = slurp(cfg.output_dir / "scores.jsonl");
  run_sweep(cfg, factory);
  CHECK(counting->calls() == 0);
  CHECK(slurp(cfg.output_dir / "scores.jsonl") == cold);
}

TEST_CASE("unopenable cache degrades to uncached scoring") {
  testing::TempDir dir;
  auto cfg = base_config(dir);
  cfg.cache_path = dir.path();
  CHECK_NOTHROW(run_sweep(cfg, hash_factory));
}

TEST_CASE("constant ratings give empty cells, not an error") {
  testing::TempDir dir;
  {
    std::ofstream out(dir / "flat.jsonl");
    for (int i = 0; i < 5; ++i) out << R"({"id":"t)" << i << R"(","text":"a b c d e f g h i j k","rating":2})" << "\n";
  }
  SweepConfig cfg;
  cfg.corpus_path = dir / "flat.jsonl";
  cfg.backends = {{"hash", std::nullopt, ""}};
  cfg.windows = {8};
  cfg.profile_windows.clear();
  cfg.output_dir = dir / "out";
  const auto result = run_sweep(cfg, hash_factory);
  CHECK_FALSE(result.tables.at(SweepAggregate::Max).cells[0][0].has_value());
}

}
