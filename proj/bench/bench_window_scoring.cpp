#include <benchmark/benchmark.h>

#include <filesystem>
#include <memory>

#include "cohertrace/ngram_model.hpp"
#include "cohertrace/ppl.hpp"
#include "cohertrace/ppl_serial.hpp"
#include "cohertrace/synth_corpus.hpp"

using namespace cohertrace;

namespace {

struct Fixture {
  std::shared_ptr<NgramBackend> backend;
  Transcript transcript;
  std::vector<WindowSpec> specs;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    const std::filesystem::path data = COHERTRACE_DATA_DIR;
    auto cfg = load_synth_config(data / "synth" / "calibration.json");
    const auto topics = build_topics(cfg);
    auto model = std::make_shared<const ReferenceNgramModel>(
        ngram_train(read_seed_lines(cfg.topics[0].seed_text), 2, 0.1));
    Fixture out;
    out.backend = std::make_shared<NgramBackend>(model);
    out.transcript = generate_transcript(topics, DerailmentSpec::for_severity(3, cfg.min_segment), 300, 42);
    out.specs = window_specs(std::vector<std::size_t>(std::begin(kDefaultWindowSizes), std::end(kDefaultWindowSizes)));
    return out;
  }();
  return f;
}

void BM_ScoreTranscriptSerial(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(serial::score_transcript(f.transcript, *f.backend, f.specs));
}

void BM_ScoreTranscriptParallel(benchmark::State& state) {
  const auto& f = fixture();
  const ParallelOptions opts{static_cast<int>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(score_transcript(f.transcript, *f.backend, f.specs, opts));
}

}  // namespace

BENCHMARK(BM_ScoreTranscriptSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreTranscriptParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
