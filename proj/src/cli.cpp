#include "cohertrace/cli.hpp"

#include <cstdlib>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cohertrace/errors.hpp"
#include "cohertrace/ngram_model.hpp"
#include "cohertrace/score_cache.hpp"
#include "cohertrace/sweep.hpp"
#include "cohertrace/synth_corpus.hpp"
#include "io_util.hpp"
#include "log.hpp"

#ifndef COHERTRACE_VERSION
#define COHERTRACE_VERSION "dev"
#endif

namespace cohertrace {

namespace {

std::vector<std::size_t> parse_windows(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto v = detail::parse_double(item);
    if (v < 2 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError("bad window size '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("--windows needs at least one size");
  return out;
}

BackendPtr maybe_cached(BackendPtr backend, const std::optional<std::filesystem::path>& cache_path) {
  if (!cache_path) return backend;
  try {
    return cached(std::move(backend), ScoreCache::open(*cache_path));
  } catch (const CacheIO& e) {
    detail::warn(std::string("running without cache: ") + e.what());
    return backend;
  }
}

// Environment beats the flag, which beats the config file.
std::optional<std::filesystem::path> effective_cache(const std::string& flag,
                                                     const std::optional<std::filesystem::path>& config) {
  if (const char* env = std::getenv(std::string(kCacheEnvVar).c_str()); env && *env) return std::filesystem::path(env);
  if (!flag.empty()) return std::filesystem::path(flag);
  return config;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Perplexity-based coherence scoring of speech transcripts", "cohertrace"};
  app.set_version_flag("--version", COHERTRACE_VERSION);
  app.require_subcommand(1);

  std::string config_path, out_path, cache_flag, backend_src, text_file, in_path, format = "markdown", windows;
  std::uint64_t seed = 0;
  int concurrency = 0;
  int order = 2;
  double alpha = 0.1;
  std::uint64_t min_count = 1;
  std::vector<std::string> train_inputs;

  auto* sweep = app.add_subcommand("sweep", "Score a rated corpus and correlate with ratings");
  sweep->add_option("--config", config_path, "Sweep configuration (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_path, "Output directory (overrides the config)");
  auto* sweep_seed = sweep->add_option("--seed", seed, "Seed recorded in the manifest");
  sweep->add_option("--concurrency", concurrency, "Transcripts scored at once")->check(CLI::PositiveNumber);
  sweep->add_option("--cache", cache_flag, "Score cache file");

  auto* score = app.add_subcommand("score", "Score one text file");
  score->add_option("--backend", backend_src, "ref:MODEL or server URL")->required();
  score->add_option("--text-file", text_file, "Transcript text")->required()->check(CLI::ExistingFile);
  score->add_option("--windows", windows, "Comma-separated window sizes");
  score->add_option("--cache", cache_flag, "Score cache file");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic derailment corpus");
  gen->add_option("--config", config_path, "Generator configuration (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "Corpus file (.jsonl or .csv)")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "Generator seed");

  auto* report = app.add_subcommand("report", "Rebuild tables from a finished sweep");
  report->add_option("--in", in_path, "Sweep output directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format, "markdown or csv");

  auto* train = app.add_subcommand("train", "Train a reference n-gram model");
  train->add_option("--in", train_inputs, "Training text, one sentence per line")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_path, "Model file")->required();
  train->add_option("--order", order, "n-gram order")->check(CLI::Range(1, 8));
  train->add_option("--alpha", alpha, "Add-alpha smoothing")->check(CLI::PositiveNumber);
  train->add_option("--min-count", min_count, "Vocabulary count threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sweep) {
      auto cfg = load_sweep_config(config_path);
      if (!out_path.empty()) cfg.output_dir = out_path;
      if (*sweep_seed) cfg.seed = seed;
      if (concurrency > 0) cfg.concurrency = concurrency;
      cfg.cache_path = effective_cache(cache_flag, cfg.cache_path);
      const auto result = run_sweep(cfg);
      for (auto agg : {SweepAggregate::Max, SweepAggregate::Mean, SweepAggregate::Global}) {
        auto it = result.tables.find(agg);
        if (it != result.tables.end()) out << render_table(it->second, TableFormat::Markdown) << "\n";
      }
      out << "wrote " << result.outputs.size() << " files to " << cfg.output_dir.string() << "\n";
    } else if (*score) {
      auto backend = maybe_cached(open_backend({backend_src, std::nullopt, ""}), effective_cache(cache_flag, {}));
      Transcript t;
      t.id = std::filesystem::path(text_file).filename().string();
      t.text = detail::read_file(text_file);
      std::vector<std::size_t> sizes = windows.empty() ? std::vector<std::size_t>{} : parse_windows(windows);
      const auto specs = window_specs(sizes);
      const auto s = score_transcript(t, *backend, specs);
      out << score_to_json(s) << "\n";
    } else if (*gen) {
      const auto cfg = load_synth_config(config_path);
      const auto corpus = generate_corpus(cfg, *gen_seed ? seed : cfg.seed);
      save_corpus(corpus, out_path, corpus_format_for_path(out_path));
      out << "wrote " << corpus.transcripts.size() << " transcripts to " << out_path << "\n";
    } else if (*report) {
      const auto fmt = table_format_from_string(format);
      const auto rep = run_report(in_path, fmt);
      for (const auto& [agg, text] : rep.rendered) out << text << "\n";
    } else if (*train) {
      std::vector<std::string> lines;
      for (const auto& f : train_inputs) {
        auto more = read_seed_lines(f);
        lines.insert(lines.end(), more.begin(), more.end());
      }
      const auto model = ngram_train(lines, order, alpha, min_count);
      model.save(out_path);
      out << NgramBackend(std::make_shared<const ReferenceNgramModel>(model)).backend_id() << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace cohertrace
