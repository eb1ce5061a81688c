#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohertrace/backend.hpp"
#include "cohertrace/corpus_io.hpp"
#include "cohertrace/ppl.hpp"
#include "cohertrace/report.hpp"

namespace cohertrace {

/// Names a backend: "ref:PATH" for a saved reference model, or an
/// "http://", "https://" or "remote:URL" address of a scoring server.
struct BackendDescriptor {
  std::string source;
  /// Restricts this backend to a subset of the sweep's windows.
  std::optional<std::vector<std::size_t>> windows;
  /// Row label in reports; the backend id when empty.
  std::string label;
};

/// Opens the backend a descriptor names, without caching.
BackendPtr open_backend(const BackendDescriptor& descriptor);

enum class SweepAggregate { Global, Max, Mean };

std::string_view to_string(SweepAggregate aggregate);
SweepAggregate sweep_aggregate_from_string(std::string_view name);

inline constexpr std::string_view kCacheEnvVar = "COHERTRACE_CACHE";

struct SweepConfig {
  std::filesystem::path corpus_path;
  CorpusFormat corpus_format = CorpusFormat::Jsonl;
  CorpusSchema schema;
  std::vector<BackendDescriptor> backends;
  std::vector<std::size_t> windows{8, 16, 32, 64, 128};
  std::set<SweepAggregate> aggregates{SweepAggregate::Global, SweepAggregate::Max, SweepAggregate::Mean};
  std::optional<std::filesystem::path> cache_path;
  int concurrency = 1;
  std::filesystem::path output_dir = "results";
  std::uint64_t seed = 0;
  /// Window sizes whose full profiles are exported as plot data.
  std::vector<std::size_t> profile_windows{64};
  std::optional<ProfileGrouping> profile_grouping;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Parses a sweep configuration document. Relative paths resolve against
/// `base_dir`. Unknown keys are rejected.
SweepConfig parse_sweep_config(std::string_view json_text, const std::filesystem::path& base_dir);
SweepConfig load_sweep_config(const std::filesystem::path& path);

/// Normalized JSON form of the configuration, as recorded in manifest.json.
std::string canonical_config_json(const SweepConfig& config);

using BackendFactory = std::function<BackendPtr(const BackendDescriptor&)>;

/// One line of scores.jsonl.
std::string score_to_json(const TranscriptScore& score);
TranscriptScore score_from_json(std::string_view line);
std::string scores_to_jsonl(std::span<const TranscriptScore> scores);
std::vector<TranscriptScore> scores_from_jsonl(std::string_view text);

/// The per-backend view the correlation tables are built from.
struct BackendColumnSet {
  std::string backend_id;
  std::string label;
  std::vector<std::size_t> windows;
};

/// Spearman rho between each backend's aggregate scores and the ratings.
/// `ratings` maps transcript id to rating value; `order` fixes the pairing.
CorrelationTable correlation_table(std::span<const TranscriptScore> scores,
                                   const std::map<std::string, double>& ratings,
                                   std::span<const std::string> order, std::span<const BackendColumnSet> backends,
                                   std::span<const std::size_t> windows, SweepAggregate aggregate, bool include_global);

struct SweepResult {
  std::vector<TranscriptScore> scores;
  std::map<SweepAggregate, CorrelationTable> tables;
  std::vector<std::filesystem::path> outputs;
  std::vector<std::string> backend_ids;
};

/// Scores every transcript under every backend and window, writes
/// scores.jsonl, table_<aggregate>.{md,csv}, profiles_w<W>.csv and
/// manifest.json into the output directory. A backend failure (after the
/// backend's own retries) aborts the sweep; the completed scores and a
/// manifest with status "aborted" are written before the error propagates.
SweepResult run_sweep(const SweepConfig& config, const BackendFactory& factory = open_backend);

struct ReportOutput {
  std::map<SweepAggregate, CorrelationTable> tables;
  std::map<SweepAggregate, std::string> rendered;
  std::vector<std::filesystem::path> outputs;
};

/// Rebuilds the tables of a finished sweep from scores.jsonl and
/// manifest.json alone, without rescoring.
ReportOutput run_report(const std::filesystem::path& results_dir, TableFormat format);

}  // namespace cohertrace
