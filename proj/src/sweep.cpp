#include "cohertrace/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>

#include <json.hpp>

#include "cohertrace/errors.hpp"
#include "cohertrace/hash.hpp"
#include "cohertrace/ngram_model.hpp"
#include "cohertrace/remote_backend.hpp"
#include "cohertrace/score_cache.hpp"
#include "cohertrace/stats.hpp"
#include "io_util.hpp"
#include "log.hpp"

#ifndef COHERTRACE_VERSION
#define COHERTRACE_VERSION "dev"
#endif

namespace cohertrace {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string resolve_source(const std::filesystem::path& base, const std::string& source) {
  if (starts_with(source, "ref:")) return "ref:" + resolve(base, source.substr(4)).string();
  return source;
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

std::string aggregate_file_stem(SweepAggregate a) {
  std::string s(to_string(a));
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return "table_" + s;
}

double aggregate_value(const TranscriptScore& s, std::size_t window, SweepAggregate aggregate) {
  if (aggregate == SweepAggregate::Global) return s.global_ppl;
  const auto& w = s.per_window.at(WindowSpec(window));
  return aggregate == SweepAggregate::Max ? w.max_ppl : w.mean_ppl;
}

std::string table_caption(SweepAggregate aggregate, std::size_t n) {
  const std::string what = aggregate == SweepAggregate::Max    ? "maximum sliding-window PPL"
                           : aggregate == SweepAggregate::Mean ? "averaged sliding-window PPL"
                                                               : "global PPL";
  return "Spearman rho between " + what + " and rating (n=" + std::to_string(n) + ")";
}

}  // namespace

BackendPtr open_backend(const BackendDescriptor& descriptor) {
  const auto& src = descriptor.source;
  if (starts_with(src, "ref:")) {
    auto model = std::make_shared<const ReferenceNgramModel>(ReferenceNgramModel::load(src.substr(4)));
    return std::make_shared<NgramBackend>(std::move(model));
  }
  if (starts_with(src, "remote:")) return std::make_shared<RemoteBackend>(src.substr(7));
  if (starts_with(src, "http://") || starts_with(src, "https://")) return std::make_shared<RemoteBackend>(src);
  throw ConfigError("unrecognized backend '" + src + "' (expected ref:PATH or a URL)");
}

std::string_view to_string(SweepAggregate aggregate) {
  switch (aggregate) {
    case SweepAggregate::Global: return "GLOBAL";
    case SweepAggregate::Max: return "MAX";
    case SweepAggregate::Mean: return "MEAN";
  }
  return "?";
}

SweepAggregate sweep_aggregate_from_string(std::string_view name) {
  const auto u = upper(name);
  if (u == "GLOBAL") return SweepAggregate::Global;
  if (u == "MAX") return SweepAggregate::Max;
  if (u == "MEAN") return SweepAggregate::Mean;
  throw ConfigError("unknown aggregate '" + std::string(name) + "'");
}

void SweepConfig::validate() const {
  if (corpus_path.empty()) throw ConfigError("corpus path is required");
  if (backends.empty()) throw ConfigError("at least one backend is required");
  if (aggregates.empty()) throw ConfigError("at least one aggregate is required");
  if (windows.empty() && (aggregates.count(SweepAggregate::Max) || aggregates.count(SweepAggregate::Mean))) {
    throw ConfigError("MAX/MEAN aggregates need at least one window");
  }
  std::set<std::size_t> seen;
  for (auto w : windows) {
    if (w < 2) throw ConfigError("window sizes must be >= 2");
    if (!seen.insert(w).second) throw ConfigError("window " + std::to_string(w) + " listed twice");
  }
  for (const auto& b : backends) {
    if (!b.windows) continue;
    for (auto w : *b.windows) {
      if (!seen.count(w)) throw ConfigError("backend '" + b.source + "' uses window " + std::to_string(w) + " not in windows");
    }
  }
  for (auto w : profile_windows) {
    if (!seen.count(w)) throw ConfigError("profile window " + std::to_string(w) + " is not swept");
  }
  if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
  if (profile_grouping == ProfileGrouping::TaldBinary && schema.scheme && *schema.scheme != RatingScheme::TaldDerailment) {
    throw ConfigError("TALD_BINARY grouping needs a TALD corpus");
  }
}

SweepConfig parse_sweep_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc,
                 {"corpus", "backends", "windows", "aggregates", "cache", "concurrency", "output_dir", "seed",
                  "profiles"},
                 "config");

  SweepConfig cfg;
  try {
    const auto& corpus = doc.at("corpus");
    reject_unknown(corpus, {"path", "format", "schema"}, "corpus");
    cfg.corpus_path = resolve(base_dir, corpus.at("path").get<std::string>());
    cfg.corpus_format = corpus.contains("format") ? corpus_format_from_string(corpus["format"].get<std::string>())
                                                  : corpus_format_for_path(cfg.corpus_path);
    if (corpus.contains("schema")) {
      const auto& s = corpus["schema"];
      reject_unknown(s,
                     {"id", "text", "rating", "conceptual_disorganization", "incoherent_speech", "scheme", "bounds",
                      "speaker_filter", "name"},
                     "corpus.schema");
      if (s.contains("id")) cfg.schema.id_field = s["id"].get<std::string>();
      if (s.contains("text")) cfg.schema.text_field = s["text"].get<std::string>();
      if (s.contains("rating")) cfg.schema.rating_field = s["rating"].get<std::string>();
      if (s.contains("conceptual_disorganization")) {
        cfg.schema.conceptual_disorganization_field = s["conceptual_disorganization"].get<std::string>();
      }
      if (s.contains("incoherent_speech")) cfg.schema.incoherent_speech_field = s["incoherent_speech"].get<std::string>();
      if (s.contains("scheme")) cfg.schema.scheme = rating_scheme_from_string(s["scheme"].get<std::string>());
      if (s.contains("bounds")) {
        const auto b = s["bounds"].get<std::vector<double>>();
        if (b.size() != 2) throw ConfigError("corpus.schema.bounds must be [min, max]");
        cfg.schema.custom_bounds = RatingBounds{b[0], b[1]};
      }
      if (s.contains("speaker_filter")) {
        const auto& f = s["speaker_filter"];
        reject_unknown(f, {"keep", "separator"}, "corpus.schema.speaker_filter");
        SpeakerFilter filter;
        filter.keep = f.at("keep").get<std::vector<std::string>>();
        if (f.contains("separator")) filter.separator = f["separator"].get<std::string>();
        cfg.schema.speaker_filter = std::move(filter);
      }
      if (s.contains("name")) cfg.schema.name = s["name"].get<std::string>();
    }

    for (const auto& b : doc.at("backends")) {
      BackendDescriptor d;
      if (b.is_string()) {
        d.source = b.get<std::string>();
      } else {
        reject_unknown(b, {"source", "windows", "label"}, "backends[]");
        d.source = b.at("source").get<std::string>();
        if (b.contains("windows")) d.windows = b["windows"].get<std::vector<std::size_t>>();
        if (b.contains("label")) d.label = b["label"].get<std::string>();
      }
      d.source = resolve_source(base_dir, d.source);
      cfg.backends.push_back(std::move(d));
    }
    if (doc.contains("windows")) cfg.windows = doc["windows"].get<std::vector<std::size_t>>();
    if (doc.contains("aggregates")) {
      cfg.aggregates.clear();
      for (const auto& a : doc["aggregates"]) cfg.aggregates.insert(sweep_aggregate_from_string(a.get<std::string>()));
    }
    if (doc.contains("cache") && !doc["cache"].is_null()) cfg.cache_path = resolve(base_dir, doc["cache"].get<std::string>());
    if (doc.contains("concurrency")) cfg.concurrency = doc["concurrency"].get<int>();
    if (doc.contains("output_dir")) cfg.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
    if (doc.contains("seed")) cfg.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("profiles")) {
      const auto& p = doc["profiles"];
      reject_unknown(p, {"windows", "grouping"}, "profiles");
      if (p.contains("windows")) cfg.profile_windows = p["windows"].get<std::vector<std::size_t>>();
      if (p.contains("grouping")) cfg.profile_grouping = profile_grouping_from_string(p["grouping"].get<std::string>());
    } else {
      // Default plot data for window 64 only when it is swept.
      if (std::find(cfg.windows.begin(), cfg.windows.end(), 64) == cfg.windows.end()) cfg.profile_windows.clear();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_sweep_config(text, path.parent_path());
}

std::string canonical_config_json(const SweepConfig& config) {
  ordered_json doc;
  ordered_json corpus;
  corpus["path"] = config.corpus_path.string();
  corpus["format"] = config.corpus_format == CorpusFormat::Jsonl ? "jsonl" : "csv";
  ordered_json schema;
  schema["id"] = config.schema.id_field;
  schema["text"] = config.schema.text_field;
  schema["rating"] = config.schema.rating_field;
  if (config.schema.conceptual_disorganization_field) {
    schema["conceptual_disorganization"] = *config.schema.conceptual_disorganization_field;
  }
  if (config.schema.incoherent_speech_field) schema["incoherent_speech"] = *config.schema.incoherent_speech_field;
  if (config.schema.scheme) schema["scheme"] = std::string(to_string(*config.schema.scheme));
  if (config.schema.custom_bounds) schema["bounds"] = {config.schema.custom_bounds->min, config.schema.custom_bounds->max};
  if (config.schema.speaker_filter) {
    schema["speaker_filter"] = {{"keep", config.schema.speaker_filter->keep},
                                {"separator", config.schema.speaker_filter->separator}};
  }
  if (config.schema.name) schema["name"] = *config.schema.name;
  corpus["schema"] = schema;
  doc["corpus"] = corpus;
  ordered_json backends = ordered_json::array();
  for (const auto& b : config.backends) {
    ordered_json d;
    d["source"] = b.source;
    if (b.windows) d["windows"] = *b.windows;
    if (!b.label.empty()) d["label"] = b.label;
    backends.push_back(d);
  }
  doc["backends"] = backends;
  doc["windows"] = config.windows;
  ordered_json aggs = ordered_json::array();
  for (auto a : config.aggregates) aggs.push_back(std::string(to_string(a)));
  doc["aggregates"] = aggs;
  doc["cache"] = config.cache_path ? ordered_json(config.cache_path->string()) : ordered_json(nullptr);
  doc["concurrency"] = config.concurrency;
  doc["output_dir"] = config.output_dir.string();
  doc["seed"] = config.seed;
  ordered_json profiles;
  profiles["windows"] = config.profile_windows;
  if (config.profile_grouping) {
    profiles["grouping"] = *config.profile_grouping == ProfileGrouping::TaldBinary ? "TALD_BINARY" : "RATING_VALUE";
  }
  doc["profiles"] = profiles;
  return doc.dump(2);
}

std::string score_to_json(const TranscriptScore& score) {
  ordered_json doc;
  doc["transcript_id"] = score.transcript_id;
  doc["backend_id"] = score.backend_id;
  doc["global_ppl"] = score.global_ppl;
  ordered_json windows = ordered_json::object();
  for (const auto& [spec, agg] : score.per_window) {
    ordered_json w;
    w["max"] = agg.max_ppl;
    w["mean"] = agg.mean_ppl;
    w["n_windows"] = agg.n_windows;
    w["fallback"] = agg.fallback_global;
    windows[std::to_string(spec.size())] = w;
  }
  doc["windows"] = windows;
  return doc.dump();
}

TranscriptScore score_from_json(std::string_view line) {
  try {
    const json doc = json::parse(line);
    TranscriptScore s;
    s.transcript_id = doc.at("transcript_id").get<std::string>();
    s.backend_id = doc.at("backend_id").get<std::string>();
    s.global_ppl = doc.at("global_ppl").get<double>();
    for (const auto& [key, w] : doc.at("windows").items()) {
      WindowAggregate agg;
      agg.max_ppl = w.at("max").get<double>();
      agg.mean_ppl = w.at("mean").get<double>();
      agg.n_windows = w.at("n_windows").get<std::size_t>();
      agg.fallback_global = w.at("fallback").get<bool>();
      s.per_window[WindowSpec(static_cast<std::size_t>(detail::parse_double(key)))] = agg;
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed score line: ") + e.what());
  }
}

std::string scores_to_jsonl(std::span<const TranscriptScore> scores) {
  std::string out;
  for (const auto& s : scores) {
    out += score_to_json(s);
    out.push_back('\n');
  }
  return out;
}

std::vector<TranscriptScore> scores_from_jsonl(std::string_view text) {
  std::vector<TranscriptScore> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    if (!normalize_text(line).empty()) out.push_back(score_from_json(line));
    pos = nl + 1;
  }
  return out;
}

CorrelationTable correlation_table(std::span<const TranscriptScore> scores,
                                   const std::map<std::string, double>& ratings,
                                   std::span<const std::string> order, std::span<const BackendColumnSet> backends,
                                   std::span<const std::size_t> windows, SweepAggregate aggregate,
                                   bool include_global) {
  CorrelationTable table;
  table.caption = table_caption(aggregate, order.size());
  if (aggregate != SweepAggregate::Global) {
    table.windows.assign(windows.begin(), windows.end());
    std::sort(table.windows.begin(), table.windows.end());
  }
  table.has_global = include_global || aggregate == SweepAggregate::Global;

  std::map<std::pair<std::string, std::string>, const TranscriptScore*> index;
  for (const auto& s : scores) index[{s.backend_id, s.transcript_id}] = &s;

  std::vector<double> y;
  y.reserve(order.size());
  for (const auto& id : order) y.push_back(ratings.at(id));

  auto correlate = [&](const std::string& backend_id, std::optional<std::size_t> window,
                       SweepAggregate agg) -> std::optional<CorrelationResult> {
    std::vector<double> x;
    x.reserve(order.size());
    for (const auto& id : order) {
      auto it = index.find({backend_id, id});
      if (it == index.end()) throw Error("no score for transcript '" + id + "' under " + backend_id);
      x.push_back(aggregate_value(*it->second, window.value_or(0), agg));
    }
    try {
      return spearman_test(x, y);
    } catch (const DegenerateInput& e) {
      detail::warn(backend_id + ": correlation undefined: " + e.what());
      return std::nullopt;
    }
  };

  for (const auto& b : backends) {
    table.rows.push_back(b.label.empty() ? b.backend_id : b.label);
    std::vector<std::optional<CorrelationResult>> row;
    for (auto w : table.windows) {
      const bool swept = std::find(b.windows.begin(), b.windows.end(), w) != b.windows.end();
      row.push_back(swept ? correlate(b.backend_id, w, aggregate) : std::nullopt);
    }
    if (table.has_global) row.push_back(correlate(b.backend_id, std::nullopt, SweepAggregate::Global));
    table.cells.push_back(std::move(row));
  }
  mark_row_maxima(table);
  return table;
}

namespace {

struct PreparedBackend {
  BackendPtr backend;
  BackendColumnSet columns;
  std::vector<WindowSpec> specs;
  std::vector<WindowSpec> keep;
  std::string source;
};

void write_manifest(const SweepConfig& config, const RatedCorpus& corpus, const std::vector<PreparedBackend>& backends,
                    const std::vector<std::filesystem::path>& outputs, const std::string& status,
                    const std::vector<std::pair<std::string, std::string>>& completed, const std::string& error) {
  const auto canonical = canonical_config_json(config);
  ordered_json m;
  m["tool"] = "cohertrace";
  m["version"] = COHERTRACE_VERSION;
  m["status"] = status;
  if (!error.empty()) m["error"] = error;
  m["config_sha256"] = to_hex(sha256(canonical));
  m["config"] = ordered_json::parse(canonical);
  m["seed"] = config.seed;
  ordered_json c;
  c["path"] = config.corpus_path.string();
  c["name"] = corpus.name;
  c["scheme"] = std::string(to_string(corpus.scheme));
  c["n_transcripts"] = corpus.transcripts.size();
  m["corpus"] = c;
  ordered_json bs = ordered_json::array();
  for (const auto& b : backends) {
    ordered_json d;
    d["backend_id"] = b.columns.backend_id;
    d["label"] = b.columns.label;
    d["source"] = b.source;
    d["windows"] = b.columns.windows;
    bs.push_back(d);
  }
  m["backends"] = bs;
  m["windows"] = config.windows;
  ordered_json aggs = ordered_json::array();
  for (auto a : config.aggregates) aggs.push_back(std::string(to_string(a)));
  m["aggregates"] = aggs;
  ordered_json transcripts = ordered_json::array();
  for (const auto& t : corpus.transcripts) transcripts.push_back({{"id", t.id}, {"rating", t.rating.value}});
  m["transcripts"] = transcripts;
  ordered_json mapping;
  mapping["statistic"] = "spearman rho of (score field, transcripts[].rating) over transcripts[] order, per backend_id";
  mapping["MAX"] = "windows.<size>.max";
  mapping["MEAN"] = "windows.<size>.mean";
  mapping["GLOBAL"] = "global_ppl";
  m["table_cell_source"] = mapping;
  ordered_json outs = ordered_json::array();
  for (const auto& p : outputs) outs.push_back(p.filename().string());
  m["outputs"] = outs;
  if (status != "complete") {
    ordered_json done = ordered_json::array();
    for (const auto& [b, t] : completed) done.push_back({{"backend_id", b}, {"transcript_id", t}});
    m["completed"] = done;
  }
  detail::write_file_atomic(config.output_dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace

SweepResult run_sweep(const SweepConfig& config, const BackendFactory& factory) {
  config.validate();
  const auto corpus = load_corpus(config.corpus_path, config.corpus_format, config.schema);
  std::filesystem::create_directories(config.output_dir);

  std::shared_ptr<ScoreCache> cache;
  if (config.cache_path) {
    try {
      cache = ScoreCache::open(*config.cache_path);
    } catch (const CacheIO& e) {
      detail::warn(std::string("running without cache: ") + e.what());
    }
  }

  std::vector<PreparedBackend> backends;
  for (const auto& d : config.backends) {
    PreparedBackend pb;
    pb.source = d.source;
    pb.backend = factory(d);
    if (!pb.backend) throw ConfigError("backend factory returned nothing for '" + d.source + "'");
    if (cache) pb.backend = cached(pb.backend, cache);
    pb.columns.backend_id = pb.backend->backend_id();
    pb.columns.label = d.label;
    pb.columns.windows = d.windows ? *d.windows : config.windows;
    std::sort(pb.columns.windows.begin(), pb.columns.windows.end());
    pb.specs = window_specs(pb.columns.windows);
    for (auto w : config.profile_windows) {
      if (std::find(pb.columns.windows.begin(), pb.columns.windows.end(), w) != pb.columns.windows.end()) {
        pb.keep.emplace_back(w);
      }
    }
    backends.push_back(std::move(pb));
  }
  for (std::size_t i = 0; i < backends.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (backends[i].columns.backend_id == backends[j].columns.backend_id) {
        throw ConfigError("backend '" + backends[i].columns.backend_id + "' listed twice");
      }
    }
  }

  const std::size_t n_transcripts = corpus.transcripts.size();
  const std::size_t n_jobs = backends.size() * n_transcripts;
  std::vector<std::optional<ScoredTranscript>> results(n_jobs);
  std::vector<std::exception_ptr> errors(n_jobs);
  const auto count = static_cast<long long>(n_jobs);
  std::atomic<bool> failed{false};
#pragma omp parallel for num_threads(config.concurrency) schedule(dynamic)
  for (long long job = 0; job < count; ++job) {
    const auto j = static_cast<std::size_t>(job);
    if (failed.load()) continue;
    const auto& pb = backends[j / n_transcripts];
    const auto& t = corpus.transcripts[j % n_transcripts];
    try {
      results[j] = score_transcript_with_profiles(t, *pb.backend, pb.specs, pb.keep, ParallelOptions{1});
    } catch (...) {
      errors[j] = std::current_exception();
      failed.store(true);
    }
  }

  SweepResult result;
  for (const auto& pb : backends) result.backend_ids.push_back(pb.columns.backend_id);
  for (const auto& r : results) {
    if (r) result.scores.push_back(r->score);
  }

  const auto first_error = std::find_if(errors.begin(), errors.end(), [](const auto& e) { return bool(e); });
  if (first_error != errors.end()) {
    std::string message;
    try {
      std::rethrow_exception(*first_error);
    } catch (const std::exception& e) {
      message = e.what();
    }
    std::vector<std::pair<std::string, std::string>> completed;
    for (const auto& s : result.scores) completed.emplace_back(s.backend_id, s.transcript_id);
    const auto scores_path = config.output_dir / "scores.jsonl";
    detail::write_file_atomic(scores_path, scores_to_jsonl(result.scores));
    write_manifest(config, corpus, backends, {scores_path}, "aborted", completed, message);
    std::rethrow_exception(*first_error);
  }

  const auto scores_path = config.output_dir / "scores.jsonl";
  detail::write_file_atomic(scores_path, scores_to_jsonl(result.scores));
  result.outputs.push_back(scores_path);

  std::map<std::string, double> ratings;
  std::vector<std::string> order;
  for (const auto& t : corpus.transcripts) {
    ratings[t.id] = t.rating.value;
    order.push_back(t.id);
  }
  std::vector<BackendColumnSet> columns;
  for (const auto& pb : backends) columns.push_back(pb.columns);

  const bool want_global = config.aggregates.count(SweepAggregate::Global) > 0;
  std::vector<SweepAggregate> table_aggs;
  for (auto a : {SweepAggregate::Max, SweepAggregate::Mean}) {
    if (config.aggregates.count(a)) table_aggs.push_back(a);
  }
  if (table_aggs.empty()) table_aggs.push_back(SweepAggregate::Global);

  for (auto agg : table_aggs) {
    auto table = correlation_table(result.scores, ratings, order, columns, config.windows, agg,
                                   want_global && agg != SweepAggregate::Global);
    const auto stem = aggregate_file_stem(agg);
    const auto md = config.output_dir / (stem + ".md");
    const auto csv_path = config.output_dir / (stem + ".csv");
    detail::write_file_atomic(md, render_table(table, TableFormat::Markdown));
    detail::write_file_atomic(csv_path, render_table(table, TableFormat::Csv));
    result.outputs.push_back(md);
    result.outputs.push_back(csv_path);
    result.tables.emplace(agg, std::move(table));
  }

  if (!config.profile_windows.empty()) {
    const auto grouping = config.profile_grouping.value_or(
        corpus.scheme == RatingScheme::TaldDerailment ? ProfileGrouping::TaldBinary : ProfileGrouping::RatingValue);
    for (auto w : config.profile_windows) {
      std::vector<ProfiledTranscript> profiled;
      for (std::size_t j = 0; j < n_jobs; ++j) {
        const auto& pb = backends[j / n_transcripts];
        if (std::find(pb.keep.begin(), pb.keep.end(), WindowSpec(w)) == pb.keep.end()) continue;
        const auto& t = corpus.transcripts[j % n_transcripts];
        profiled.push_back({pb.columns.backend_id, t.id, t.rating, results[j]->profiles});
      }
      if (profiled.empty()) continue;
      const auto path = config.output_dir / ("profiles_w" + std::to_string(w) + ".csv");
      detail::write_file_atomic(path, export_profiles(profiled, w, grouping));
      result.outputs.push_back(path);
    }
  }

  result.outputs.push_back(config.output_dir / "manifest.json");
  write_manifest(config, corpus, backends, result.outputs, "complete", {}, "");
  return result;
}

ReportOutput run_report(const std::filesystem::path& results_dir, TableFormat format) {
  json manifest;
  try {
    manifest = json::parse(detail::read_file(results_dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw Error(std::string("manifest.json: ") + e.what());
  }
  if (manifest.value("status", "") != "complete") throw Error("sweep in " + results_dir.string() + " did not complete");
  const auto scores = scores_from_jsonl(detail::read_file(results_dir / "scores.jsonl"));

  std::map<std::string, double> ratings;
  std::vector<std::string> order;
  for (const auto& t : manifest.at("transcripts")) {
    order.push_back(t.at("id").get<std::string>());
    ratings[order.back()] = t.at("rating").get<double>();
  }
  std::vector<BackendColumnSet> columns;
  for (const auto& b : manifest.at("backends")) {
    columns.push_back({b.at("backend_id").get<std::string>(), b.value("label", ""),
                       b.at("windows").get<std::vector<std::size_t>>()});
  }
  const auto windows = manifest.at("windows").get<std::vector<std::size_t>>();
  std::set<SweepAggregate> aggs;
  for (const auto& a : manifest.at("aggregates")) aggs.insert(sweep_aggregate_from_string(a.get<std::string>()));

  std::vector<SweepAggregate> table_aggs;
  for (auto a : {SweepAggregate::Max, SweepAggregate::Mean}) {
    if (aggs.count(a)) table_aggs.push_back(a);
  }
  if (table_aggs.empty()) table_aggs.push_back(SweepAggregate::Global);

  ReportOutput out;
  const std::string ext = format == TableFormat::Markdown ? ".md" : ".csv";
  for (auto agg : table_aggs) {
    auto table = correlation_table(scores, ratings, order, columns, windows, agg,
                                   aggs.count(SweepAggregate::Global) && agg != SweepAggregate::Global);
    auto text = render_table(table, format);
    const auto path = results_dir / (aggregate_file_stem(agg) + ext);
    detail::write_file_atomic(path, text);
    out.outputs.push_back(path);
    out.rendered.emplace(agg, std::move(text));
    out.tables.emplace(agg, std::move(table));
  }
  return out;
}

}  // namespace cohertrace
