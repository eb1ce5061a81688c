#include "cohertrace/corpus_io.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cohertrace/errors.hpp"
#include "csv.hpp"
#include "io_util.hpp"

namespace cohertrace {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool in_bounds(double v, RatingBounds b) { return std::isfinite(v) && v >= b.min && v <= b.max; }

std::string describe(double v, RatingBounds b) {
  return detail::format_double(v) + " not in [" + detail::format_double(b.min) + ", " +
         detail::format_double(b.max) + "]";
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Row abstraction shared by the JSONL and CSV readers.
struct RawRow {
  std::map<std::string, std::string> fields;
  // JSON rows keep typed values for the rating columns.
  std::map<std::string, json> typed;
  std::size_t line = 0;
};

double numeric_field(const RawRow& row, const std::string& name, const std::string& row_label) {
  if (auto it = row.typed.find(name); it != row.typed.end()) {
    if (it->second.is_number()) return it->second.get<double>();
    if (!it->second.is_string()) throw MissingField(row_label + ": field '" + name + "' is not numeric");
  }
  auto it = row.fields.find(name);
  if (it == row.fields.end() || it->second.empty()) {
    throw MissingField(row_label + ": missing field '" + name + "'");
  }
  try {
    return detail::parse_double(it->second);
  } catch (const Error&) {
    throw MissingField(row_label + ": field '" + name + "' is not numeric");
  }
}

int integer_field(const RawRow& row, const std::string& name, const std::string& row_label) {
  const double v = numeric_field(row, name, row_label);
  if (v != std::floor(v)) throw ItemOutOfRange(name, row_label + ": item scores are integers");
  return static_cast<int>(v);
}

struct ResolvedSchema {
  CorpusSchema fields;
  RatingScheme scheme = RatingScheme::TaldDerailment;
};

ResolvedSchema resolve_schema(const std::filesystem::path& path, const CorpusSchema& schema) {
  ResolvedSchema out{schema, RatingScheme::TaldDerailment};
  const auto meta = sidecar_path(path);
  if (std::filesystem::exists(meta)) {
    const json doc = json::parse(detail::read_file(meta));
    if (!doc.is_object()) throw Error(meta.string() + ": sidecar must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "name") {
        if (!out.fields.name) out.fields.name = value.get<std::string>();
      } else if (key == "scheme") {
        if (!out.fields.scheme) out.fields.scheme = rating_scheme_from_string(value.get<std::string>());
      } else if (key == "bounds") {
        if (!value.is_array() || value.size() != 2) throw Error(meta.string() + ": bounds must be [min, max]");
        if (!out.fields.custom_bounds) out.fields.custom_bounds = RatingBounds{value[0].get<double>(), value[1].get<double>()};
      } else if (key == "speaker_filter") {
        if (!out.fields.speaker_filter) {
          SpeakerFilter f;
          f.keep = value.at("keep").get<std::vector<std::string>>();
          if (value.contains("separator")) f.separator = value["separator"].get<std::string>();
          out.fields.speaker_filter = std::move(f);
        }
      } else {
        throw Error(meta.string() + ": unknown key '" + key + "'");
      }
    }
  }
  out.scheme = out.fields.scheme.value_or(RatingScheme::TaldDerailment);
  if (out.scheme == RatingScheme::Custom && !out.fields.custom_bounds) {
    throw Error("CUSTOM rating scheme requires declared bounds");
  }
  return out;
}

std::vector<RawRow> read_jsonl(const std::string& contents) {
  std::vector<RawRow> rows;
  std::istringstream in(contents);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_text(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) throw Error("line " + std::to_string(line_no) + ": expected a JSON object");
    RawRow row;
    row.line = line_no;
    for (const auto& [key, value] : obj.items()) {
      if (value.is_string()) {
        row.fields[key] = value.get<std::string>();
      } else if (!value.is_null()) {
        row.fields[key] = value.dump();
      }
      if (!value.is_null()) row.typed[key] = value;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawRow> read_csv(const std::string& contents) {
  auto table = csv::parse(contents);
  if (table.empty()) return {};
  const auto& header = table.front();
  std::vector<RawRow> rows;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& cells = table[r];
    if (cells.size() != header.size()) {
      throw Error("csv record " + std::to_string(r) + ": expected " + std::to_string(header.size()) +
                  " fields, got " + std::to_string(cells.size()));
    }
    RawRow row;
    row.line = r + 1;
    for (std::size_t c = 0; c < header.size(); ++c) row.fields[header[c]] = cells[c];
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string_view to_string(RatingScheme scheme) {
  switch (scheme) {
    case RatingScheme::TaldDerailment: return "TALD_DERAILMENT";
    case RatingScheme::CompositePanss: return "COMPOSITE_PANSS";
    case RatingScheme::Custom: return "CUSTOM";
  }
  return "?";
}

RatingScheme rating_scheme_from_string(std::string_view name) {
  std::string upper(name);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper == "TALD_DERAILMENT" || upper == "TALD") return RatingScheme::TaldDerailment;
  if (upper == "COMPOSITE_PANSS" || upper == "PANSS") return RatingScheme::CompositePanss;
  if (upper == "CUSTOM") return RatingScheme::Custom;
  throw Error("unknown rating scheme '" + std::string(name) + "'");
}

void validate_rating(const ClinicalRating& rating, const std::string& transcript_id,
                     const std::optional<RatingBounds>& custom_bounds) {
  switch (rating.scheme) {
    case RatingScheme::TaldDerailment:
      if (!in_bounds(rating.value, kTaldBounds)) throw RatingOutOfRange(transcript_id, describe(rating.value, kTaldBounds));
      break;
    case RatingScheme::CompositePanss: {
      if (!in_bounds(rating.value, kCompositePanssBounds)) {
        throw RatingOutOfRange(transcript_id, describe(rating.value, kCompositePanssBounds));
      }
      if (!rating.components.empty()) {
        double sum = 0.0;
        for (const auto& [item, score] : rating.components) sum += score;
        if (sum != rating.value) throw RatingOutOfRange(transcript_id, "composite value differs from its item sum");
      }
      break;
    }
    case RatingScheme::Custom:
      if (!custom_bounds) throw RatingOutOfRange(transcript_id, "CUSTOM scheme without declared bounds");
      if (!in_bounds(rating.value, *custom_bounds)) {
        throw RatingOutOfRange(transcript_id, describe(rating.value, *custom_bounds));
      }
      break;
  }
}

ClinicalRating tald_rating(double value) {
  ClinicalRating r{RatingScheme::TaldDerailment, value, {}};
  validate_rating(r, "<tald>");
  return r;
}

ClinicalRating composite_panss(int conceptual_disorganization, int incoherent_speech) {
  if (conceptual_disorganization < kConceptualDisorganizationBounds.min ||
      conceptual_disorganization > kConceptualDisorganizationBounds.max) {
    throw ItemOutOfRange(std::string(kConceptualDisorganization),
                         std::to_string(conceptual_disorganization) + " not in [1, 7]");
  }
  if (incoherent_speech < kIncoherentSpeechBounds.min || incoherent_speech > kIncoherentSpeechBounds.max) {
    throw ItemOutOfRange(std::string(kIncoherentSpeech), std::to_string(incoherent_speech) + " not in [0, 5]");
  }
  ClinicalRating r;
  r.scheme = RatingScheme::CompositePanss;
  r.value = conceptual_disorganization + incoherent_speech;
  r.components = {{std::string(kConceptualDisorganization), conceptual_disorganization},
                  {std::string(kIncoherentSpeech), incoherent_speech}};
  return r;
}

int severity_label(const ClinicalRating& rating) {
  if (rating.scheme != RatingScheme::TaldDerailment) {
    throw SchemeMismatch("severity_label needs a TALD_DERAILMENT rating, got " + std::string(to_string(rating.scheme)));
  }
  return rating.value >= 3.0 ? 1 : 0;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string apply_speaker_filter(std::string_view text, const SpeakerFilter& filter) {
  const std::set<std::string> keep(filter.keep.begin(), filter.keep.end());
  std::string out;
  bool keeping = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;

    std::string_view body = line;
    const auto sep = filter.separator.empty() ? std::string_view::npos : line.find(filter.separator);
    if (sep != std::string_view::npos) {
      const std::string label = normalize_text(line.substr(0, sep));
      // At most 40 chars, else the line is speech.
      if (!label.empty() && label.size() <= 40) {
        keeping = keep.count(label) > 0;
        body = line.substr(sep + filter.separator.size());
      }
    }
    if (keeping) {
      out.append(body);
      out.push_back('\n');
    }
  }
  return normalize_text(out);
}

void validate_corpus(const RatedCorpus& corpus) {
  if (corpus.transcripts.empty()) throw EmptyCorpus("corpus '" + corpus.name + "' has no transcripts");
  std::unordered_set<std::string> seen;
  for (const auto& t : corpus.transcripts) {
    if (t.id.empty()) throw InvalidTranscript("transcript with empty id");
    if (!seen.insert(t.id).second) throw DuplicateId("duplicate transcript id '" + t.id + "'");
    if (normalize_text(t.text).empty()) throw InvalidTranscript("transcript '" + t.id + "' has empty text");
    if (t.rating.scheme != corpus.scheme) {
      throw SchemeMismatch("transcript '" + t.id + "' uses " + std::string(to_string(t.rating.scheme)) +
                           ", corpus uses " + std::string(to_string(corpus.scheme)));
    }
    validate_rating(t.rating, t.id, corpus.custom_bounds);
  }
}

CorpusFormat corpus_format_from_string(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "jsonl") return CorpusFormat::Jsonl;
  if (lower == "csv") return CorpusFormat::Csv;
  throw Error("unknown corpus format '" + std::string(name) + "'");
}

CorpusFormat corpus_format_for_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".csv" ? CorpusFormat::Csv : CorpusFormat::Jsonl;
}

std::filesystem::path sidecar_path(const std::filesystem::path& corpus_path) {
  auto p = corpus_path;
  p.replace_extension(".meta.json");
  return p;
}

RatedCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format, const CorpusSchema& schema) {
  const auto resolved = resolve_schema(path, schema);
  const auto& fs = resolved.fields;
  const std::string contents = detail::read_file(path);
  const auto rows = format == CorpusFormat::Jsonl ? read_jsonl(contents) : read_csv(contents);

  RatedCorpus corpus;
  corpus.name = fs.name.value_or(path.stem().string());
  corpus.scheme = resolved.scheme;
  corpus.custom_bounds = fs.custom_bounds;
  if (rows.empty()) throw EmptyCorpus(path.string() + ": no rows");

  const bool use_components = resolved.scheme == RatingScheme::CompositePanss &&
                              fs.conceptual_disorganization_field && fs.incoherent_speech_field;
  std::set<std::string> mapped = {fs.id_field, fs.text_field};
  if (use_components) {
    mapped.insert(*fs.conceptual_disorganization_field);
    mapped.insert(*fs.incoherent_speech_field);
  }
  mapped.insert(fs.rating_field);

  std::unordered_set<std::string> seen;
  for (const auto& row : rows) {
    const std::string row_label = "row " + std::to_string(row.line);
    auto id_it = row.fields.find(fs.id_field);
    if (id_it == row.fields.end() || id_it->second.empty()) {
      throw MissingField(row_label + ": missing field '" + fs.id_field + "'");
    }
    Transcript t;
    t.id = id_it->second;
    const std::string label = "row " + std::to_string(row.line) + " ('" + t.id + "')";

    auto text_it = row.fields.find(fs.text_field);
    if (text_it == row.fields.end()) throw MissingField(label + ": missing field '" + fs.text_field + "'");
    t.text = fs.speaker_filter ? apply_speaker_filter(text_it->second, *fs.speaker_filter)
                               : normalize_text(text_it->second);
    if (t.text.empty()) throw InvalidTranscript(label + ": empty text");

    if (use_components) {
      const int cd = integer_field(row, *fs.conceptual_disorganization_field, label);
      const int is = integer_field(row, *fs.incoherent_speech_field, label);
      try {
        t.rating = composite_panss(cd, is);
      } catch (const ItemOutOfRange& e) {
        throw RatingOutOfRange(t.id, e.what());
      }
    } else {
      t.rating.scheme = resolved.scheme;
      t.rating.value = numeric_field(row, fs.rating_field, label);
    }
    validate_rating(t.rating, t.id, fs.custom_bounds);

    if (!seen.insert(t.id).second) throw DuplicateId("duplicate transcript id '" + t.id + "'");
    for (const auto& [key, value] : row.fields) {
      if (!mapped.count(key)) t.metadata[key] = value;
    }
    corpus.transcripts.push_back(std::move(t));
  }
  validate_corpus(corpus);
  return corpus;
}

void save_corpus(const RatedCorpus& corpus, const std::filesystem::path& path, CorpusFormat format,
                 const CorpusSchema& schema, bool write_sidecar) {
  validate_corpus(corpus);
  const bool with_components = schema.conceptual_disorganization_field && schema.incoherent_speech_field;

  std::set<std::string> meta_keys;
  for (const auto& t : corpus.transcripts) {
    for (const auto& [k, v] : t.metadata) meta_keys.insert(k);
  }

  auto component = [](const Transcript& t, std::string_view item) -> std::optional<int> {
    auto it = t.rating.components.find(std::string(item));
    if (it == t.rating.components.end()) return std::nullopt;
    return it->second;
  };

  std::string out;
  if (format == CorpusFormat::Jsonl) {
    for (const auto& t : corpus.transcripts) {
      ordered_json row;
      row[schema.id_field] = t.id;
      row[schema.text_field] = t.text;
      row[schema.rating_field] = t.rating.value;
      if (with_components) {
        if (auto cd = component(t, kConceptualDisorganization)) row[*schema.conceptual_disorganization_field] = *cd;
        if (auto is = component(t, kIncoherentSpeech)) row[*schema.incoherent_speech_field] = *is;
      }
      for (const auto& [k, v] : t.metadata) row[k] = v;
      out += row.dump();
      out.push_back('\n');
    }
  } else {
    csv::Row header = {schema.id_field, schema.text_field, schema.rating_field};
    if (with_components) {
      header.push_back(*schema.conceptual_disorganization_field);
      header.push_back(*schema.incoherent_speech_field);
    }
    header.insert(header.end(), meta_keys.begin(), meta_keys.end());
    out += csv::format_row(header);
    for (const auto& t : corpus.transcripts) {
      csv::Row row = {t.id, t.text, detail::format_double(t.rating.value)};
      if (with_components) {
        auto cd = component(t, kConceptualDisorganization);
        auto is = component(t, kIncoherentSpeech);
        row.push_back(cd ? std::to_string(*cd) : "");
        row.push_back(is ? std::to_string(*is) : "");
      }
      for (const auto& k : meta_keys) {
        auto it = t.metadata.find(k);
        row.push_back(it == t.metadata.end() ? "" : it->second);
      }
      out += csv::format_row(row);
    }
  }
  detail::write_file_atomic(path, out);

  if (write_sidecar) {
    ordered_json meta;
    meta["name"] = corpus.name;
    meta["scheme"] = std::string(to_string(corpus.scheme));
    if (corpus.custom_bounds) meta["bounds"] = {corpus.custom_bounds->min, corpus.custom_bounds->max};
    detail::write_file_atomic(sidecar_path(path), meta.dump(2) + "\n");
  }
}

}  // namespace cohertrace
