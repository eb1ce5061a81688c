#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cohertrace {

enum class RatingScheme { TaldDerailment, CompositePanss, Custom };

std::string_view to_string(RatingScheme scheme);
RatingScheme rating_scheme_from_string(std::string_view name);

/// Inclusive bounds of a rating scale.
struct RatingBounds {
  double min = 0.0;
  double max = 0.0;
};

inline constexpr RatingBounds kTaldBounds{0.0, 4.0};
inline constexpr RatingBounds kCompositePanssBounds{1.0, 12.0};
inline constexpr RatingBounds kConceptualDisorganizationBounds{1.0, 7.0};
inline constexpr RatingBounds kIncoherentSpeechBounds{0.0, 5.0};

inline constexpr std::string_view kConceptualDisorganization = "conceptual_disorganization";
inline constexpr std::string_view kIncoherentSpeech = "incoherent_speech";

struct ClinicalRating {
  RatingScheme scheme = RatingScheme::TaldDerailment;
  double value = 0.0;
  /// Item name -> item score, for composite scales.
  std::map<std::string, int> components;
};

/// Throws RatingOutOfRange (naming `transcript_id`) when the rating violates
/// its scheme. `custom_bounds` is required for CUSTOM ratings.
void validate_rating(const ClinicalRating& rating, const std::string& transcript_id,
                     const std::optional<RatingBounds>& custom_bounds = std::nullopt);

ClinicalRating tald_rating(double value);
ClinicalRating composite_panss(int conceptual_disorganization, int incoherent_speech);

/// 1 when TALD derailment >= 3, else 0.
int severity_label(const ClinicalRating& rating);

struct Transcript {
  std::string id;
  std::string text;
  ClinicalRating rating;
  std::map<std::string, std::string> metadata;
};

struct RatedCorpus {
  std::string name;
  RatingScheme scheme = RatingScheme::TaldDerailment;
  std::optional<RatingBounds> custom_bounds;
  std::vector<Transcript> transcripts;
};

/// Checks the corpus-level invariants: non-empty, unique non-empty ids,
/// non-empty text, one shared scheme, ratings in range.
void validate_corpus(const RatedCorpus& corpus);

/// Collapses whitespace runs to one space and trims both ends. Case is kept.
std::string normalize_text(std::string_view text);

/// Keeps only the turns of the listed speakers. A line that starts with
/// "<label><separator>" opens a turn for <label>; lines without a label
/// continue the current turn. Labels are stripped from the output.
struct SpeakerFilter {
  std::vector<std::string> keep;
  std::string separator = ":";
};

std::string apply_speaker_filter(std::string_view text, const SpeakerFilter& filter);

enum class CorpusFormat { Jsonl, Csv };

CorpusFormat corpus_format_from_string(std::string_view name);
/// Guesses from the file extension (.csv, otherwise JSONL).
CorpusFormat corpus_format_for_path(const std::filesystem::path& path);

/// Where each transcript field lives in a row. Optional members fall back to
/// the `.meta.json` sidecar next to the corpus file, then to defaults.
struct CorpusSchema {
  std::string id_field = "id";
  std::string text_field = "text";
  /// Column holding the rating value. Unused for COMPOSITE_PANSS when both
  /// component columns are given.
  std::string rating_field = "rating";
  std::optional<std::string> conceptual_disorganization_field;
  std::optional<std::string> incoherent_speech_field;
  std::optional<RatingScheme> scheme;
  std::optional<RatingBounds> custom_bounds;
  std::optional<SpeakerFilter> speaker_filter;
  std::optional<std::string> name;
};

std::filesystem::path sidecar_path(const std::filesystem::path& corpus_path);

RatedCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format,
                        const CorpusSchema& schema = {});

/// Writes the corpus with `schema`'s field names. Also writes the sidecar
/// when `write_sidecar` is set.
void save_corpus(const RatedCorpus& corpus, const std::filesystem::path& path, CorpusFormat format,
                 const CorpusSchema& schema = {}, bool write_sidecar = true);

}  // namespace cohertrace
