#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cohertrace/corpus_io.hpp"
#include "cohertrace/ppl.hpp"
#include "cohertrace/stats.hpp"

namespace cohertrace {

/// Backend x window grid of Spearman results for one aggregate. Columns are
/// the window sizes in ascending order, followed by a GLOBAL column when
/// `has_global` is set. A missing cell means the window was not swept for
/// that backend (or the correlation was undefined).
struct CorrelationTable {
  std::string caption;
  std::vector<std::string> rows;
  std::vector<std::size_t> windows;
  bool has_global = false;
  /// cells[row][column]; column count = windows.size() + has_global.
  std::vector<std::vector<std::optional<CorrelationResult>>> cells;
  /// Per row, the bolded window column. Never the GLOBAL column.
  std::vector<std::optional<std::size_t>> row_max;

  std::size_t columns() const noexcept { return windows.size() + (has_global ? 1 : 0); }
};

/// rho to three decimals; negative zero prints as 0.000.
std::string format_rho(double rho);

/// Bolds, per row, the window column with the highest rho at three decimals.
/// Ties go to the smaller window.
void mark_row_maxima(CorrelationTable& table);

enum class TableFormat { Markdown, Csv };

TableFormat table_format_from_string(std::string_view name);

/// Markdown: a pipe table whose cells read rho plus stars, with the stars
/// escaped as \* and the row maximum wrapped in **...**, then a blank line and
/// the significance legend. CSV: one line per present cell with columns
/// backend,column,rho,p_value,stars,is_row_max,n,method, then the legend as a
/// trailing "#" line.
std::string render_table(const CorrelationTable& table, TableFormat format);

enum class ProfileGrouping { TaldBinary, RatingValue };

ProfileGrouping profile_grouping_from_string(std::string_view name);

/// One transcript's window profiles under one backend, with its rating.
struct ProfiledTranscript {
  std::string backend_id;
  std::string transcript_id;
  ClinicalRating rating;
  std::map<WindowSpec, WindowProfile> profiles;
};

/// Plot data: per backend, group and window index, the mean window
/// perplexity with its 95% band. Columns
/// backend_id,group,index,mean,ci_low,ci_high,n; the bounds are empty where
/// only one profile reaches the index. Throws UnknownWindow if `window` was
/// not profiled.
std::string export_profiles(std::span<const ProfiledTranscript> transcripts, std::size_t window,
                            ProfileGrouping grouping);

}  // namespace cohertrace
