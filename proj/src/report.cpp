#include "cohertrace/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "cohertrace/errors.hpp"
#include "csv.hpp"
#include "io_util.hpp"

namespace cohertrace {

namespace {

std::string escape_markdown_stars(std::string_view stars) {
  std::string out;
  for (char c : stars) {
    if (c == '*') out += "\\*";
    else out.push_back(c);
  }
  return out;
}

std::string escape_cell_text(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '|') out += "\\|";
    else out.push_back(c);
  }
  return out;
}

std::string column_name(const CorrelationTable& table, std::size_t col) {
  return col < table.windows.size() ? std::to_string(table.windows[col]) : "GLOBAL";
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string format_rho(double rho) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", rho);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}

void mark_row_maxima(CorrelationTable& table) {
  table.row_max.assign(table.rows.size(), std::nullopt);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::optional<std::size_t> best;
    double best_value = 0.0;
    for (std::size_t c = 0; c < table.windows.size(); ++c) {
      const auto& cell = table.cells[r][c];
      if (!cell) continue;
      // Compared at printed precision.
      const double shown = detail::parse_double(format_rho(cell->rho));
      if (!best || shown > best_value) {
        best = c;
        best_value = shown;
      }
    }
    table.row_max[r] = best;
  }
}

TableFormat table_format_from_string(std::string_view name) {
  const auto u = upper(name);
  if (u == "MARKDOWN" || u == "MD") return TableFormat::Markdown;
  if (u == "CSV") return TableFormat::Csv;
  throw Error("unknown table format '" + std::string(name) + "'");
}

std::string render_table(const CorrelationTable& table, TableFormat format) {
  const std::size_t ncols = table.columns();
  auto is_max = [&](std::size_t r, std::size_t c) {
    return r < table.row_max.size() && table.row_max[r] && *table.row_max[r] == c;
  };

  std::string out;
  if (format == TableFormat::Markdown) {
    if (!table.caption.empty()) out += table.caption + "\n\n";
    out += "| Model |";
    for (std::size_t c = 0; c < ncols; ++c) out += " " + column_name(table, c) + " |";
    out += "\n|:--|";
    for (std::size_t c = 0; c < ncols; ++c) out += "--:|";
    out += "\n";
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      out += "| " + escape_cell_text(table.rows[r]) + " |";
      for (std::size_t c = 0; c < ncols; ++c) {
        const auto& cell = table.cells[r][c];
        std::string text = "-";
        if (cell) {
          text = format_rho(cell->rho) + escape_markdown_stars(cell->stars);
          if (is_max(r, c)) text = "**" + text + "**";
        }
        out += " " + text + " |";
      }
      out += "\n";
    }
    out += "\n" + escape_markdown_stars(kSignificanceLegend) + "\n";
    return out;
  }

  out += csv::format_row({"backend", "column", "rho", "p_value", "stars", "is_row_max", "n", "method"});
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < ncols; ++c) {
      const auto& cell = table.cells[r][c];
      if (!cell) continue;
      out += csv::format_row({table.rows[r], column_name(table, c), detail::format_double(cell->rho),
                              detail::format_double(cell->p_value), cell->stars, is_max(r, c) ? "true" : "false",
                              std::to_string(cell->n), std::string(to_string(cell->method))});
    }
  }
  out += "# " + std::string(kSignificanceLegend) + "\r\n";
  return out;
}

ProfileGrouping profile_grouping_from_string(std::string_view name) {
  const auto u = upper(name);
  if (u == "TALD_BINARY") return ProfileGrouping::TaldBinary;
  if (u == "RATING_VALUE") return ProfileGrouping::RatingValue;
  throw Error("unknown profile grouping '" + std::string(name) + "'");
}

std::string export_profiles(std::span<const ProfiledTranscript> transcripts, std::size_t window,
                            ProfileGrouping grouping) {
  if (window < 2) throw UnknownWindow("window " + std::to_string(window) + " was not profiled");
  const WindowSpec spec(window);

  // backend id -> (profiles, group keys), in first-seen backend order.
  std::vector<std::string> backend_order;
  std::map<std::string, std::pair<std::vector<WindowProfile>, std::vector<std::string>>> per_backend;
  for (const auto& t : transcripts) {
    auto it = t.profiles.find(spec);
    if (it == t.profiles.end()) {
      throw UnknownWindow("window " + std::to_string(window) + " was not profiled for '" + t.transcript_id + "'");
    }
    std::string key = grouping == ProfileGrouping::TaldBinary ? std::to_string(severity_label(t.rating))
                                                              : detail::format_double(t.rating.value);
    auto [slot, inserted] = per_backend.try_emplace(t.backend_id);
    if (inserted) backend_order.push_back(t.backend_id);
    slot->second.first.push_back(it->second);
    slot->second.second.push_back(std::move(key));
  }
  if (transcripts.empty()) throw UnknownWindow("no profiles for window " + std::to_string(window));

  std::string out = csv::format_row({"backend_id", "group", "index", "mean", "ci_low", "ci_high", "n"});
  for (const auto& backend : backend_order) {
    const auto& [profiles, keys] = per_backend[backend];
    auto bands = profile_band(profiles, keys);
    std::vector<std::string> groups;
    for (const auto& [g, b] : bands) groups.push_back(g);
    std::sort(groups.begin(), groups.end(),
              [](const std::string& a, const std::string& b) { return detail::parse_double(a) < detail::parse_double(b); });
    for (const auto& g : groups) {
      for (const auto& band : bands[g]) {
        out += csv::format_row({backend, g, std::to_string(band.index), detail::format_double(band.mean),
                                band.ci_low ? detail::format_double(*band.ci_low) : "",
                                band.ci_high ? detail::format_double(*band.ci_high) : "", std::to_string(band.n)});
      }
    }
  }
  return out;
}

}  // namespace cohertrace
