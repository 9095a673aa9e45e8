#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "charcom/experiment.h"

namespace charcom {

inline constexpr const char* kReportFooter =
    "Image-adapter baseline omitted: it relies on visual cross-attention, which this backbone does not have.";

/// Header: label,cast_size,refs,IS,IS_std,PFS,PFS_std,ICS,ICS_std,T-ICS,T-ICS_std,T-ICS_Emb,T-ICS_Emb_std.
/// Four decimals; timings are never written, so equal inputs give equal bytes.
void write_csv(std::ostream& out, const Table& table);

/// Markdown table with "mean ± std" cells, followed by the omission footer.
void write_markdown(std::ostream& out, const Table& table);

/// Writes <dir>/<stem>.csv and <dir>/<stem>.md.
void emit_report(const Table& table, const std::filesystem::path& dir, const std::string& stem);

/// Per-scene timing summary (median merge and sampling seconds) for logs.
struct TimingSummary {
  double median_merge_seconds = 0.0;
  double median_sample_seconds = 0.0;
  std::size_t scenes = 0;
};
TimingSummary summarize_timings(std::span<const ExperimentRecord> records);

}  // namespace charcom
