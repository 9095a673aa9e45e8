#include "charcom/report.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <vector>

#include "charcom/errors.h"

namespace charcom {

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<MeanStd> columns(const MetricReport& r) { return {r.is(), r.pfs(), r.ics_stats(), r.t_ics(), r.t_ics_emb()}; }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void write_csv(std::ostream& out, const Table& table) {
  out << "label,cast_size,refs,IS,IS_std,PFS,PFS_std,ICS,ICS_std,T-ICS,T-ICS_std,T-ICS_Emb,T-ICS_Emb_std\n";
  for (const auto& row : table.rows) {
    out << csv_field(row.label) << ',' << row.cast_size << ',' << row.reference_count;
    for (const auto& c : columns(row.report)) out << ',' << fixed4(c.mean) << ',' << fixed4(c.std);
    out << '\n';
  }
}

void write_markdown(std::ostream& out, const Table& table) {
  out << "## " << table.title << "\n\n";
  out << "| Method | Cast | Refs | IS | PFS | ICS | T-ICS | T-ICS_Emb |\n";
  out << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : table.rows) {
    out << "| " << row.label << " | " << (row.cast_size ? std::to_string(row.cast_size) : "mixed") << " | "
        << (row.reference_count ? std::to_string(row.reference_count) : "default");
    for (const auto& c : columns(row.report)) out << " | " << fixed4(c.mean) << " ± " << fixed4(c.std);
    out << " |\n";
  }
  out << "\n" << kReportFooter << "\n";
}

void emit_report(const Table& table, const std::filesystem::path& dir, const std::string& stem) {
  if (table.rows.empty()) throw InvalidArgument("emit_report: table has no rows");
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / (stem + ".csv"), std::ios::binary);
  std::ofstream md(dir / (stem + ".md"), std::ios::binary);
  if (!csv || !md) throw InvalidArgument("emit_report: cannot write into '" + dir.string() + "'");
  write_csv(csv, table);
  write_markdown(md, table);
}

TimingSummary summarize_timings(std::span<const ExperimentRecord> records) {
  std::vector<double> merge, sample;
  for (const auto& r : records) {
    for (const auto& s : r.scenes) {
      merge.push_back(s.merge_seconds);
      sample.push_back(s.sample_seconds);
    }
  }
  return {median(merge), median(sample), merge.size()};
}

}  // namespace charcom
