#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace claad {

struct MetricsRow {
  std::string subject_id;
  double window_seconds = 0.0;
  int fold = 0;
  std::size_t n_examples = 0;
  double accuracy = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  void add(const MetricsRow& row);  // rejects accuracy outside [0, 1] and duplicate keys
  std::string to_csv() const;       // header subject,window_s,fold,n_examples,accuracy
};

MetricsTable parse_metrics_csv(const std::string& text, const std::string& context = "metrics");
MetricsTable read_metrics(const std::filesystem::path& path);
void write_metrics(const std::filesystem::path& path, const MetricsTable& table);

struct SummaryRow {
  double window_seconds = 0.0;
  double mean_accuracy = 0.0;  // mean over subjects of the per-subject fold mean
  std::size_t n_subjects = 0;
};

struct SubjectRow {
  std::string subject_id;
  double window_seconds = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct Report {
  std::vector<SummaryRow> summary;
  std::vector<SubjectRow> per_subject;
};

Report aggregate(const std::vector<MetricsTable>& tables);

// Writes summary.csv and per_subject.csv; returns the aggregate.
Report emit_report(const std::vector<MetricsTable>& tables, const std::filesystem::path& out_dir);

// Shortest decimal form that round-trips, used for every number in CSV output.
std::string format_number(double v);

}  // namespace claad
