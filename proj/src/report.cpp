#include "claad/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "claad/error.hpp"

namespace claad {

namespace {

constexpr const char* kMetricsHeader = "subject,window_s,fold,n_examples,accuracy";

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("metrics file '" + path.string() + "' not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFound("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void MetricsTable::add(const MetricsRow& row) {
  if (!(row.accuracy >= 0.0 && row.accuracy <= 1.0)) {
    throw DomainError("accuracy " + format_number(row.accuracy) + " outside [0, 1]");
  }
  for (const MetricsRow& r : rows) {
    if (r.subject_id == row.subject_id && r.window_seconds == row.window_seconds && r.fold == row.fold) {
      throw DomainError("duplicate metrics row for subject '" + row.subject_id + "', window " +
                        format_number(row.window_seconds) + " s, fold " + std::to_string(row.fold));
    }
  }
  rows.push_back(row);
}

std::string MetricsTable::to_csv() const {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    out += r.subject_id + "," + format_number(r.window_seconds) + "," + std::to_string(r.fold) + "," +
           std::to_string(r.n_examples) + "," + format_number(r.accuracy) + "\n";
  }
  return out;
}

MetricsTable parse_metrics_csv(const std::string& text, const std::string& context) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw CorruptFile(context + ": expected header '" + kMetricsHeader + "'");
  }
  MetricsTable table;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    const std::string where = context + ":" + std::to_string(line_no);
    if (f.size() != 5) throw CorruptFile(where + ": expected 5 fields");
    try {
      table.add({f[0], std::stod(f[1]), std::stoi(f[2]), static_cast<std::size_t>(std::stoull(f[3])),
                 std::stod(f[4])});
    } catch (const std::logic_error&) {
      throw CorruptFile(where + ": unparsable number");
    }
  }
  return table;
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  return parse_metrics_csv(read_text(path), path.string());
}

void write_metrics(const std::filesystem::path& path, const MetricsTable& table) {
  write_text(path, table.to_csv());
}

Report aggregate(const std::vector<MetricsTable>& tables) {
  std::map<std::pair<double, std::string>, std::vector<double>> groups;
  for (const MetricsTable& t : tables) {
    for (const MetricsRow& r : t.rows) groups[{r.window_seconds, r.subject_id}].push_back(r.accuracy);
  }
  if (groups.empty()) throw ConfigError("report needs at least one metrics row");

  Report rep;
  std::map<double, std::pair<double, std::size_t>> per_window;
  for (const auto& [key, acc] : groups) {
    SubjectRow row;
    row.window_seconds = key.first;
    row.subject_id = key.second;
    double sum = 0.0;
    for (double a : acc) sum += a;
    row.mean = sum / static_cast<double>(acc.size());
    row.min = *std::min_element(acc.begin(), acc.end());
    row.max = *std::max_element(acc.begin(), acc.end());
    rep.per_subject.push_back(row);
    auto& w = per_window[key.first];
    w.first += row.mean;
    ++w.second;
  }
  for (const auto& [window, acc] : per_window) {
    rep.summary.push_back({window, acc.first / static_cast<double>(acc.second), acc.second});
  }
  return rep;
}

Report emit_report(const std::vector<MetricsTable>& tables, const std::filesystem::path& out_dir) {
  const Report rep = aggregate(tables);
  std::filesystem::create_directories(out_dir);
  std::string summary = "window_s,mean_accuracy,n_subjects\n";
  for (const SummaryRow& r : rep.summary) {
    summary += format_number(r.window_seconds) + "," + format_number(r.mean_accuracy) + "," +
               std::to_string(r.n_subjects) + "\n";
  }
  std::string per_subject = "subject,window_s,mean,min,max\n";
  for (const SubjectRow& r : rep.per_subject) {
    per_subject += r.subject_id + "," + format_number(r.window_seconds) + "," + format_number(r.mean) + "," +
                   format_number(r.min) + "," + format_number(r.max) + "\n";
  }
  write_text(out_dir / "summary.csv", summary);
  write_text(out_dir / "per_subject.csv", per_subject);
  return rep;
}

}  // namespace claad
