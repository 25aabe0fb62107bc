#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demixkit/train.hpp"

namespace demixkit {

// dot(a, b) / (|a| * |b|); throws on zero vectors.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct EvalCell {
  double cosine = 0.0;
  double accuracy = 0.0;  // fraction in [0, 1]
  int n_examples = 0;
};

// Report rows in paper order. "before" is raw e_mix, "clean" is the clean
// test-segment baseline; the six heads sit in between.
extern const std::vector<std::string> kReportRowOrder;
std::string display_row_name(const std::string& row);

// Rows keyed by (direction, row, snr in milli-dB).
struct EvalReport {
  std::map<std::string, std::map<std::string, std::map<int, EvalCell>>> cells;

  void set(Direction direction, const std::string& row, double snr_db, EvalCell cell);
  const EvalCell* find(Direction direction, const std::string& row, double snr_db) const;
  std::vector<int> snrs_mdb(const std::string& direction) const;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
  std::string to_csv() const;
  std::string to_table() const;

  bool operator==(const EvalReport& other) const;
};

enum class ReportFormat { kTable, kJson, kCsv };
ReportFormat parse_report_format(const std::string& name);
std::string render_report(const EvalReport& report, ReportFormat format);

struct EvalContext {
  Extractor& extractor;
  Classifier& classifier;
  const EmbeddingBank& bank;
  const Dataset& data;
  MixtureEmbeddingCache& cache;
  int crop_frames = 200;
  std::uint64_t seed = 4;
};

// One cell: de-mix every test pair with `head` (or use e_mix directly when
// head is null, the "Before" row), then average per-sample cosine against
// the predicted speaker's bank entry and classify through the frozen
// classifier B.
EvalCell evaluate_cell(const DemixHead* head, const std::vector<MixSpec>& pairs,
                       Direction direction, EvalContext& ctx);

// The "Clean" row: clean test-segment embeddings of the predicted speakers.
// Cosine is 1.0 by construction (self-comparison); accuracy is measured.
EvalCell evaluate_clean(const std::vector<MixSpec>& pairs, Direction direction,
                        EvalContext& ctx);

}  // namespace demixkit
