#include "demixkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace demixkit {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: dimensions " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValueError("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

const std::vector<std::string> kReportRowOrder = {
    "before", "sub", "mul", "concat1", "concat2", "share-concat",
    "separate-concat", "clean"};

std::string display_row_name(const std::string& row) {
  if (row == "before") return "Before";
  if (row == "sub") return "Sub";
  if (row == "mul") return "Mul";
  if (row == "concat1") return "Concat1";
  if (row == "concat2") return "Concat2";
  if (row == "share-concat") return "Share-Concat";
  if (row == "separate-concat") return "Separate-Concat";
  if (row == "clean") return "Clean";
  return row;
}

namespace {

int to_mdb(double snr_db) { return static_cast<int>(std::lround(snr_db * 1000.0)); }

std::string mdb_to_label(int mdb) {
  const double db = mdb / 1000.0;
  char buf[32];
  if (mdb % 1000 == 0) {
    std::snprintf(buf, sizeof(buf), "%ddB", mdb / 1000);
  } else {
    std::snprintf(buf, sizeof(buf), "%gdB", db);
  }
  return buf;
}

}  // namespace

void EvalReport::set(Direction direction, const std::string& row, double snr_db,
                     EvalCell cell) {
  cells[to_string(direction)][row][to_mdb(snr_db)] = cell;
}

const EvalCell* EvalReport::find(Direction direction, const std::string& row,
                                 double snr_db) const {
  const auto dir = cells.find(to_string(direction));
  if (dir == cells.end()) return nullptr;
  const auto r = dir->second.find(row);
  if (r == dir->second.end()) return nullptr;
  const auto c = r->second.find(to_mdb(snr_db));
  return c == r->second.end() ? nullptr : &c->second;
}

std::vector<int> EvalReport::snrs_mdb(const std::string& direction) const {
  std::vector<int> out;
  const auto dir = cells.find(direction);
  if (dir == cells.end()) return out;
  for (const auto& [row, by_snr] : dir->second) {
    for (const auto& [mdb, cell] : by_snr) {
      if (std::find(out.begin(), out.end(), mdb) == out.end()) out.push_back(mdb);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json doc;
  for (const auto& [direction, rows] : cells) {
    for (const auto& [row, by_snr] : rows) {
      for (const auto& [mdb, cell] : by_snr) {
        doc[direction][row][std::to_string(mdb)] = {
            {"cosine", cell.cosine},
            {"accuracy", cell.accuracy},
            {"n_examples", cell.n_examples},
        };
      }
    }
  }
  return doc.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  EvalReport report;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    for (const auto& [direction, rows] : doc.items()) {
      for (const auto& [row, by_snr] : rows.items()) {
        for (const auto& [mdb, cell] : by_snr.items()) {
          EvalCell c;
          c.cosine = cell.at("cosine").get<double>();
          c.accuracy = cell.at("accuracy").get<double>();
          c.n_examples = cell.at("n_examples").get<int>();
          report.cells[direction][row][std::stoi(mdb)] = c;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report JSON: ") + e.what());
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "direction,row,snr_db,cosine,accuracy,n_examples\n";
  char buf[64];
  for (const auto& [direction, rows] : cells) {
    for (const std::string& row : kReportRowOrder) {
      const auto r = rows.find(row);
      if (r == rows.end()) continue;
      for (const auto& [mdb, cell] : r->second) {
        out << direction << "," << row << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", mdb / 1000.0);
        out << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", cell.cosine);
        out << buf << ",";
        std::snprintf(buf, sizeof(buf), "%.17g", cell.accuracy);
        out << buf << "," << cell.n_examples << "\n";
      }
    }
  }
  return out.str();
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  char buf[64];
  for (const auto& [direction, rows] : cells) {
    const std::vector<int> snrs = snrs_mdb(direction);
    out << "direction: " << direction << "\n";
    std::snprintf(buf, sizeof(buf), "%-18s", "");
    out << buf << " | Cosine Similarity";
    for (std::size_t i = 1; i < snrs.size(); ++i) out << "        ";
    out << " | Identification Accuracy (%)\n";
    std::snprintf(buf, sizeof(buf), "%-18s |", "SNR");
    out << buf;
    for (int mdb : snrs) {
      std::snprintf(buf, sizeof(buf), " %7s", mdb_to_label(mdb).c_str());
      out << buf;
    }
    out << " |";
    for (int mdb : snrs) {
      std::snprintf(buf, sizeof(buf), " %7s", mdb_to_label(mdb).c_str());
      out << buf;
    }
    out << "\n";
    for (const std::string& row : kReportRowOrder) {
      const auto r = rows.find(row);
      if (r == rows.end()) continue;
      std::snprintf(buf, sizeof(buf), "%-18s |", display_row_name(row).c_str());
      out << buf;
      for (int mdb : snrs) {
        const auto c = r->second.find(mdb);
        if (c == r->second.end()) {
          std::snprintf(buf, sizeof(buf), " %7s", "-");
        } else {
          std::snprintf(buf, sizeof(buf), " %7.2f", c->second.cosine);
        }
        out << buf;
      }
      out << " |";
      for (int mdb : snrs) {
        const auto c = r->second.find(mdb);
        if (c == r->second.end()) {
          std::snprintf(buf, sizeof(buf), " %7s", "-");
        } else {
          std::snprintf(buf, sizeof(buf), " %7.1f", 100.0 * c->second.accuracy);
        }
        out << buf;
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

bool EvalReport::operator==(const EvalReport& other) const {
  if (cells.size() != other.cells.size()) return false;
  for (const auto& [direction, rows] : cells) {
    const auto dir = other.cells.find(direction);
    if (dir == other.cells.end()) return false;
    if (rows.size() != dir->second.size()) return false;
    for (const auto& [row, by_snr] : rows) {
      const auto r = dir->second.find(row);
      if (r == dir->second.end() || by_snr.size() != r->second.size()) return false;
      for (const auto& [mdb, cell] : by_snr) {
        const auto c = r->second.find(mdb);
        if (c == r->second.end()) return false;
        if (cell.cosine != c->second.cosine || cell.accuracy != c->second.accuracy ||
            cell.n_examples != c->second.n_examples) {
          return false;
        }
      }
    }
  }
  return true;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "table") return ReportFormat::kTable;
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  throw ValueError("unknown report format '" + name + "' (expected table, json or csv)");
}

std::string render_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kTable: return report.to_table();
    case ReportFormat::kJson: return report.to_json();
    case ReportFormat::kCsv: return report.to_csv();
  }
  throw ValueError("unknown report format");
}

namespace {

int argmax(const std::vector<double>& values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) -
                          values.begin());
}

}  // namespace

EvalCell evaluate_cell(const DemixHead* head, const std::vector<MixSpec>& pairs,
                       Direction direction, EvalContext& ctx) {
  if (pairs.empty()) throw ValueError("evaluate: empty test set");
  const auto mix_embeddings =
      ctx.cache.get_all(ctx.extractor, ctx.data, pairs, ctx.crop_frames);

  EvalCell cell;
  double cosine_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string predicted =
        predicted_speaker(ctx.data.manifest(), pairs[i], direction);
    SpeakerEmbedding estimate;
    if (head == nullptr) {
      estimate.values = *mix_embeddings[i];
    } else {
      SpeakerEmbedding e_mix{*mix_embeddings[i], ""};
      SpeakerEmbedding known{
          ctx.bank.at(known_speaker(ctx.data.manifest(), pairs[i], direction)), ""};
      estimate = head->apply(e_mix, known);
    }
    cosine_sum += cosine_similarity(estimate.values, ctx.bank.at(predicted));
    const auto probs = classify(ctx.classifier, estimate);
    if (argmax(probs) == ctx.data.manifest().speaker_label(predicted)) ++correct;
  }
  cell.cosine = cosine_sum / pairs.size();
  cell.accuracy = static_cast<double>(correct) / pairs.size();
  cell.n_examples = static_cast<int>(pairs.size());
  return cell;
}

EvalCell evaluate_clean(const std::vector<MixSpec>& pairs, Direction direction,
                        EvalContext& ctx) {
  if (pairs.empty()) throw ValueError("evaluate: empty test set");
  std::vector<FeatureMatrix> crops;
  std::vector<int> labels;
  crops.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string& utt = direction == Direction::kKnownInterferer
                                 ? pairs[i].target_utt
                                 : pairs[i].interferer_utt;
    const FeatureMatrix& features = ctx.data.features(utt);
    const std::size_t crop = std::min<std::size_t>(ctx.crop_frames, features.num_frames);
    Rng rng(mix_seed(ctx.seed, 0xC1EA0 + i));
    crops.push_back(sample_segment(features, crop, rng));
    labels.push_back(ctx.data.manifest().speaker_label(
        predicted_speaker(ctx.data.manifest(), pairs[i], direction)));
  }
  const auto embeddings = extract_embeddings(ctx.extractor, crops);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto probs = classify(ctx.classifier, embeddings[i]);
    if (argmax(probs) == labels[i]) ++correct;
  }
  EvalCell cell;
  cell.cosine = 1.0;  // self-comparison of the clean reference
  cell.accuracy = static_cast<double>(correct) / pairs.size();
  cell.n_examples = static_cast<int>(pairs.size());
  return cell;
}

}  // namespace demixkit
