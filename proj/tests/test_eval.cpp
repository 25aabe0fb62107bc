#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "demixkit/eval.hpp"

using namespace demixkit;

TEST_CASE("cosine similarity basics") {
  const std::vector<double> v{0.3, -0.2, 0.9};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(cosine_similarity({1, 0, 0}, {0, 1, 0}) == doctest::Approx(0.0));
  CHECK(cosine_similarity({1, 0}, {1, 1}) == doctest::Approx(0.70711).epsilon(1e-5));

  CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 1}), ValueError);
  CHECK_THROWS_AS(cosine_similarity({1, 0}, {1, 0, 0}), ShapeError);
}

TEST_CASE("cosine is invariant to positive rescaling") {
  const std::vector<double> a{0.5, -1.5, 2.0, 0.1};
  const std::vector<double> b{-0.4, 0.8, 1.1, -2.0};
  const double base = cosine_similarity(a, b);
  for (double alpha : {1e-6, 0.5, 3.0, 1e6}) {
    std::vector<double> scaled = a;
    for (double& v : scaled) v *= alpha;
    CHECK(std::abs(cosine_similarity(scaled, b) - base) < 1e-12);
  }
}

TEST_CASE("mean of per-sample cosines differs from cosine of the mean") {
  // Two predictions at right angles to each other, one shared target.
  const std::vector<double> target{1.0, 0.0};
  const std::vector<double> p1{1.0, 0.0};
  const std::vector<double> p2{0.0, 1.0};
  const double mean_of_cosines =
      (cosine_similarity(p1, target) + cosine_similarity(p2, target)) / 2.0;
  const std::vector<double> mean_prediction{0.5, 0.5};
  const double cosine_of_mean = cosine_similarity(mean_prediction, target);
  CHECK(mean_of_cosines == doctest::Approx(0.5));
  CHECK(cosine_of_mean == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(mean_of_cosines != cosine_of_mean);  // the report uses the former
}

namespace {

EvalReport sample_report() {
  EvalReport report;
  int n = 0;
  for (Direction direction : {Direction::kKnownInterferer, Direction::kKnownTarget}) {
    for (const std::string& row : kReportRowOrder) {
      for (double snr : {-5.0, 0.0, 5.0}) {
        EvalCell cell;
        cell.cosine = row == "clean" ? 1.0 : 0.25 + 0.01 * n;
        cell.accuracy = row == "clean" ? 0.985 : 0.3 + 0.005 * n;
        cell.n_examples = 100 + n;
        report.set(direction, row, snr, cell);
        ++n;
      }
    }
  }
  return report;
}

}  // namespace

TEST_CASE("report json round trip is lossless") {
  const EvalReport report = sample_report();
  const EvalReport back = EvalReport::from_json(report.to_json());
  CHECK(report == back);
}

TEST_CASE("report rendering is deterministic") {
  const EvalReport report = sample_report();
  CHECK(report.to_table() == report.to_table());
  CHECK(report.to_json() == report.to_json());
  CHECK(report.to_csv() == report.to_csv());
  CHECK(render_report(report, ReportFormat::kTable) == report.to_table());
}

TEST_CASE("table mode: row order and -5/0/5 column order") {
  const EvalReport report = sample_report();
  const std::string table = report.to_table();

  // rows appear in paper order
  std::size_t at = 0;
  for (const std::string& row : kReportRowOrder) {
    const std::size_t pos = table.find(display_row_name(row) + " ", at);
    REQUIRE(pos != std::string::npos);
    at = pos;
  }
  // SNR columns ascend: -5dB before 0dB before 5dB
  const std::size_t neg = table.find("-5dB");
  const std::size_t zero = table.find(" 0dB");
  const std::size_t pos = table.find(" 5dB");
  REQUIRE(neg != std::string::npos);
  REQUIRE(zero != std::string::npos);
  REQUIRE(pos != std::string::npos);
  CHECK(neg < zero);
  CHECK(zero < pos);

  // cosine printed to 2 decimals, accuracy to 1 decimal (percent)
  CHECK(table.find("1.00") != std::string::npos);   // clean cosine
  CHECK(table.find("98.5") != std::string::npos);   // clean accuracy
}

TEST_CASE("csv mode: 8 rows per direction/snr, full precision") {
  const EvalReport report = sample_report();
  const std::string csv = report.to_csv();
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "direction,row,snr_db,cosine,accuracy,n_examples");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 2 * 8 * 3);  // directions x rows x snrs
}

TEST_CASE("missing cells render as dashes, not zeros") {
  EvalReport report;
  report.set(Direction::kKnownInterferer, "before", 0.0, EvalCell{0.4, 0.5, 10});
  report.set(Direction::kKnownInterferer, "sub", 5.0, EvalCell{0.8, 0.9, 10});
  const std::string table = report.to_table();
  CHECK(table.find("-") != std::string::npos);
}

TEST_CASE("report format parsing") {
  CHECK(parse_report_format("table") == ReportFormat::kTable);
  CHECK(parse_report_format("json") == ReportFormat::kJson);
  CHECK(parse_report_format("csv") == ReportFormat::kCsv);
  CHECK_THROWS_AS(parse_report_format("xml"), ValueError);
}

TEST_CASE("malformed report json is rejected") {
  CHECK_THROWS_AS(EvalReport::from_json("{ not json"), IoError);
  CHECK_THROWS_AS(EvalReport::from_json(R"({"d":{"r":{"0":{"cosine":1}}}})"), IoError);
}
