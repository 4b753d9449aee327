#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "parkocc/errors.hpp"
#include "parkocc/evaluator.hpp"
#include <opencv2/imgcodecs.hpp>

#include "test_support.hpp"

using namespace parkocc;

namespace {

struct ReferenceRow {
    std::array<double, 5> cells;
    double mean;
    double std;
};

// Reference cross-dataset result rows (five target columns) with their
// Average column, in percent.
const std::vector<ReferenceRow> kReferenceRows{
    {{98.3, 98.3, 59.8, 67.4, 79.7}, 80.7, 17.5}, {{94.8, 97.5, 64.8, 66.5, 81.8}, 81.1, 15.3},
    {{98.1, 99.2, 64.6, 64.8, 83.4}, 82.0, 17.0}, {{98.2, 99.3, 61.4, 64.4, 82.2}, 81.1, 18.0},
    {{97.4, 99.3, 59.9, 64.5, 81.3}, 80.5, 18.2}, {{99.2, 98.4, 73.4, 81.5, 91.1}, 88.7, 11.1},
    {{99.0, 97.0, 74.9, 82.2, 93.4}, 89.3, 10.3}, {{99.3, 98.5, 78.0, 82.4, 92.3}, 90.1, 9.6},
    {{99.2, 99.0, 73.2, 81.1, 90.7}, 88.6, 11.4}, {{99.1, 99.1, 72.2, 80.8, 91.2}, 88.5, 11.8},
    {{97.6, 97.5, 67.7, 80.0, 95.2}, 87.6, 13.3}, {{97.2, 96.0, 64.2, 78.0, 94.9}, 86.1, 14.5},
    {{98.9, 98.4, 73.1, 77.9, 95.4}, 88.7, 12.3}, {{97.9, 99.3, 54.1, 67.4, 85.9}, 80.9, 19.7},
    {{98.2, 99.3, 54.2, 67.7, 88.1}, 81.5, 19.8},
};

struct StubFramework final : Framework {
    FrameworkKind kind() const override { return FrameworkKind::single_model; }
    std::string name() const override { return "Stub"; }
    std::vector<Decision> classify(std::span<const cv::Mat> patches) const override {
        // occupied when the patch is bright
        std::vector<Decision> out;
        for (const auto& p : patches) out.push_back({cv::mean(p)[0] > 128 ? Label::occupied : Label::empty, 1.0});
        return out;
    }
};

}  // namespace

TEST_SUITE("evaluator") {

TEST_CASE("accuracy is correct over total without balancing") {
    std::vector<Label> truth(100, Label::occupied);
    std::fill(truth.begin() + 60, truth.end(), Label::empty);
    const std::vector<Label> all_occupied(100, Label::occupied);
    const auto outcome = score_predictions(all_occupied, truth);
    CHECK(outcome.accuracy() == doctest::Approx(0.6));
    CHECK(outcome.occupied == 60);
    CHECK(outcome.empty == 40);
    CHECK_THROWS_AS(score_predictions(all_occupied, std::span<const Label>(truth).first(10)), DataError);
}

TEST_CASE("run aggregation uses the population spread") {
    const std::vector<double> runs{0.9, 1.0};
    const auto agg = aggregate_runs(runs);
    CHECK(agg.mean == doctest::Approx(0.95));
    CHECK(agg.std == doctest::Approx(0.05));
    CHECK(format_cell(agg.mean, agg.std) == "95.0 (5.0)");
    CHECK(format_cell(0.955, 0.040) == "95.5 (4.0)");
    CHECK_THROWS_AS(aggregate_runs(std::vector<double>{}), DataError);
}

TEST_CASE("Average column matches the reference result rows") {
    for (const auto& row : kReferenceRows) {
        EvalReport report("PKLot");
        for (std::size_t i = 0; i < row.cells.size(); ++i) {
            report.add_accuracy("MobileNetV3", "Majority Vote", "T" + std::to_string(i), row.cells[i] / 100.0);
        }
        const auto avg = report.average(report.rows().front());
        REQUIRE(avg.has_value());
        // inputs are rounded to 0.1, so allow that much drift
        CHECK(std::abs(avg->mean * 100.0 - row.mean) <= 0.1);
        CHECK(std::abs(avg->std * 100.0 - row.std) <= 0.1);
    }
}

TEST_CASE("a single target has zero spread in the Average column") {
    EvalReport report("CNR-EXT");
    report.add_accuracy("ResNet-50", "Single Model", "PUCPR", 0.8);
    report.add_accuracy("ResNet-50", "Single Model", "PUCPR", 0.9);
    const auto avg = report.average(report.rows().front());
    CHECK(avg->mean == doctest::Approx(0.85));
    CHECK(avg->std == 0.0);
}

TEST_CASE("rendering: csv grid, markdown grouping and missing cells") {
    EvalReport report("PKLot");
    report.add_target("CAM1");
    report.add_target("NDISPark");
    report.set_accuracies("MobileNetV3", "Single Model", "CAM1", {0.9, 1.0});
    report.set_accuracies("MobileNetV3", "Majority Vote", "CAM1", {0.8});
    report.set_accuracies("MobileNetV3", "Majority Vote", "NDISPark", {0.6});
    report.set_class_counts("CAM1", 30, 10);

    const auto csv = render_report(report, ReportFormat::csv);
    CHECK(csv ==
          "Backbone,Framework,CAM#1,NDIS,Average\n"
          "MobileNetV3,Single Model,95.0 (5.0),\xE2\x80\x94,95.0 (0.0)\n"
          "MobileNetV3,Majority Vote,80.0 (0.0),60.0 (0.0),70.0 (14.1)\n");

    const auto md = render_report(report, ReportFormat::markdown);
    CHECK(md.find("Source: PKLot") != std::string::npos);
    CHECK(md.find("| MobileNetV3 | Single Model |") != std::string::npos);
    CHECK(md.find("|  | Majority Vote |") != std::string::npos);
    CHECK(md.find("- CAM#1: 30 / 10 (75.0% occupied)") != std::string::npos);

    EvalReport one("PKLot");
    one.add_accuracy("3-Conv. Layers", "Single Model", "PUCPR", 0.5);
    const auto single = render_report(one, ReportFormat::csv);
    CHECK(std::count(single.begin(), single.end(), '\n') == 2);
}

TEST_CASE("report JSON round-trip") {
    EvalReport report("CNR-EXT");
    report.add_accuracy("ResNet-50", "Dynamic Sel", "UFPR04", 0.7);
    report.add_accuracy("ResNet-50", "Dynamic Sel", "UFPR04", 0.75);
    report.set_class_counts("UFPR04", 5, 7);
    const nlohmann::json j = report;
    const auto back = j.get<EvalReport>();
    CHECK(render_report(back, ReportFormat::markdown) == render_report(report, ReportFormat::markdown));
}

TEST_CASE("evaluation refuses targets from a source corpus") {
    parkocc::testing::TempDir dir;
    std::vector<SampleRecord> target;
    for (int i = 0; i < 10; ++i) {
        SampleRecord r;
        r.dataset_id = DatasetId::NDISPark;
        r.scenario_key = "NDISPark";
        r.day = parse_date("2018-01-01");
        r.spot_id = std::to_string(i);
        r.label = i < 6 ? Label::occupied : Label::empty;
        r.patch_path = (dir / (std::to_string(i) + ".png")).string();
        cv::imwrite(r.patch_path, cv::Mat(16, 16, CV_8UC3, cv::Scalar::all(i < 6 ? 200 : (i < 8 ? 30 : 220))));
        target.push_back(r);
    }
    const StubFramework fw;
    const auto outcome = evaluate_framework(fw, {"PKLot"}, target, 3);
    CHECK(outcome.total == 10);
    CHECK(outcome.correct == 8);
    try {
        evaluate_framework(fw, {"NDISPark"}, target);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("cross-dataset violation") != std::string::npos);
    }
}

TEST_CASE("target column names") {
    CHECK(target_display_name("CAM1") == "CAM#1");
    CHECK(target_display_name("NDISPark") == "NDIS");
    CHECK(target_display_name("UFPR04") == "UFPR04");
}

}
