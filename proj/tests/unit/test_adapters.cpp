#include <doctest.h>

#include <fstream>
#include <map>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "parkocc/adapters.hpp"
#include "parkocc/errors.hpp"
#include "test_support.hpp"

using namespace parkocc;
namespace fs = std::filesystem;

namespace {

struct Expected {
    std::size_t occupied = 0;
    std::size_t empty = 0;
};

// Writes PKLot-style frames with XML annotations and returns the label counts
// the files contain, tallied while writing them.
std::map<std::string, Expected> write_pklot_tree(const fs::path& root) {
    std::map<std::string, Expected> expected;
    Rng rng(3);
    const std::vector<std::pair<std::string, std::string>> frames{
        {"UFPR04/Sunny/2012-12-07", "2012-12-07_10_05_00"},
        {"UFPR04/Cloudy/2012-12-08", "2012-12-08_11_05_00"},
        {"PUCPR/Rainy/2012-09-16", "2012-09-16_08_30_01"},
    };
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const auto dir = root / frames[f].first;
        fs::create_directories(dir);
        cv::imwrite((dir / (frames[f].second + ".jpg")).string(), parkocc::testing::random_image(200, 150, f));
        std::ofstream xml(dir / (frames[f].second + ".xml"));
        xml << "<?xml version=\"1.0\"?>\n<parking id=\"x\">\n";
        const std::string scenario = frames[f].first.substr(0, frames[f].first.find('/'));
        for (int s = 1; s <= 4; ++s) {
            const bool occupied = rng.bernoulli(0.5);
            (occupied ? expected[scenario].occupied : expected[scenario].empty) += 1;
            const int x = 10 + 45 * (s - 1);
            xml << "  <space id=\"" << s << "\" occupied=\"" << (occupied ? 1 : 0) << "\">\n"
                << "    <rotatedRect><center x=\"" << x + 15 << "\" y=\"60\"/><size w=\"30\" h=\"40\"/>"
                << "<angle d=\"0\"/></rotatedRect>\n"
                << "    <contour><point x=\"" << x + 30 << "\" y=\"40\"/><point x=\"" << x + 30
                << "\" y=\"80\"/><point x=\"" << x << "\" y=\"80\"/><point x=\"" << x << "\" y=\"40\"/></contour>\n"
                << "  </space>\n";
        }
        // A space without a label is skipped, not guessed.
        xml << "  <space id=\"9\"><contour><point x=\"1\" y=\"1\"/><point x=\"5\" y=\"1\"/><point x=\"5\" "
               "y=\"5\"/><point x=\"1\" y=\"5\"/></contour></space>\n";
        xml << "</parking>\n";
    }
    // Unparseable annotation.
    std::ofstream(root / "UFPR04/Sunny/2012-12-07/2012-12-07_10_10_00.xml") << "<parking><space";
    return expected;
}

}  // namespace

TEST_SUITE("adapters") {

TEST_CASE("PKLot frames: recount matches the written annotations") {
    parkocc::testing::TempDir dir;
    const auto expected = write_pklot_tree(dir / "pklot");
    IngestOptions options;
    options.patch_dir = dir / "patches";
    options.patch_size = 32;
    options.workers = 2;
    IngestStats stats;
    const auto index = load_dataset(dir / "pklot", DatasetId::PKLot, options, &stats);

    REQUIRE(index.scenario_stats().size() == expected.size());
    for (const auto& [scenario, counts] : expected) {
        CHECK(index.stats(scenario).occupied == counts.occupied);
        CHECK(index.stats(scenario).empty == counts.empty);
    }
    CHECK(index.stats("UFPR04").days.size() == 2);
    CHECK(stats.annotation_files == 4);
    CHECK(stats.skipped_annotations == 4);  // 3 unlabeled spaces + 1 broken file
    for (const auto& r : index.records()) {
        const cv::Mat patch = cv::imread(r.patch_path);
        REQUIRE_FALSE(patch.empty());
        CHECK(patch.size() == cv::Size(32, 32));
        CHECK(r.weather_tag.has_value());
    }
}

TEST_CASE("PKLot ingest is independent of worker count") {
    parkocc::testing::TempDir dir;
    write_pklot_tree(dir / "pklot");
    IngestOptions one;
    one.patch_dir = dir / "p1";
    one.patch_size = 24;
    one.workers = 1;
    IngestOptions many = one;
    many.patch_dir = dir / "p4";
    many.workers = 4;
    auto a = load_dataset(dir / "pklot", DatasetId::PKLot, one).records();
    auto b = load_dataset(dir / "pklot", DatasetId::PKLot, many).records();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].spot_id == b[i].spot_id);
        CHECK(a[i].day == b[i].day);
        CHECK(a[i].label == b[i].label);
        CHECK(cv::norm(cv::imread(a[i].patch_path), cv::imread(b[i].patch_path), cv::NORM_INF) == 0);
    }
}

TEST_CASE("PKLot segmented tree is read in place") {
    parkocc::testing::TempDir dir;
    std::size_t occupied = 0, empty = 0;
    for (int i = 0; i < 6; ++i) {
        const bool occ = i % 3 == 0;
        const auto folder = dir / "seg/UFPR05/Sunny/2013-03-13" / (occ ? "Occupied" : "Empty");
        fs::create_directories(folder);
        cv::imwrite((folder / ("2013-03-13_07_30_0" + std::to_string(i) + "#00" + std::to_string(i) + ".jpg")).string(),
                    parkocc::testing::random_image(20, 30, i));
        (occ ? occupied : empty) += 1;
    }
    const auto index = load_dataset(dir / "seg", DatasetId::PKLot, IngestOptions{});
    CHECK(index.stats("UFPR05").occupied == occupied);
    CHECK(index.stats("UFPR05").empty == empty);
    CHECK(index.records().front().spot_id == "000");
}

TEST_CASE("CNR-EXT label list: recount and camera scenarios") {
    parkocc::testing::TempDir dir;
    const auto root = dir / "cnr";
    fs::create_directories(root / "LABELS");
    std::ofstream labels(root / "LABELS/all.txt");
    std::map<std::string, Expected> expected;
    Rng rng(8);
    for (int cam = 1; cam <= 3; ++cam) {
        for (int day = 11; day <= 13; ++day) {
            for (int spot = 100; spot < 104; ++spot) {
                const bool occ = rng.bernoulli(0.4);
                char rel[160];
                std::snprintf(rel, sizeof rel, "SUNNY/2015-11-%02d/camera%d/S_2015-11-%02d_09.%02d_C0%d_%d.jpg", day, cam,
                              day, spot - 100, cam, spot);
                fs::create_directories((root / "PATCHES" / rel).parent_path());
                cv::imwrite((root / "PATCHES" / rel).string(), parkocc::testing::random_image(16, 16, spot));
                labels << rel << ' ' << (occ ? 1 : 0) << '\n';
                (occ ? expected["CAM" + std::to_string(cam)].occupied : expected["CAM" + std::to_string(cam)].empty) += 1;
            }
        }
    }
    labels << "SUNNY/2015-11-11/camera1/S_2015-11-11_09.59_C01_999.jpg 1\n";  // no such patch
    labels << "garbage line without label\n";
    labels.close();

    IngestStats stats;
    const auto index = load_dataset(root, DatasetId::CNRExt, IngestOptions{}, &stats);
    REQUIRE(index.scenario_stats().size() == 3);
    for (const auto& [scenario, counts] : expected) {
        CHECK(index.stats(scenario).occupied == counts.occupied);
        CHECK(index.stats(scenario).empty == counts.empty);
        CHECK(index.stats(scenario).days.size() == 3);
    }
    CHECK(stats.skipped_annotations == 2);
    CHECK(index.records().front().weather_tag == std::optional<std::string>("SUNNY"));
}

TEST_CASE("per-image JSON annotations (NDISPark and BarryStreet)") {
    parkocc::testing::TempDir dir;
    const auto root = dir / "ndis";
    fs::create_directories(root / "camA");
    std::size_t occupied = 0, empty = 0;
    for (int f = 0; f < 3; ++f) {
        const std::string stem = "2018-05-0" + std::to_string(f + 1) + "_10_00_00";
        cv::imwrite((root / "camA" / (stem + ".png")).string(), parkocc::testing::random_image(120, 90, f));
        nlohmann::json doc{{"timestamp", "2018-05-0" + std::to_string(f + 1) + "T10:00:00"}, {"spots", nlohmann::json::array()}};
        for (int s = 0; s < 3; ++s) {
            const bool occ = (f + s) % 2 == 0;
            (occ ? occupied : empty) += 1;
            const double x = 5 + 35 * s;
            doc["spots"].push_back({{"spot_id", "S" + std::to_string(s)},
                                    {"points", {{x, 10}, {x + 30, 10}, {x + 30, 60}, {x, 60}}},
                                    {"label", occ ? "occupied" : "empty"}});
        }
        std::ofstream(root / "camA" / (stem + ".json")) << doc.dump();
    }
    IngestOptions options;
    options.patch_dir = dir / "patches";
    options.patch_size = 16;
    const auto ndis = load_dataset(root, DatasetId::NDISPark, options);
    CHECK(ndis.stats("camA").occupied == occupied);
    CHECK(ndis.stats("camA").empty == empty);
    CHECK(ndis.stats("camA").days.size() == 3);
    CHECK_FALSE(ndis.records().front().synthetic_day);

    const auto barry = load_dataset(root, DatasetId::BarryStreet, options);
    CHECK(barry.scenarios() == std::vector<std::string>{"BarryStreet"});
    CHECK(barry.size() == occupied + empty);
}

TEST_CASE("frames without a capture time take their day from the file time") {
    parkocc::testing::TempDir dir;
    fs::create_directories(dir / "barry");
    cv::imwrite((dir / "barry/frame_a.png").string(), parkocc::testing::random_image(64, 64, 2));
    nlohmann::json doc{{"spots", {{{"spot_id", "1"}, {"points", {{1, 1}, {30, 1}, {30, 30}, {1, 30}}}, {"occupied", true}}}}};
    std::ofstream(dir / "barry/frame_a.json") << doc.dump();
    IngestOptions options;
    options.patch_dir = dir / "patches";
    const auto index = load_dataset(dir / "barry", DatasetId::BarryStreet, options);
    REQUIRE(index.size() == 1);
    CHECK(index.records()[0].synthetic_day);
    CHECK(index.records()[0].label == Label::occupied);
}

TEST_CASE("missing or empty roots are data errors") {
    parkocc::testing::TempDir dir;
    CHECK_THROWS_AS(load_dataset(dir / "nope", DatasetId::PKLot, IngestOptions{}), DataError);
    fs::create_directories(dir / "empty");
    CHECK_THROWS_AS(load_dataset(dir / "empty", DatasetId::CNRExt, IngestOptions{}), DataError);
}

}
