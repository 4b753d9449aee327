#include <doctest.h>

#include <fstream>

#include "parkocc/dataset.hpp"
#include "parkocc/errors.hpp"
#include "test_support.hpp"

using namespace parkocc;

namespace {

SampleRecord record(const std::string& scenario, const std::string& day, const std::string& spot, Label label) {
    SampleRecord r;
    r.dataset_id = DatasetId::PKLot;
    r.scenario_key = scenario;
    r.camera_id = scenario;
    r.day = parse_date(day);
    r.timestamp = "10:00:00";
    r.spot_id = spot;
    r.label = label;
    r.patch_path = "/p/" + scenario + "/" + day + "/" + spot + ".png";
    return r;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("dates round-trip and invalid dates are rejected") {
    CHECK(format_date(parse_date("2012-09-11")) == "2012-09-11");
    CHECK_THROWS_AS(parse_date("2012-02-30"), DataError);
    CHECK_THROWS_AS(parse_date("2012-9-11"), DataError);
    CHECK_THROWS_AS(parse_date("yesterday"), DataError);
}

TEST_CASE("dataset names accept CLI spellings") {
    CHECK(parse_dataset_id("pklot") == DatasetId::PKLot);
    CHECK(parse_dataset_id("CNR-EXT") == DatasetId::CNRExt);
    CHECK(parse_dataset_id("ndis") == DatasetId::NDISPark);
    CHECK(parse_dataset_id("Barry_Street") == DatasetId::BarryStreet);
    CHECK_FALSE(parse_dataset_id("imagenet").has_value());
    CHECK(dataset_id_from_string(to_string(DatasetId::CNRExt)) == DatasetId::CNRExt);
}

TEST_CASE("record JSON line round-trip keeps optional fields") {
    auto r = record("UFPR04", "2012-09-11", "001", Label::occupied);
    r.weather_tag = "Sunny";
    CHECK(record_from_json_line(record_to_json_line(r)) == r);
    r.timestamp.reset();
    r.weather_tag.reset();
    r.synthetic_day = true;
    CHECK(record_from_json_line(record_to_json_line(r)) == r);
}

TEST_CASE("stats recount labels and distinct days per scenario") {
    std::vector<SampleRecord> rs{record("A", "2012-09-11", "1", Label::occupied),
                                 record("A", "2012-09-11", "2", Label::empty),
                                 record("A", "2012-09-12", "1", Label::occupied),
                                 record("B", "2012-10-01", "1", Label::empty)};
    const DatasetIndex index(rs);
    CHECK(index.stats("A").occupied == 2);
    CHECK(index.stats("A").empty == 1);
    CHECK(index.stats("A").days.size() == 2);
    CHECK(index.stats("B").total() == 1);
    CHECK(index.scenarios() == std::vector<std::string>{"A", "B"});
    CHECK_THROWS_AS(index.stats("C"), DataError);
    CHECK(index.scenario_records("A").size() == 3);
}

TEST_CASE("manifest write/read reproduces the index") {
    parkocc::testing::TempDir dir;
    std::vector<SampleRecord> rs;
    for (int i = 0; i < 50; ++i) {
        rs.push_back(record(i % 2 ? "A" : "B", i < 25 ? "2012-09-11" : "2012-09-12", std::to_string(i),
                            i % 3 ? Label::empty : Label::occupied));
    }
    const DatasetIndex index(rs);
    write_manifest(index, dir / "m.jsonl");
    CHECK(read_manifest(dir / "m.jsonl") == index);
}

TEST_CASE("malformed manifest names the offending line") {
    parkocc::testing::TempDir dir;
    {
        std::ofstream out(dir / "m.jsonl");
        out << record_to_json_line(record("A", "2012-09-11", "1", Label::empty)) << "\n\n";
        out << "{\"dataset_id\": \"PKLot\"}\n";
    }
    try {
        read_manifest(dir / "m.jsonl");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("m.jsonl:3:") != std::string::npos);
    }
}

TEST_CASE("synthetic scenarios are separate corpora") {
    auto r = record("tex_a", "2024-03-01", "1", Label::empty);
    CHECK(corpus_key(r) == "PKLot");
    r.dataset_id = DatasetId::Synthetic;
    CHECK(corpus_key(r) == "Synthetic/tex_a");
}

TEST_CASE("temporal order sorts by day then time") {
    auto a = record("A", "2012-09-11", "1", Label::empty);
    auto b = record("A", "2012-09-11", "1", Label::empty);
    b.timestamp = "11:00:00";
    auto c = record("A", "2012-09-10", "9", Label::empty);
    CHECK(temporal_less(a, b));
    CHECK(temporal_less(c, a));
    CHECK_FALSE(temporal_less(b, a));
}

}
