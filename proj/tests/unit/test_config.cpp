#include <doctest.h>

#include <fstream>

#include "parkocc/config.hpp"
#include "parkocc/errors.hpp"
#include "test_support.hpp"

using namespace parkocc;

TEST_SUITE("config") {

TEST_CASE("YAML scalars are typed and quoted strings stay strings") {
    parkocc::testing::TempDir dir;
    std::ofstream(dir / "c.yaml") << "seed: 7\n"
                                     "learning_rate: 0.001\n"
                                     "frozen: true\n"
                                     "name: \"123\"\n"
                                     "backbone: mobilenetv3_large\n"
                                     "head: [1024, 128]\n"
                                     "augment:\n"
                                     "  rotation_deg: 15\n"
                                     "  brightness: [0.7, 1.3]\n"
                                     "missing: ~\n";
    const auto cfg = load_config(dir / "c.yaml");
    CHECK(cfg["seed"] == 7);
    CHECK(cfg["seed"].is_number_integer());
    CHECK(cfg["learning_rate"].get<double>() == doctest::Approx(0.001));
    CHECK(cfg["frozen"] == true);
    CHECK(cfg["name"] == "123");
    CHECK(cfg["backbone"] == "mobilenetv3_large");
    CHECK(cfg["head"] == nlohmann::json({1024, 128}));
    CHECK(cfg["augment"]["brightness"][1].get<double>() == doctest::Approx(1.3));
    CHECK(cfg["missing"].is_null());
}

TEST_CASE("JSON configs load as-is; broken files are data errors") {
    parkocc::testing::TempDir dir;
    std::ofstream(dir / "c.json") << R"({"a": {"b": [1, 2]}})";
    CHECK(load_config(dir / "c.json")["a"]["b"][1] == 2);
    std::ofstream(dir / "bad.json") << "{";
    CHECK_THROWS_AS(load_config(dir / "bad.json"), DataError);
    std::ofstream(dir / "bad.yaml") << "a: [1, 2\n";
    CHECK_THROWS_AS(load_config(dir / "bad.yaml"), DataError);
    CHECK_THROWS_AS(load_config(dir / "absent.yaml"), DataError);
}

TEST_CASE("overrides merge recursively") {
    const nlohmann::json base{{"train", {{"epochs", 30}, {"lr", 0.001}}}, {"seed", 1}};
    const nlohmann::json over{{"train", {{"epochs", 5}}}, {"name", "x"}};
    const auto merged = merge_config(base, over);
    CHECK(merged["train"]["epochs"] == 5);
    CHECK(merged["train"]["lr"] == 0.001);
    CHECK(merged["seed"] == 1);
    CHECK(merged["name"] == "x");
    CHECK(merge_config(base, nullptr) == base);
}

}
