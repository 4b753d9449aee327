#include <doctest.h>

#include <algorithm>

#include <opencv2/imgcodecs.hpp>

#include "parkocc/synthetic.hpp"
#include "test_support.hpp"

using namespace parkocc;

TEST_SUITE("synthetic") {

TEST_CASE("patches are deterministic per seed") {
    const auto a = render_synthetic_patch(SyntheticTexture::paver_checker, true, 32, 5);
    const auto b = render_synthetic_patch(SyntheticTexture::paver_checker, true, 32, 5);
    const auto c = render_synthetic_patch(SyntheticTexture::paver_checker, true, 32, 6);
    CHECK(a.size() == cv::Size(32, 32));
    CHECK(a.type() == CV_8UC3);
    CHECK(cv::norm(a, b, cv::NORM_INF) == 0);
    CHECK(cv::norm(a, c, cv::NORM_INF) > 0);
}

TEST_CASE("textures differ in appearance") {
    const auto asphalt = cv::mean(render_synthetic_patch(SyntheticTexture::asphalt_stripes, false, 48, 1));
    const auto pavers = cv::mean(render_synthetic_patch(SyntheticTexture::paver_checker, false, 48, 1));
    const auto gravel = cv::mean(render_synthetic_patch(SyntheticTexture::speckled_gravel, false, 48, 1));
    CHECK(cv::norm(asphalt - pavers) > 5);
    CHECK(cv::norm(asphalt - gravel) > 5);
    CHECK(cv::norm(pavers - gravel) > 5);
}

TEST_CASE("brightness alone does not separate the classes of a texture") {
    for (auto texture : {SyntheticTexture::asphalt_stripes, SyntheticTexture::paver_checker,
                         SyntheticTexture::speckled_gravel}) {
        double empty_max = 0.0, occupied_min = 255.0;
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const auto gray = [](const cv::Mat& m) { const auto s = cv::mean(m); return (s[0] + s[1] + s[2]) / 3; };
            empty_max = std::max(empty_max, gray(render_synthetic_patch(texture, false, 32, seed)));
            occupied_min = std::min(occupied_min, gray(render_synthetic_patch(texture, true, 32, 1000 + seed)));
        }
        CHECK(empty_max > occupied_min);
    }
}

TEST_CASE("corpus records match the files written and spread over days") {
    parkocc::testing::TempDir dir;
    std::vector<SyntheticScenarioSpec> specs{{"tex_a", SyntheticTexture::asphalt_stripes, 60, 6, 0.5},
                                             {"tex_b", SyntheticTexture::speckled_gravel, 40, 4, 0.3}};
    const auto records = generate_synthetic_corpus(specs, dir.path(), 24, 9);
    const DatasetIndex index(records);
    REQUIRE(index.scenarios() == std::vector<std::string>{"tex_a", "tex_b"});
    CHECK(index.stats("tex_a").total() == 60);
    CHECK(index.stats("tex_a").days.size() == 6);
    CHECK(format_date(index.stats("tex_a").days.front()) == "2024-03-01");
    CHECK(index.stats("tex_b").total() == 40);
    CHECK(index.stats("tex_b").days.size() == 4);
    for (const auto& r : records) {
        CHECK(r.dataset_id == DatasetId::Synthetic);
        CHECK(cv::imread(r.patch_path).size() == cv::Size(24, 24));
    }
    const auto again = generate_synthetic_corpus(specs, dir / "again", 24, 9);
    REQUIRE(again.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) CHECK(again[i].label == records[i].label);
}

}
