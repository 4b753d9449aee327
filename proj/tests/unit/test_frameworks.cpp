#include <doctest.h>

#include "parkocc/errors.hpp"
#include "parkocc/frameworks.hpp"
#include "test_support.hpp"

using namespace parkocc;

namespace {

Pool conv3_pool(std::size_t n) {
    std::vector<std::pair<std::string, Model>> members;
    for (std::size_t i = 0; i < n; ++i) {
        BuildOptions options;
        options.init_seed = 300 + i;
        members.emplace_back("S" + std::to_string(i), build_model(BackboneSpec::defaults(BackboneFamily::conv3), options));
    }
    return Pool(std::move(members));
}

std::vector<cv::Mat> patches(int n, int side) {
    std::vector<cv::Mat> out;
    for (int i = 0; i < n; ++i) out.push_back(parkocc::testing::random_image(side, side, 50 + i));
    return out;
}

}  // namespace

TEST_SUITE("frameworks") {

TEST_CASE("kind names parse and print") {
    CHECK(framework_kind_from_string("majority_vote") == FrameworkKind::majority_vote);
    CHECK(framework_kind_from_string("dynse") == FrameworkKind::dynamic_selection);
    CHECK(framework_kind_from_string("stacking_svm") == FrameworkKind::stacking);
    CHECK(framework_kind_from_string("single") == FrameworkKind::single_model);
    CHECK_THROWS_AS(framework_kind_from_string("bagging"), DataError);
    CHECK(framework_kind_from_string(to_string(FrameworkKind::dynamic_selection)) == FrameworkKind::dynamic_selection);
}

TEST_CASE("single model decisions are the argmax with its probability") {
    const auto model = build_model(BackboneSpec::defaults(BackboneFamily::conv3));
    const auto fw = make_single_model_framework(model);
    CHECK(fw->name() == "Single Model");
    const auto batch = patches(6, 32);
    const auto decisions = fw->classify(batch);
    const auto probs = predict_proba(model, batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const bool occ = probs.at(i, 1) >= probs.at(i, 0);
        CHECK(decisions[i].label == (occ ? Label::occupied : Label::empty));
        CHECK(decisions[i].confidence == doctest::Approx(std::max(probs.at(i, 0), probs.at(i, 1))));
    }
}

TEST_CASE("majority framework matches majority_vote and accepts any patch size") {
    const auto pool = conv3_pool(3);
    const auto fw = make_majority_vote_framework(pool);
    CHECK(fw->name() == "Majority Vote");
    const auto batch = patches(5, 57);
    const auto decisions = fw->classify(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(decisions[i].label == majority_vote(pool, resize_patch(batch[i], 32)).label);
        CHECK(decisions[i].confidence >= 0.5);
        CHECK(decisions[i].confidence <= 1.0);
    }
}

TEST_CASE("stacking and dynamic selection are named after their meta") {
    const auto pool = conv3_pool(2);
    ProbabilityMatrix x;
    x.rows = 4;
    x.cols = 4;
    x.values = {0.9f, 0.1f, 0.8f, 0.2f, 0.1f, 0.9f, 0.3f, 0.7f, 0.7f, 0.3f, 0.9f, 0.1f, 0.2f, 0.8f, 0.1f, 0.9f};
    const std::vector<Label> y{Label::empty, Label::occupied, Label::empty, Label::occupied};
    const auto svm = fit_stacking_meta(x, y, pool.scenario_keys(), MetaKind::stacking_svm);
    CHECK(make_stacking_framework(pool, svm)->name() == "Stacking (SVM)");
    MlpSettings mlp;
    mlp.epochs = 2;
    const auto mlp_meta = fit_stacking_meta(x, y, pool.scenario_keys(), MetaKind::stacking_mlp, {}, mlp);
    const auto stacking = make_stacking_framework(pool, mlp_meta);
    CHECK(stacking->name() == "Stacking (MLP)");
    const auto batch = patches(3, 32);
    const auto decisions = stacking->classify(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        CHECK(decisions[i].label == stacking_predict(pool, mlp_meta, batch[i]));
    }

    CHECK_THROWS_AS(make_stacking_framework(conv3_pool(3), svm), ModelError);
    const auto selector = make_dynse_selector(pool.scenario_keys(), build_model(BackboneSpec::defaults(BackboneFamily::conv3)));
    const auto dynse = make_dynse_framework(pool, selector);
    CHECK(dynse->name() == "Dynamic Sel");
    CHECK_THROWS_AS(make_stacking_framework(pool, selector), ModelError);
    CHECK_THROWS_AS(make_dynse_framework(pool, svm), ModelError);
}

TEST_CASE("frameworks load from disk and report missing artifacts") {
    parkocc::testing::TempDir dir;
    const auto pool = conv3_pool(2);
    save_pool(pool, dir / "pool");
    FrameworkSelection sel;
    sel.kind = FrameworkKind::majority_vote;
    sel.pool_dir = dir / "pool";
    const auto fw = load_framework(sel);
    CHECK(fw->kind() == FrameworkKind::majority_vote);

    const nlohmann::json j = sel;
    const auto back = j.get<FrameworkSelection>();
    CHECK(back.kind == sel.kind);
    CHECK(back.pool_dir == sel.pool_dir);

    sel.kind = FrameworkKind::stacking;
    CHECK_THROWS_AS(load_framework(sel), DataError);
    sel.meta_dir = dir / "nowhere";
    CHECK_THROWS_AS(load_framework(sel), DataError);
    FrameworkSelection single;
    single.model_dir = dir / "model";
    CHECK_THROWS_AS(load_framework(single), DataError);
}

}
