#include <doctest.h>

#include "parkocc/errors.hpp"
#include "parkocc/meta.hpp"
#include "test_support.hpp"

using namespace parkocc;

namespace {

Pool conv3_pool(const std::vector<std::string>& keys) {
    std::vector<std::pair<std::string, Model>> members;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        BuildOptions options;
        options.init_seed = 200 + i;
        members.emplace_back(keys[i], build_model(BackboneSpec::defaults(BackboneFamily::conv3), options));
    }
    return Pool(std::move(members));
}

// Posterior vectors of a 3-member pool where two members are informative and
// one is noise; the label is recoverable from the informative members.
std::pair<ProbabilityMatrix, std::vector<Label>> stacking_data(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    ProbabilityMatrix m;
    m.rows = n;
    m.cols = 6;
    std::vector<Label> labels;
    for (std::size_t i = 0; i < n; ++i) {
        const bool occ = i % 2 == 0;
        labels.push_back(occ ? Label::occupied : Label::empty);
        for (int k = 0; k < 3; ++k) {
            const double o = k < 2 ? (occ ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4)) : rng.uniform();
            m.values.push_back(static_cast<float>(1.0 - o));
            m.values.push_back(static_cast<float>(o));
        }
    }
    return {m, labels};
}

double fraction_correct(const std::vector<Label>& predicted, const std::vector<Label>& labels) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) ok += predicted[i] == labels[i];
    return static_cast<double>(ok) / labels.size();
}

}  // namespace

TEST_SUITE("meta") {

TEST_CASE("stacking SVM and MLP fit separable posterior vectors") {
    const auto [train_x, train_y] = stacking_data(200, 1);
    const auto [test_x, test_y] = stacking_data(100, 2);
    const std::vector<std::string> sig{"A", "B", "C"};
    for (const auto kind : {MetaKind::stacking_svm, MetaKind::stacking_mlp}) {
        CAPTURE(to_string(kind));
        MlpSettings mlp;
        mlp.seed = 3;
        const auto meta = fit_stacking_meta(train_x, train_y, sig, kind, {}, mlp);
        CHECK(meta.input_dimension() == 6);
        CHECK(fraction_correct(meta.predict_posteriors(test_x), test_y) >= 0.97);
        for (const double c : meta.confidence_posteriors(test_x)) {
            CHECK(c >= 0.5);
            CHECK(c <= 1.0);
        }
    }
}

TEST_CASE("MLP meta keeps the 16-8-2 layout and is reproducible") {
    const auto [x, y] = stacking_data(80, 4);
    MlpSettings settings;
    settings.seed = 11;
    settings.epochs = 10;
    const auto a = fit_stacking_meta(x, y, {"A", "B", "C"}, MetaKind::stacking_mlp, {}, settings);
    const auto b = fit_stacking_meta(x, y, {"A", "B", "C"}, MetaKind::stacking_mlp, {}, settings);
    CHECK(a.mlp_layer_widths() == std::vector<int>{16, 8, 2});
    CHECK(a.confidence_posteriors(x) == b.confidence_posteriors(x));
}

TEST_CASE("explicit MLP weights compute the mean-posterior rule") {
    // hidden unit 0 = relu(sum occupied - sum empty), unit 1 = the reverse;
    // outputs (empty, occupied) read them back.
    MlpWeights w;
    w.weights = {{-1, 1, -1, 1, -1, 1, 1, -1, 1, -1, 1, -1}, {0, 1, 1, 0}};
    w.biases = {{0, 0}, {0, 0}};
    const auto meta = make_mlp_meta({"A", "B", "C"}, w);
    CHECK(meta.mlp_layer_widths() == std::vector<int>{2, 2});
    Rng rng(6);
    ProbabilityMatrix m;
    m.cols = 6;
    std::vector<Label> expected;
    for (int i = 0; i < 500; ++i) {
        double occ = 0.0;
        for (int k = 0; k < 3; ++k) {
            const float o = static_cast<float>(rng.uniform());
            m.values.push_back(1.0f - o);
            m.values.push_back(o);
            occ += o;
        }
        ++m.rows;
        expected.push_back(occ > 1.5 ? Label::occupied : Label::empty);
    }
    CHECK(meta.predict_posteriors(m) == expected);

    MlpWeights bad = w;
    bad.weights[1] = {0, 1, 1, 0, 1, 1};
    bad.biases[1] = {0, 0, 0};
    CHECK_THROWS_AS(make_mlp_meta({"A", "B", "C"}, bad), ModelError);
}

TEST_CASE("a meta refuses a pool it was not trained for") {
    const auto [x, y] = stacking_data(40, 5);
    const auto meta = fit_stacking_meta(x, y, {"A", "B", "C"}, MetaKind::stacking_svm);
    CHECK_NOTHROW(check_signature(conv3_pool({"A", "B", "C"}), meta));
    CHECK_THROWS_AS(check_signature(conv3_pool({"A", "C", "B"}), meta), ModelError);
    CHECK_THROWS_AS(check_signature(conv3_pool({"A", "B"}), meta), ModelError);
    ProbabilityMatrix short_rows;
    short_rows.rows = 1;
    short_rows.cols = 4;
    short_rows.values = {0.5f, 0.5f, 0.5f, 0.5f};
    CHECK_THROWS_AS(meta.predict_posteriors(short_rows), ModelError);
}

TEST_CASE("member selection takes the first maximum") {
    CHECK(select_member(std::vector<float>{0.2f, 0.5f, 0.3f}) == 1);
    CHECK(select_member(std::vector<float>{0.4f, 0.2f, 0.4f}) == 0);
    CHECK(select_member(std::vector<float>{0.1f, 0.45f, 0.45f}) == 1);
    CHECK_THROWS_AS(select_member(std::vector<float>{}), DataError);
}

TEST_CASE("dynamic selection routes to the selected member") {
    const auto pool = conv3_pool({"A", "B", "C"});
    auto spec = BackboneSpec::defaults(BackboneFamily::conv3);
    spec.num_outputs = 3;
    BuildOptions options;
    options.init_seed = 4;
    const auto selector = make_dynse_selector(pool.scenario_keys(), build_model(spec, options));
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto patch = parkocc::testing::random_image(32, 32, s);
        const auto scores = selector.selector_scores(std::span<const cv::Mat>(&patch, 1));
        const auto member = select_member(scores.row(0));
        const auto own = predict_proba(pool.member(member), std::span<const cv::Mat>(&patch, 1));
        const auto d = dynse_predict(pool, selector, patch);
        CHECK(d.member == member);
        CHECK(d.label == (own.at(0, 1) >= own.at(0, 0) ? Label::occupied : Label::empty));
        CHECK(d.confidence == doctest::Approx(std::max(own.at(0, 0), own.at(0, 1))));
    }
    auto two_way = build_model(BackboneSpec::defaults(BackboneFamily::conv3));
    CHECK_THROWS_AS(make_dynse_selector(pool.scenario_keys(), two_way), ModelError);
}

TEST_CASE("metas survive a save/load round-trip") {
    parkocc::testing::TempDir dir;
    const auto [x, y] = stacking_data(60, 7);
    MlpSettings mlp;
    mlp.epochs = 5;
    for (const auto kind : {MetaKind::stacking_svm, MetaKind::stacking_mlp}) {
        const auto meta = fit_stacking_meta(x, y, {"A", "B", "C"}, kind, {}, mlp);
        const auto path = dir / to_string(kind);
        save_meta(meta, path);
        const auto loaded = load_meta(path);
        CHECK(loaded.kind() == kind);
        CHECK(loaded.pool_signature() == meta.pool_signature());
        CHECK(loaded.predict_posteriors(x) == meta.predict_posteriors(x));
        const auto ca = meta.confidence_posteriors(x);
        const auto cb = loaded.confidence_posteriors(x);
        for (std::size_t i = 0; i < ca.size(); ++i) CHECK(cb[i] == doctest::Approx(ca[i]).epsilon(1e-6));
    }

    auto spec = BackboneSpec::defaults(BackboneFamily::conv3);
    spec.num_outputs = 2;
    const auto selector = make_dynse_selector({"A", "B"}, build_model(spec));
    save_meta(selector, dir / "dynse");
    const auto loaded = load_meta(dir / "dynse");
    CHECK(loaded.kind() == MetaKind::dynse_selector);
    const auto patch = parkocc::testing::random_image(32, 32, 1);
    CHECK(loaded.selector_scores(std::span<const cv::Mat>(&patch, 1)).values ==
          selector.selector_scores(std::span<const cv::Mat>(&patch, 1)).values);
    CHECK_THROWS_AS(load_meta(dir / "missing"), DataError);
}

}
