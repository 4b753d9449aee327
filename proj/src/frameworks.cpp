#include "parkocc/frameworks.hpp"

#include <algorithm>

#include "parkocc/errors.hpp"

namespace parkocc {

std::string to_string(FrameworkKind kind) {
    switch (kind) {
        case FrameworkKind::single_model: return "single_model";
        case FrameworkKind::dynamic_selection: return "dynamic_selection";
        case FrameworkKind::stacking: return "stacking";
        case FrameworkKind::majority_vote: return "majority_vote";
    }
    return "unknown";
}

FrameworkKind framework_kind_from_string(const std::string& text) {
    std::string t = text;
    std::replace(t.begin(), t.end(), '-', '_');
    if (t == "single_model" || t == "single") return FrameworkKind::single_model;
    if (t == "dynamic_selection" || t == "dynse") return FrameworkKind::dynamic_selection;
    if (t == "stacking" || t == "stacking_svm" || t == "stacking_mlp") return FrameworkKind::stacking;
    if (t == "majority_vote" || t == "majority") return FrameworkKind::majority_vote;
    throw DataError("unknown framework '" + text +
                    "' (expected single_model, dynamic_selection, stacking or majority_vote)");
}

namespace {

Decision binary_decision(float empty, float occupied) {
    return occupied >= empty ? Decision{Label::occupied, occupied} : Decision{Label::empty, empty};
}

class SingleModelFramework final : public Framework {
public:
    explicit SingleModelFramework(Model model) : model_(std::move(model)) {
        if (model_.spec().num_outputs != 2) throw ModelError("single-model framework needs a binary classifier");
    }
    FrameworkKind kind() const override { return FrameworkKind::single_model; }
    std::string name() const override { return "Single Model"; }
    std::vector<Decision> classify(std::span<const cv::Mat> patches) const override {
        std::vector<cv::Mat> resized;
        resized.reserve(patches.size());
        for (const auto& p : patches) resized.push_back(resize_patch(p, model_.spec().input_size));
        const auto probs = model_.predict_proba(resized);
        std::vector<Decision> out;
        for (std::size_t r = 0; r < probs.rows; ++r) out.push_back(binary_decision(probs.at(r, 0), probs.at(r, 1)));
        return out;
    }

private:
    Model model_;
};

class MajorityVoteFramework final : public Framework {
public:
    explicit MajorityVoteFramework(Pool pool) : pool_(std::move(pool)) {}
    FrameworkKind kind() const override { return FrameworkKind::majority_vote; }
    std::string name() const override { return "Majority Vote"; }
    std::vector<Decision> classify(std::span<const cv::Mat> patches) const override {
        const auto posteriors = posterior_matrix(pool_, patches);
        std::vector<Decision> out;
        for (std::size_t r = 0; r < posteriors.rows; ++r) {
            const auto vote = majority_vote(posteriors.row(r));
            const double confidence =
                vote.label == Label::occupied ? vote.tally.mean_occupied : vote.tally.mean_empty;
            out.push_back({vote.label, confidence});
        }
        return out;
    }

private:
    Pool pool_;
};

class StackingFramework final : public Framework {
public:
    StackingFramework(Pool pool, MetaModel meta) : pool_(std::move(pool)), meta_(std::move(meta)) {
        if (meta_.kind() == MetaKind::dynse_selector) throw ModelError("stacking needs a stacking meta-model");
        check_signature(pool_, meta_);
    }
    FrameworkKind kind() const override { return FrameworkKind::stacking; }
    std::string name() const override {
        return meta_.kind() == MetaKind::stacking_svm ? "Stacking (SVM)" : "Stacking (MLP)";
    }
    std::vector<Decision> classify(std::span<const cv::Mat> patches) const override {
        const auto posteriors = posterior_matrix(pool_, patches);
        const auto labels = meta_.predict_posteriors(posteriors);
        const auto confidence = meta_.confidence_posteriors(posteriors);
        std::vector<Decision> out;
        for (std::size_t r = 0; r < labels.size(); ++r) out.push_back({labels[r], confidence[r]});
        return out;
    }

private:
    Pool pool_;
    MetaModel meta_;
};

class DynseFramework final : public Framework {
public:
    DynseFramework(Pool pool, MetaModel selector) : pool_(std::move(pool)), selector_(std::move(selector)) {
        if (selector_.kind() != MetaKind::dynse_selector) throw ModelError("dynamic selection needs a selector");
        check_signature(pool_, selector_);
    }
    FrameworkKind kind() const override { return FrameworkKind::dynamic_selection; }
    std::string name() const override { return "Dynamic Sel"; }
    std::vector<Decision> classify(std::span<const cv::Mat> patches) const override {
        const auto scores = selector_.selector_scores(patches);
        std::vector<std::vector<std::size_t>> routed(pool_.size());
        for (std::size_t r = 0; r < scores.rows; ++r) routed[select_member(scores.row(r))].push_back(r);
        std::vector<Decision> out(patches.size());
        std::vector<cv::Mat> batch;
        for (std::size_t k = 0; k < routed.size(); ++k) {
            if (routed[k].empty()) continue;
            const Model& member = pool_.member(k);
            batch.clear();
            for (std::size_t r : routed[k]) batch.push_back(resize_patch(patches[r], member.spec().input_size));
            const auto probs = member.predict_proba(batch);
            for (std::size_t i = 0; i < routed[k].size(); ++i) {
                out[routed[k][i]] = binary_decision(probs.at(i, 0), probs.at(i, 1));
            }
        }
        return out;
    }

private:
    Pool pool_;
    MetaModel selector_;
};

}  // namespace

std::shared_ptr<const Framework> make_single_model_framework(Model model) {
    return std::make_shared<SingleModelFramework>(std::move(model));
}

std::shared_ptr<const Framework> make_majority_vote_framework(Pool pool) {
    return std::make_shared<MajorityVoteFramework>(std::move(pool));
}

std::shared_ptr<const Framework> make_stacking_framework(Pool pool, MetaModel meta) {
    return std::make_shared<StackingFramework>(std::move(pool), std::move(meta));
}

std::shared_ptr<const Framework> make_dynse_framework(Pool pool, MetaModel selector) {
    return std::make_shared<DynseFramework>(std::move(pool), std::move(selector));
}

std::shared_ptr<const Framework> load_framework(const FrameworkSelection& selection) {
    auto require = [](const std::filesystem::path& p, const char* what) {
        if (p.empty()) throw DataError(std::string("framework selection lacks ") + what);
        if (!std::filesystem::exists(p)) throw DataError(std::string(what) + " not found: " + p.string());
    };
    switch (selection.kind) {
        case FrameworkKind::single_model:
            require(selection.model_dir, "model_dir");
            return make_single_model_framework(load_model(selection.model_dir));
        case FrameworkKind::majority_vote:
            require(selection.pool_dir, "pool_dir");
            return make_majority_vote_framework(load_pool(selection.pool_dir));
        case FrameworkKind::stacking:
            require(selection.pool_dir, "pool_dir");
            require(selection.meta_dir, "meta_dir");
            return make_stacking_framework(load_pool(selection.pool_dir), load_meta(selection.meta_dir));
        case FrameworkKind::dynamic_selection:
            require(selection.pool_dir, "pool_dir");
            require(selection.meta_dir, "meta_dir");
            return make_dynse_framework(load_pool(selection.pool_dir), load_meta(selection.meta_dir));
    }
    throw DataError("unknown framework kind");
}

void to_json(nlohmann::json& j, const FrameworkSelection& s) {
    j = nlohmann::json{{"kind", to_string(s.kind)},
                       {"model_dir", s.model_dir.string()},
                       {"pool_dir", s.pool_dir.string()},
                       {"meta_dir", s.meta_dir.string()}};
}

void from_json(const nlohmann::json& j, FrameworkSelection& s) {
    s = FrameworkSelection{};
    s.kind = framework_kind_from_string(j.at("kind").get<std::string>());
    s.model_dir = j.value("model_dir", std::string{});
    s.pool_dir = j.value("pool_dir", std::string{});
    s.meta_dir = j.value("meta_dir", std::string{});
}

}  // namespace parkocc
