#include "parkocc/pool.hpp"

#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"
#include "parkocc/rng.hpp"

namespace parkocc {

namespace fs = std::filesystem;

Pool::Pool(std::vector<std::pair<std::string, Model>> members) {
    if (members.size() < 2) throw DataError("a pool needs at least 2 members");
    std::set<std::string> seen;
    for (auto& [key, model] : members) {
        if (!seen.insert(key).second) throw DataError("duplicate pool member '" + key + "'");
        if (!model.valid()) throw DataError("pool member '" + key + "' has no model");
        if (model.spec().num_outputs != 2) throw ModelError("pool member '" + key + "' is not a binary classifier");
        keys_.push_back(key);
        models_.push_back(std::move(model));
    }
}

ProbabilityMatrix posterior_matrix(const Pool& pool, std::span<const cv::Mat> patches) {
    ProbabilityMatrix out;
    out.rows = patches.size();
    out.cols = 2 * pool.size();
    out.values.assign(out.rows * out.cols, 0.0f);
    std::vector<cv::Mat> resized;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const Model& member = pool.member(k);
        resized.clear();
        for (const auto& p : patches) resized.push_back(resize_patch(p, member.spec().input_size));
        const auto probs = member.predict_proba(resized);
        for (std::size_t r = 0; r < out.rows; ++r) {
            out.values[r * out.cols + 2 * k] = probs.at(r, 0);
            out.values[r * out.cols + 2 * k + 1] = probs.at(r, 1);
        }
    }
    return out;
}

PosteriorVector posterior_vector(const Pool& pool, const cv::Mat& patch) {
    return posterior_matrix(pool, std::span<const cv::Mat>(&patch, 1)).values;
}

VoteDecision majority_vote(std::span<const float> posteriors) {
    if (posteriors.empty() || posteriors.size() % 2 != 0) {
        throw DataError("posterior vector length must be a positive multiple of 2");
    }
    VoteDecision d;
    const std::size_t n = posteriors.size() / 2;
    for (std::size_t k = 0; k < n; ++k) {
        const float empty = posteriors[2 * k];
        const float occupied = posteriors[2 * k + 1];
        if (occupied >= empty) {
            ++d.tally.occupied_votes;
        } else {
            ++d.tally.empty_votes;
        }
        d.tally.mean_empty += empty;
        d.tally.mean_occupied += occupied;
    }
    d.tally.mean_empty /= static_cast<double>(n);
    d.tally.mean_occupied /= static_cast<double>(n);
    if (d.tally.occupied_votes != d.tally.empty_votes) {
        d.label = d.tally.occupied_votes > d.tally.empty_votes ? Label::occupied : Label::empty;
    } else {
        d.tally.tie_broken = true;
        d.label = d.tally.mean_empty > d.tally.mean_occupied ? Label::empty : Label::occupied;
    }
    return d;
}

VoteDecision majority_vote(const Pool& pool, const cv::Mat& patch) {
    const auto v = posterior_vector(pool, patch);
    return majority_vote(v);
}

Pool train_pool(std::span<const ScenarioSplit> source_scenarios, const BackboneSpec& spec, const TrainConfig& config,
                const BuildOptions& build, bool cache_patches) {
    std::vector<std::pair<std::string, Model>> members;
    for (const auto& split : source_scenarios) {
        TrainConfig member_config = config;
        member_config.seed = derive_seed(config.seed, hash_key(split.scenario_key));
        auto run = train_on_splits(spec, std::span<const ScenarioSplit>(&split, 1), member_config, build, cache_patches);
        members.emplace_back(split.scenario_key, std::move(run.model));
    }
    return Pool(std::move(members));
}

Model build_single_model(std::span<const ScenarioSplit> source_scenarios, const BackboneSpec& spec,
                         const TrainConfig& config, const BuildOptions& build, bool cache_patches) {
    return train_on_splits(spec, source_scenarios, config, build, cache_patches).model;
}

namespace {

std::string member_dir_name(std::size_t index, const std::string& key) {
    std::string safe;
    for (char c : key) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return std::to_string(index) + "_" + safe;
}

}  // namespace

void save_pool(const Pool& pool, const fs::path& dir) {
    fs::create_directories(dir / "members");
    nlohmann::json doc{{"format", 1}, {"posterior_order", kPosteriorOrder}, {"scenario_keys", pool.scenario_keys()}};
    auto members = nlohmann::json::array();
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto rel = fs::path("members") / member_dir_name(k, pool.scenario_keys()[k]);
        save_model(pool.member(k), dir / rel);
        members.push_back(rel.string());
    }
    doc["members"] = members;
    std::ofstream out(dir / "pool.json");
    out << doc.dump(2) << '\n';
    if (!out) throw Error("cannot write " + (dir / "pool.json").string());
}

Pool load_pool(const fs::path& dir) {
    const fs::path path = dir / "pool.json";
    std::ifstream in(path);
    if (!in) throw DataError("pool directory " + dir.string() + " has no pool.json");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed " + path.string() + ": " + e.what());
    }
    if (doc.value("posterior_order", std::string{}) != kPosteriorOrder) {
        throw ModelError("pool " + dir.string() + " uses an unknown posterior ordering");
    }
    const auto keys = doc.at("scenario_keys").get<std::vector<std::string>>();
    const auto dirs = doc.at("members").get<std::vector<std::string>>();
    if (keys.size() != dirs.size()) throw DataError("pool.json lists different numbers of keys and members");
    std::vector<std::pair<std::string, Model>> members;
    for (std::size_t k = 0; k < keys.size(); ++k) members.emplace_back(keys[k], load_model(dir / dirs[k]));
    return Pool(std::move(members));
}

}  // namespace parkocc
