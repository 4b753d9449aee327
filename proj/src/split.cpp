#include "parkocc/split.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"
#include "parkocc/rng.hpp"

namespace parkocc {

std::vector<Date> distinct_days(const std::vector<SampleRecord>& records) {
    std::set<Date> days;
    for (const auto& r : records) days.insert(r.day);
    return {days.begin(), days.end()};
}

std::vector<SampleRecord> balance_classes(std::vector<SampleRecord> records, std::uint64_t seed) {
    std::vector<SampleRecord> occupied, empty;
    for (auto& r : records) (r.label == Label::occupied ? occupied : empty).push_back(std::move(r));
    if (occupied.empty() || empty.empty()) {
        throw DataError("cannot balance classes: " + std::string(occupied.empty() ? "occupied" : "empty") +
                        " class is absent");
    }
    // Work on a canonical order so the retained set depends only on the seed.
    std::sort(occupied.begin(), occupied.end(), record_key_less);
    std::sort(empty.begin(), empty.end(), record_key_less);

    auto& majority = occupied.size() >= empty.size() ? occupied : empty;
    auto& minority = occupied.size() >= empty.size() ? empty : occupied;

    Rng pick(derive_seed(seed, 0xBA1A));
    // Partial Fisher-Yates: the first minority.size() slots become a uniform sample.
    for (std::size_t i = 0; i < minority.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(pick.below(majority.size() - i));
        std::swap(majority[i], majority[j]);
    }
    majority.resize(minority.size());

    std::vector<SampleRecord> out;
    out.reserve(2 * minority.size());
    std::move(occupied.begin(), occupied.end(), std::back_inserter(out));
    std::move(empty.begin(), empty.end(), std::back_inserter(out));
    Rng order(derive_seed(seed, 0x5AFF1E));
    shuffle(std::span<SampleRecord>(out), order);
    return out;
}

ScenarioSplit temporal_split(const DatasetIndex& index, const std::string& scenario_key, std::uint64_t seed,
                             double train_ratio) {
    if (!index.has_scenario(scenario_key)) throw DataError("unknown scenario '" + scenario_key + "'");
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw DataError("train_ratio must lie in (0, 1)");

    const auto& days = index.stats(scenario_key).days;
    if (days.size() < 3) {
        throw DataError("scenario '" + scenario_key + "' has " + std::to_string(days.size()) +
                        " day(s): scenario unusable for training; evaluation-only");
    }
    const std::size_t n_days = days.size();
    const auto n_train = std::min(n_days - 1, static_cast<std::size_t>(std::ceil(train_ratio * n_days)));
    const std::size_t n_rest = n_days - n_train;
    const std::size_t n_val = n_rest / 2;  // test takes the extra day when odd

    const Date last_train = days[n_train - 1];
    const Date last_val = n_val > 0 ? days[n_train + n_val - 1] : last_train;

    ScenarioSplit split;
    split.scenario_key = scenario_key;
    split.split_seed = seed;
    std::vector<SampleRecord> train_pool;
    for (const auto& r : index.records()) {
        if (r.scenario_key != scenario_key) continue;
        if (r.day <= last_train) {
            train_pool.push_back(r);
        } else if (r.day <= last_val) {
            split.val.push_back(r);
        } else {
            split.test.push_back(r);
        }
    }
    std::sort(split.val.begin(), split.val.end(), temporal_less);
    std::sort(split.test.begin(), split.test.end(), temporal_less);
    split.train = balance_classes(std::move(train_pool), derive_seed(seed, 0x7A1));

    if (split.val.empty()) {
        log::warn(log::concat("scenario '", scenario_key, "' has ", n_days,
                              " days: validation is empty and falls back to a 10% temporal tail of train"));
    }
    return split;
}

ScenarioSplit with_validation_fallback(ScenarioSplit split) {
    if (!split.val.empty()) return split;
    if (split.train.size() < 2) throw DataError("scenario '" + split.scenario_key + "' is too small to carve validation");
    auto train = std::move(split.train);
    std::sort(train.begin(), train.end(), temporal_less);
    const auto n_val = std::max<std::size_t>(1, (train.size() + 9) / 10);
    split.val.assign(std::make_move_iterator(train.end() - static_cast<std::ptrdiff_t>(n_val)),
                     std::make_move_iterator(train.end()));
    train.resize(train.size() - n_val);
    split.train = balance_classes(std::move(train), derive_seed(split.split_seed, 0xFA11));
    return split;
}

}  // namespace parkocc
