#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "parkocc/errors.hpp"
#include "parkocc/rng.hpp"
#include "parkocc/split.hpp"

using namespace parkocc;

namespace {

// `n_days` consecutive days starting 2015-11-01, `per_day` spots per day,
// roughly 70% occupied.
DatasetIndex make_index(int n_days, int per_day, std::uint64_t seed, const std::string& scenario = "S") {
    Rng rng(seed);
    std::vector<SampleRecord> rs;
    const std::chrono::sys_days first = std::chrono::year{2015} / std::chrono::November / 1;
    for (int d = 0; d < n_days; ++d) {
        for (int i = 0; i < per_day; ++i) {
            SampleRecord r;
            r.dataset_id = DatasetId::CNRExt;
            r.scenario_key = scenario;
            r.camera_id = scenario;
            r.day = Date{first + std::chrono::days{d}};
            char ts[8];
            std::snprintf(ts, sizeof ts, "%02d:%02d", 7 + i / 60 % 12, i % 60);
            r.timestamp = ts;
            r.spot_id = std::to_string(i);
            r.label = rng.bernoulli(0.7) ? Label::occupied : Label::empty;
            r.patch_path = "/p/" + std::to_string(d) + "_" + std::to_string(i) + ".jpg";
            rs.push_back(r);
        }
    }
    return DatasetIndex(rs);
}

std::set<Date> days_of(const std::vector<SampleRecord>& rs) {
    std::set<Date> out;
    for (const auto& r : rs) out.insert(r.day);
    return out;
}

std::pair<std::size_t, std::size_t> label_counts(const std::vector<SampleRecord>& rs) {
    std::size_t occ = 0;
    for (const auto& r : rs) occ += r.label == Label::occupied;
    return {occ, rs.size() - occ};
}

}  // namespace

TEST_SUITE("split") {

TEST_CASE("day partition matches the ceil/halving rule") {
    // Oracle: for D days, train gets the first ceil(D/2) days, val the next
    // floor((D - ceil(D/2)) / 2), test the rest.
    for (int n_days : {3, 4, 5, 6, 7, 10, 13}) {
        CAPTURE(n_days);
        const auto index = make_index(n_days, 30, 11);
        const auto split = temporal_split(index, "S", 5);
        const int n_train = (n_days + 1) / 2;
        const int n_val = (n_days - n_train) / 2;
        const auto all = index.stats("S").days;
        std::set<Date> expect_train(all.begin(), all.begin() + n_train);
        std::set<Date> expect_val(all.begin() + n_train, all.begin() + n_train + n_val);
        std::set<Date> expect_test(all.begin() + n_train + n_val, all.end());
        CHECK(days_of(split.train) == expect_train);
        CHECK(days_of(split.val) == expect_val);
        CHECK(days_of(split.test) == expect_test);
    }
}

TEST_CASE("splits are day-disjoint and temporally ordered") {
    const auto index = make_index(10, 40, 2);
    const auto split = temporal_split(index, "S", 99);
    const auto train_days = days_of(split.train);
    const auto val_days = days_of(split.val);
    const auto test_days = days_of(split.test);
    CHECK(*train_days.rbegin() < *val_days.begin());
    CHECK(*val_days.rbegin() < *test_days.begin());
    CHECK(std::is_sorted(split.test.begin(), split.test.end(), temporal_less));
    CHECK(std::is_sorted(split.val.begin(), split.val.end(), temporal_less));
}

TEST_CASE("training set is balanced and a subset of the training days") {
    const auto index = make_index(8, 50, 4);
    const auto split = temporal_split(index, "S", 1);
    const auto [occ, emp] = label_counts(split.train);
    CHECK(occ == emp);

    std::size_t pool_occ = 0, pool_emp = 0;
    const auto train_days = days_of(split.train);
    for (const auto& r : index.records()) {
        if (!train_days.contains(r.day)) continue;
        (r.label == Label::occupied ? pool_occ : pool_emp) += 1;
    }
    CHECK(occ == std::min(pool_occ, pool_emp));
    std::set<std::string> paths;
    for (const auto& r : index.records()) paths.insert(r.patch_path);
    for (const auto& r : split.train) CHECK(paths.contains(r.patch_path));
    // val and test are not rebalanced
    CHECK(split.val.size() + split.test.size() + pool_occ + pool_emp == index.size());
}

TEST_CASE("the same seed reproduces the split; another seed resamples") {
    const auto index = make_index(6, 60, 7);
    const auto a = temporal_split(index, "S", 42);
    const auto b = temporal_split(index, "S", 42);
    const auto c = temporal_split(index, "S", 43);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
}

TEST_CASE("fewer than three days is evaluation-only") {
    const auto index = make_index(2, 20, 1);
    try {
        temporal_split(index, "S", 0);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("evaluation-only") != std::string::npos);
    }
    CHECK_THROWS_AS(temporal_split(index, "missing", 0), DataError);
}

TEST_CASE("three days leave validation empty until the fallback carves a tail") {
    const auto index = make_index(3, 60, 3);
    const auto split = temporal_split(index, "S", 0);
    CHECK(split.val.empty());
    const auto before = split.train.size();
    const auto filled = with_validation_fallback(split);
    CHECK(filled.val.size() == (before + 9) / 10);
    const auto [occ, emp] = label_counts(filled.train);
    CHECK(occ == emp);
    // the tail is the latest part of the training pool
    for (const auto& r : filled.train) CHECK_FALSE(temporal_less(filled.val.front(), r));
    CHECK(filled.test == split.test);
}

TEST_CASE("balance_classes subsamples the majority and rejects a missing class") {
    const auto index = make_index(1, 200, 9);
    const auto [pool_occ, pool_emp] = label_counts(index.records());
    const auto balanced = balance_classes(index.records(), 3);
    const auto [occ, emp] = label_counts(balanced);
    CHECK(occ == std::min(pool_occ, pool_emp));
    CHECK(emp == occ);

    std::vector<SampleRecord> only_occupied;
    for (const auto& r : index.records()) {
        if (r.label == Label::occupied) only_occupied.push_back(r);
    }
    CHECK_THROWS_AS(balance_classes(only_occupied, 0), DataError);
}

}
