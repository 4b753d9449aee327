#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parkocc/dataset.hpp"

namespace parkocc {

/// Day-disjoint, temporally ordered train/val/test partition of one scenario.
struct ScenarioSplit {
    std::string scenario_key;
    std::vector<SampleRecord> train;  // class-balanced
    std::vector<SampleRecord> val;
    std::vector<SampleRecord> test;
    std::uint64_t split_seed = 0;
};

/// Distinct days of a record list, sorted.
std::vector<Date> distinct_days(const std::vector<SampleRecord>& records);

/**
 * Splits a scenario by calendar day.
 *
 * The earliest ceil(train_ratio * D) days form the training pool; the remaining
 * days are halved in temporal order, the earlier half going to validation and
 * the later (possibly larger) half to test. The training pool is then balanced.
 * Scenarios with fewer than 3 days are rejected as evaluation-only. With exactly
 * 3 days validation comes back empty and a warning is logged; callers use
 * with_validation_fallback before training.
 */
ScenarioSplit temporal_split(const DatasetIndex& index, const std::string& scenario_key, std::uint64_t seed,
                             double train_ratio = 0.5);

/**
 * Subsamples the majority class uniformly (seeded) down to the minority count,
 * then shuffles. Throws DataError if a class is absent.
 */
std::vector<SampleRecord> balance_classes(std::vector<SampleRecord> records, std::uint64_t seed);

/// When val is empty, moves the latest 10% of the training samples to validation
/// and re-balances what remains. Returns the split unchanged otherwise.
ScenarioSplit with_validation_fallback(ScenarioSplit split);

}  // namespace parkocc
