#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "parkocc/dataset.hpp"

namespace parkocc {

/// Background families for generated scenarios.
enum class SyntheticTexture { asphalt_stripes, paver_checker, speckled_gravel };

struct SyntheticScenarioSpec {
    std::string scenario_key;
    SyntheticTexture texture = SyntheticTexture::asphalt_stripes;
    std::size_t samples = 600;
    int days = 6;
    double occupied_fraction = 0.5;
};

/// Renders one spot patch: a textured ground with bay markings, plus a
/// top-down vehicle shape when occupied.
cv::Mat render_synthetic_patch(SyntheticTexture texture, bool occupied, int size, std::uint64_t seed);

/**
 * Writes PNG patches for each scenario under `dir` and returns their records
 * (dataset Synthetic, days starting 2024-03-01, samples spread evenly over days).
 */
std::vector<SampleRecord> generate_synthetic_corpus(const std::vector<SyntheticScenarioSpec>& scenarios,
                                                    const std::filesystem::path& dir, int patch_size,
                                                    std::uint64_t seed);

}  // namespace parkocc
