#pragma once

#include <filesystem>

#include <json.hpp>

namespace parkocc {

/// Reads a YAML or JSON document into JSON. Scalars that look like numbers or
/// booleans become numbers/booleans. Throws DataError when unreadable.
nlohmann::json load_config(const std::filesystem::path& path);

/// Recursively overlays `overrides` onto `base`.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides);

}  // namespace parkocc
