#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "parkocc/crop.hpp"
#include "parkocc/dataset.hpp"

namespace parkocc {

struct IngestOptions {
    /// Where cropped patches are written (PKLot frames, NDISPark, BarryStreet).
    std::filesystem::path patch_dir = "patches";
    /// Side of stored patches; 128 covers every backbone input size.
    int patch_size = 128;
    CropPolicy crop_policy = CropPolicy::warp_rectify;
    /// Worker threads for cropping; 0 picks hardware concurrency.
    unsigned workers = 0;
};

struct IngestStats {
    std::size_t annotation_files = 0;
    std::size_t skipped_annotations = 0;  // unparseable files or entries
    std::size_t records = 0;
    std::vector<std::string> warnings;
};

/**
 * Reads an upstream dataset layout into a normalized index.
 *
 * Supported layouts (see docs/datasets.md):
 *  - PKLot: <root>/<scenario>/<weather>/<YYYY-MM-DD>/<YYYY-MM-DD_HH_MM_SS>.{jpg,xml}
 *    frames with per-frame XML, or the PKLotSegmented tree with Empty/Occupied folders.
 *  - CNR-EXT: <root>/LABELS/all.txt (or camera*.txt) listing patch paths under
 *    <root>/PATCHES with 0/1 labels.
 *  - NDISPark / BarryStreet: images with a sibling per-image JSON annotation.
 *
 * Records come back sorted by record key regardless of worker scheduling.
 */
DatasetIndex load_dataset(const std::filesystem::path& root, DatasetId id, const IngestOptions& options,
                          IngestStats* stats = nullptr);

}  // namespace parkocc
