#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "parkocc/dataset.hpp"

namespace parkocc {

/// Random-access collection of labelled patches. Labels are class indices;
/// occupancy sources use Label's convention, selector sources use scenario indices.
class PatchSource {
public:
    virtual ~PatchSource() = default;

    virtual std::size_t size() const = 0;
    virtual int label(std::size_t index) const = 0;
    /// 8-bit BGR image.
    virtual cv::Mat image(std::size_t index) const = 0;

    bool empty() const { return size() == 0; }
};

/// Patches decoded from the records' patch paths. Decoding failures raise DataError.
class RecordPatchSource final : public PatchSource {
public:
    /// With `cache` set every decoded patch is kept in memory after first use.
    explicit RecordPatchSource(std::vector<SampleRecord> records, bool cache = false);
    /// Same patches, labelled with `label_override` instead of occupancy.
    RecordPatchSource(std::vector<SampleRecord> records, std::vector<int> label_override, bool cache = false);

    std::size_t size() const override { return records_.size(); }
    int label(std::size_t index) const override { return labels_[index]; }
    cv::Mat image(std::size_t index) const override;

    const std::vector<SampleRecord>& records() const noexcept { return records_; }

private:
    std::vector<SampleRecord> records_;
    std::vector<int> labels_;
    bool cache_;
    mutable std::vector<cv::Mat> decoded_;
};

class MemoryPatchSource final : public PatchSource {
public:
    MemoryPatchSource() = default;
    MemoryPatchSource(std::vector<cv::Mat> images, std::vector<int> labels);

    void add(cv::Mat image, int label);

    std::size_t size() const override { return images_.size(); }
    int label(std::size_t index) const override { return labels_[index]; }
    cv::Mat image(std::size_t index) const override { return images_[index]; }

private:
    std::vector<cv::Mat> images_;
    std::vector<int> labels_;
};

/// Loads one record's patch as 8-bit BGR; throws DataError when it cannot be decoded.
cv::Mat load_patch(const SampleRecord& record);

}  // namespace parkocc
