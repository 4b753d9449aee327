#include "parkocc/patch_source.hpp"

#include <opencv2/imgcodecs.hpp>

#include "parkocc/crop.hpp"
#include "parkocc/errors.hpp"

namespace parkocc {

cv::Mat load_patch(const SampleRecord& record) {
    cv::Mat img = cv::imread(record.patch_path, cv::IMREAD_COLOR);
    if (img.empty()) throw DataError("cannot decode patch " + record.patch_path);
    return as_bgr8(img);
}

RecordPatchSource::RecordPatchSource(std::vector<SampleRecord> records, bool cache)
    : records_(std::move(records)), cache_(cache) {
    labels_.reserve(records_.size());
    for (const auto& r : records_) labels_.push_back(class_index(r.label));
    if (cache_) decoded_.resize(records_.size());
}

RecordPatchSource::RecordPatchSource(std::vector<SampleRecord> records, std::vector<int> label_override, bool cache)
    : records_(std::move(records)), labels_(std::move(label_override)), cache_(cache) {
    if (labels_.size() != records_.size()) throw DataError("label override length differs from record count");
    if (cache_) decoded_.resize(records_.size());
}

cv::Mat RecordPatchSource::image(std::size_t index) const {
    if (!cache_) return load_patch(records_.at(index));
    auto& slot = decoded_.at(index);
    if (slot.empty()) slot = load_patch(records_[index]);
    return slot;
}

MemoryPatchSource::MemoryPatchSource(std::vector<cv::Mat> images, std::vector<int> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
    if (images_.size() != labels_.size()) throw DataError("image and label counts differ");
}

void MemoryPatchSource::add(cv::Mat image, int label) {
    images_.push_back(std::move(image));
    labels_.push_back(label);
}

}  // namespace parkocc
