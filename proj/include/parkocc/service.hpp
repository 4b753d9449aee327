#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "parkocc/crop.hpp"
#include "parkocc/frameworks.hpp"
#include "parkocc/geometry.hpp"

namespace httplib {
class Server;
}

namespace parkocc {

/**
 * On-disk SpotMap store, one JSON document per camera. Writes are serialized
 * per camera and replace the file atomically; reads return the latest
 * committed map without taking the camera's write lock.
 */
class SpotMapStore {
public:
    explicit SpotMapStore(std::filesystem::path dir);

    /// Latest committed map; NotFoundError when the camera has none.
    std::shared_ptr<const SpotMap> get(const std::string& camera_id) const;
    bool contains(const std::string& camera_id) const;

    /**
     * Validates and commits a map, returning the new version (previous + 1).
     * When `expected_version` is given and differs from the stored version the
     * write is refused with ConflictError.
     */
    std::int64_t put(const std::string& camera_id, SpotMap map,
                     std::optional<std::int64_t> expected_version = std::nullopt);

    std::vector<std::string> cameras() const;

private:
    struct Entry {
        std::mutex write_mutex;
        std::shared_ptr<const SpotMap> current;
    };

    Entry& entry(const std::string& camera_id) const;
    std::filesystem::path path_for(const std::string& camera_id) const;

    std::filesystem::path dir_;
    mutable std::shared_mutex entries_mutex_;
    mutable std::map<std::string, std::unique_ptr<Entry>> entries_;
};

struct SpotResult {
    std::string spot_id;
    Label label = Label::occupied;
    double confidence = 0.5;
    std::string framework;
};

struct OccupancyResult {
    std::string camera_id;
    std::string frame_id;
    std::vector<SpotResult> spots;
    double latency_ms = 0.0;
    std::int64_t spot_map_version = 0;
};

void to_json(nlohmann::json& j, const SpotResult& result);
void to_json(nlohmann::json& j, const OccupancyResult& result);

struct ServiceOptions {
    CropPolicy crop_policy = CropPolicy::warp_rectify;
    int crop_size = 128;
    std::size_t max_frame_bytes = 32u << 20;
};

/// Crops every spot of a camera's map out of a frame and classifies it.
class OccupancyService {
public:
    OccupancyService(std::shared_ptr<const Framework> framework, std::shared_ptr<SpotMapStore> store,
                     ServiceOptions options = {});

    /// NotFoundError for an unknown camera, DataError when the frame size does
    /// not match the map's reference frame.
    OccupancyResult classify_frame(const std::string& camera_id, const cv::Mat& frame,
                                   const std::string& frame_id = {}) const;

    SpotMapStore& store() noexcept { return *store_; }
    const ServiceOptions& options() const noexcept { return options_; }
    const Framework& framework() const noexcept { return *framework_; }

    /// Encoded bytes of the most recent frame seen for a camera (reference image for the annotator).
    void remember_frame(const std::string& camera_id, std::string encoded, std::string content_type);
    std::optional<std::pair<std::string, std::string>> latest_frame(const std::string& camera_id) const;

private:
    std::shared_ptr<const Framework> framework_;
    std::shared_ptr<SpotMapStore> store_;
    ServiceOptions options_;
    mutable std::mutex frames_mutex_;
    std::map<std::string, std::pair<std::string, std::string>> latest_frames_;
    mutable std::atomic<std::uint64_t> frame_counter_{0};
};

/**
 * HTTP + JSON front end:
 *   GET  /healthz
 *   GET  /cameras                        {"cameras": [ids]}
 *   GET  /cameras/{id}/spotmap
 *   PUT  /cameras/{id}/spotmap          body: SpotMap JSON (version = base version, optional)
 *   POST /cameras/{id}/frames           body: PNG/JPEG -> OccupancyResult
 *   GET  /cameras/{id}/frames/latest    reference frame bytes
 *   PUT  /cameras/{id}/frames/latest    store a reference frame without classifying
 */
class HttpFrontend {
public:
    explicit HttpFrontend(std::shared_ptr<OccupancyService> service);
    ~HttpFrontend();

    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    /// Binds to host:port (port 0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();

private:
    void install_routes();

    std::shared_ptr<OccupancyService> service_;
    std::unique_ptr<httplib::Server> server_;
};

struct ServiceConfig {
    FrameworkSelection framework;
    std::string host = "0.0.0.0";
    int port = 8080;
    std::filesystem::path spot_map_store = "spotmaps";
    ServiceOptions options;
};

void from_json(const nlohmann::json& j, ServiceConfig& config);
void to_json(nlohmann::json& j, const ServiceConfig& config);

}  // namespace parkocc
