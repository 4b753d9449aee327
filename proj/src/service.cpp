#include "parkocc/service.hpp"

#include <algorithm>
#include <chrono>
#include <regex>

#include <httplib.h>
#include <opencv2/imgcodecs.hpp>

#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"

namespace parkocc {

namespace fs = std::filesystem;

namespace {

void check_camera_id(const std::string& camera_id) {
    static const std::regex allowed(R"([A-Za-z0-9_.\-]{1,128})");
    if (!std::regex_match(camera_id, allowed) || camera_id == "." || camera_id == "..") {
        throw DataError("invalid camera id '" + camera_id + "'");
    }
}

}  // namespace

// ---------------------------------------------------------------- SpotMapStore

SpotMapStore::SpotMapStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    for (const auto& e : fs::directory_iterator(dir_)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        const std::string camera = e.path().stem().string();
        auto slot = std::make_unique<Entry>();
        slot->current = std::make_shared<const SpotMap>(read_spot_map(e.path()));
        entries_.emplace(camera, std::move(slot));
    }
}

fs::path SpotMapStore::path_for(const std::string& camera_id) const { return dir_ / (camera_id + ".json"); }

SpotMapStore::Entry& SpotMapStore::entry(const std::string& camera_id) const {
    {
        std::shared_lock lock(entries_mutex_);
        auto it = entries_.find(camera_id);
        if (it != entries_.end()) return *it->second;
    }
    std::unique_lock lock(entries_mutex_);
    auto& slot = entries_[camera_id];
    if (!slot) slot = std::make_unique<Entry>();
    return *slot;
}

std::shared_ptr<const SpotMap> SpotMapStore::get(const std::string& camera_id) const {
    check_camera_id(camera_id);
    std::shared_ptr<const SpotMap> current;
    {
        std::shared_lock lock(entries_mutex_);
        auto it = entries_.find(camera_id);
        if (it != entries_.end()) current = std::atomic_load(&it->second->current);
    }
    if (!current) throw NotFoundError("no spot map for camera '" + camera_id + "'");
    return current;
}

bool SpotMapStore::contains(const std::string& camera_id) const {
    try {
        get(camera_id);
        return true;
    } catch (const Error&) {
        return false;
    }
}

std::int64_t SpotMapStore::put(const std::string& camera_id, SpotMap map, std::optional<std::int64_t> expected_version) {
    check_camera_id(camera_id);
    if (!map.camera_id.empty() && map.camera_id != camera_id) {
        throw DataError("spot map names camera '" + map.camera_id + "' but was sent for '" + camera_id + "'");
    }
    map.camera_id = camera_id;
    validate_spot_map(map);

    Entry& e = entry(camera_id);
    std::lock_guard lock(e.write_mutex);
    const auto current = std::atomic_load(&e.current);
    const std::int64_t stored = current ? current->version : 0;
    if (expected_version && *expected_version != stored) {
        throw ConflictError("spot map for camera '" + camera_id + "' is at version " + std::to_string(stored) +
                            ", not " + std::to_string(*expected_version));
    }
    map.version = stored + 1;
    write_spot_map(map, path_for(camera_id));
    std::atomic_store(&e.current, std::make_shared<const SpotMap>(std::move(map)));
    return stored + 1;
}

std::vector<std::string> SpotMapStore::cameras() const {
    std::vector<std::string> out;
    std::shared_lock lock(entries_mutex_);
    for (const auto& [camera, e] : entries_) {
        if (std::atomic_load(&e->current)) out.push_back(camera);
    }
    return out;
}

// ---------------------------------------------------------------- results

void to_json(nlohmann::json& j, const SpotResult& r) {
    j = nlohmann::json{
        {"spot_id", r.spot_id}, {"label", to_string(r.label)}, {"confidence", r.confidence}, {"framework", r.framework}};
}

void to_json(nlohmann::json& j, const OccupancyResult& r) {
    j = nlohmann::json{{"camera_id", r.camera_id},
                       {"frame_id", r.frame_id},
                       {"spots", r.spots},
                       {"latency_ms", r.latency_ms},
                       {"spot_map_version", r.spot_map_version}};
}

// ---------------------------------------------------------------- OccupancyService

OccupancyService::OccupancyService(std::shared_ptr<const Framework> framework, std::shared_ptr<SpotMapStore> store,
                                   ServiceOptions options)
    : framework_(std::move(framework)), store_(std::move(store)), options_(options) {
    if (!framework_) throw ModelError("occupancy service needs a framework");
    if (!store_) throw DataError("occupancy service needs a spot map store");
}

OccupancyResult OccupancyService::classify_frame(const std::string& camera_id, const cv::Mat& frame,
                                                 const std::string& frame_id) const {
    const auto started = std::chrono::steady_clock::now();
    const auto map = store_->get(camera_id);
    if (frame.empty()) throw DataError("empty frame");
    if (frame.cols != map->reference_frame.width || frame.rows != map->reference_frame.height) {
        throw DataError("frame is " + std::to_string(frame.cols) + "x" + std::to_string(frame.rows) +
                        " but the spot map for camera '" + camera_id + "' was drawn on a " +
                        std::to_string(map->reference_frame.width) + "x" + std::to_string(map->reference_frame.height) +
                        " reference frame");
    }
    const cv::Mat bgr = as_bgr8(frame);
    std::vector<cv::Mat> patches;
    patches.reserve(map->spots.size());
    for (const auto& spot : map->spots) {
        patches.push_back(crop_spot(bgr, spot, options_.crop_policy, options_.crop_size));
    }
    OccupancyResult result;
    result.camera_id = camera_id;
    result.frame_id = frame_id.empty() ? "frame-" + std::to_string(++frame_counter_) : frame_id;
    result.spot_map_version = map->version;
    if (!patches.empty()) {
        const auto decisions = framework_->classify(patches);
        const std::string name = framework_->name();
        for (std::size_t i = 0; i < map->spots.size(); ++i) {
            result.spots.push_back({map->spots[i].spot_id, decisions.at(i).label, decisions.at(i).confidence, name});
        }
    }
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void OccupancyService::remember_frame(const std::string& camera_id, std::string encoded, std::string content_type) {
    check_camera_id(camera_id);
    std::lock_guard lock(frames_mutex_);
    latest_frames_[camera_id] = {std::move(encoded), std::move(content_type)};
}

std::optional<std::pair<std::string, std::string>> OccupancyService::latest_frame(const std::string& camera_id) const {
    std::lock_guard lock(frames_mutex_);
    auto it = latest_frames_.find(camera_id);
    if (it == latest_frames_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------- HTTP

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, nlohmann::json extra = {}) {
    nlohmann::json body = extra.is_object() ? std::move(extra) : nlohmann::json::object();
    body["error"] = message;
    send_json(res, status, body);
}

// Maps library errors onto HTTP status codes.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ValidationError& e) {
        send_error(res, 422, e.what(), {{"offending_spot_ids", e.offending_ids()}});
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
        send_error(res, 409, e.what());
    } catch (const DataError& e) {
        send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const std::exception& e) {
        log::error(std::string("request failed: ") + e.what());
        send_error(res, 500, e.what());
    }
}

std::string sniff_content_type(const std::string& bytes) {
    if (bytes.size() >= 8 && bytes.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0) return "image/png";
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
        static_cast<unsigned char>(bytes[1]) == 0xD8) {
        return "image/jpeg";
    }
    return {};
}

cv::Mat decode_frame(const std::string& body) {
    if (sniff_content_type(body).empty()) throw DataError("frame body must be a PNG or JPEG image");
    const std::vector<uchar> bytes(body.begin(), body.end());
    cv::Mat frame = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (frame.empty()) throw DataError("frame could not be decoded");
    return frame;
}

}  // namespace

HttpFrontend::HttpFrontend(std::shared_ptr<OccupancyService> service)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
    server_->set_payload_max_length(service_->options().max_frame_bytes);
    install_routes();
}

HttpFrontend::~HttpFrontend() { stop(); }

void HttpFrontend::install_routes() {
    auto& srv = *server_;
    auto service = service_;

    srv.Get("/healthz", [service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"framework", service->framework().name()}});
    });

    srv.Get("/cameras", [service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, {{"cameras", service->store().cameras()}}); });
    });

    srv.Get(R"(/cameras/([^/]+)/spotmap)", [service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, *service->store().get(req.matches[1].str())); });
    });

    srv.Put(R"(/cameras/([^/]+)/spotmap)", [service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body);
            std::optional<std::int64_t> base;
            if (body.contains("version") && !body["version"].is_null()) base = body["version"].get<std::int64_t>();
            const std::string camera = req.matches[1].str();
            const std::int64_t version = service->store().put(camera, body.get<SpotMap>(), base);
            log::info(log::concat("spot map for ", camera, " committed at version ", version));
            send_json(res, 200, {{"camera_id", camera}, {"version", version}});
        });
    });

    srv.Post(R"(/cameras/([^/]+)/frames)", [service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string camera = req.matches[1].str();
            const cv::Mat frame = decode_frame(req.body);
            std::string frame_id = req.has_param("frame_id") ? req.get_param_value("frame_id") : std::string{};
            const auto result = service->classify_frame(camera, frame, frame_id);
            service->remember_frame(camera, req.body, sniff_content_type(req.body));
            send_json(res, 200, result);
        });
    });

    srv.Get(R"(/cameras/([^/]+)/frames/latest)", [service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string camera = req.matches[1].str();
            check_camera_id(camera);
            const auto frame = service->latest_frame(camera);
            if (!frame) throw NotFoundError("no frame received yet for camera '" + camera + "'");
            res.status = 200;
            res.set_content(frame->first, frame->second);
        });
    });

    srv.Put(R"(/cameras/([^/]+)/frames/latest)", [service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string camera = req.matches[1].str();
            const cv::Mat frame = decode_frame(req.body);
            service->remember_frame(camera, req.body, sniff_content_type(req.body));
            send_json(res, 200, {{"camera_id", camera}, {"width", frame.cols}, {"height", frame.rows}});
        });
    });

    srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
        log::debug(log::concat(req.method, " ", req.path, " -> ", res.status));
    });
}

int HttpFrontend::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

void HttpFrontend::run() { server_->listen_after_bind(); }

void HttpFrontend::stop() {
    if (server_ && server_->is_running()) server_->stop();
}

// ---------------------------------------------------------------- config

void from_json(const nlohmann::json& j, ServiceConfig& config) {
    config = ServiceConfig{};
    if (j.contains("framework")) config.framework = j.at("framework").get<FrameworkSelection>();
    config.host = j.value("host", config.host);
    config.port = j.value("port", config.port);
    config.spot_map_store = j.value("spot_map_store", config.spot_map_store.string());
    if (j.contains("crop_policy")) config.options.crop_policy = crop_policy_from_string(j["crop_policy"].get<std::string>());
    config.options.crop_size = j.value("crop_size", config.options.crop_size);
    config.options.max_frame_bytes = j.value("max_frame_bytes", config.options.max_frame_bytes);
}

void to_json(nlohmann::json& j, const ServiceConfig& config) {
    j = nlohmann::json{{"framework", config.framework},
                       {"host", config.host},
                       {"port", config.port},
                       {"spot_map_store", config.spot_map_store.string()},
                       {"crop_policy", to_string(config.options.crop_policy)},
                       {"crop_size", config.options.crop_size},
                       {"max_frame_bytes", config.options.max_frame_bytes}};
}

}  // namespace parkocc
