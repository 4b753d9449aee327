#include "parkocc/adapters.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "parkocc/errors.hpp"
#include "parkocc/log.hpp"

namespace parkocc {

namespace fs = std::filesystem;

namespace {

struct FrameResult {
    std::vector<SampleRecord> records;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

std::vector<fs::path> walk(const fs::path& root, std::initializer_list<const char*> exts) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied)) {
        if (entry.is_regular_file() && has_extension(entry.path(), exts)) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void require_root(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec) || fs::directory_iterator(root, ec) == fs::directory_iterator()) {
        throw DataError("dataset root not found/empty: " + root.string());
    }
}

// Runs `work(i)` for i in [0, n) on a small worker pool; results land in slots.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& work) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i = next++; i < n; i = next++) work(i);
    };
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(loop);
    loop();
}

// "2012-09-11_15_16_58" -> day + "15:16:58"
std::optional<std::pair<Date, std::string>> parse_frame_stamp(const std::string& name) {
    static const std::regex re(R"((\d{4}-\d{2}-\d{2})[_ T](\d{2})[_.:-](\d{2})(?:[_.:-](\d{2}))?)");
    std::smatch m;
    if (!std::regex_search(name, m, re)) return std::nullopt;
    try {
        std::string time = m[2].str() + ":" + m[3].str();
        if (m[4].matched) time += ":" + m[4].str();
        return std::make_pair(parse_date(m[1].str()), time);
    } catch (const DataError&) {
        return std::nullopt;
    }
}

std::optional<Date> parse_any_date(const std::string& text) {
    static const std::regex re(R"((\d{4}-\d{2}-\d{2}))");
    std::smatch m;
    if (!std::regex_search(text, m, re)) return std::nullopt;
    try {
        return parse_date(m[1].str());
    } catch (const DataError&) {
        return std::nullopt;
    }
}

Date mtime_day(const fs::path& p) {
    struct stat st {};
    if (::stat(p.c_str(), &st) != 0) return Date{std::chrono::year{1970}, std::chrono::month{1}, std::chrono::day{1}};
    std::tm tm{};
    const std::time_t t = st.st_mtime;
    gmtime_r(&t, &tm);
    return Date{std::chrono::year{tm.tm_year + 1900}, std::chrono::month{static_cast<unsigned>(tm.tm_mon + 1)},
                std::chrono::day{static_cast<unsigned>(tm.tm_mday)}};
}

std::string pad_spot(const std::string& id) {
    if (id.empty() || !std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c); })) return id;
    return std::string(id.size() < 3 ? 3 - id.size() : 0, '0') + id;
}

fs::path find_image(const fs::path& annotation) {
    for (const char* ext : {".jpg", ".JPG", ".jpeg", ".png", ".PNG"}) {
        auto candidate = annotation;
        candidate.replace_extension(ext);
        if (fs::exists(candidate)) return candidate;
    }
    return {};
}

void write_png(const fs::path& path, const cv::Mat& patch) {
    fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), patch)) throw Error("cannot write patch " + path.string());
}

// ---------------------------------------------------------------- PKLot

const std::set<std::string> kPklotScenarios{"UFPR04", "UFPR05", "PUCPR"};
const std::set<std::string> kWeather{"Cloudy", "Rainy", "Sunny", "CLOUDY", "RAINY", "SUNNY", "OVERCAST"};

std::string pklot_scenario(const fs::path& file, const fs::path& root) {
    for (const auto& part : fs::relative(file, root)) {
        std::string s = part.string();
        std::string upper = s;
        std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
        if (kPklotScenarios.contains(upper)) return upper;
    }
    // Fallback: three levels above the file (<scenario>/<weather>/<day>/file).
    auto p = file.parent_path().parent_path().parent_path();
    return p.filename().string();
}

std::optional<std::string> weather_of(const fs::path& file) {
    for (auto p = file.parent_path(); !p.empty() && p != p.root_path(); p = p.parent_path()) {
        if (kWeather.contains(p.filename().string())) return p.filename().string();
    }
    return std::nullopt;
}

FrameResult ingest_pklot_frame(const fs::path& xml_path, const fs::path& root, const IngestOptions& options) {
    namespace pt = boost::property_tree;
    FrameResult result;
    pt::ptree tree;
    try {
        pt::read_xml(xml_path.string(), tree);
    } catch (const pt::xml_parser_error& e) {
        result.skipped = 1;
        result.warnings.push_back("unparseable annotation " + xml_path.string() + ": " + e.what());
        return result;
    }
    const auto stamp = parse_frame_stamp(xml_path.stem().string());
    if (!stamp) {
        result.skipped = 1;
        result.warnings.push_back("no capture timestamp in " + xml_path.filename().string());
        return result;
    }
    const fs::path image_path = find_image(xml_path);
    cv::Mat frame = image_path.empty() ? cv::Mat{} : cv::imread(image_path.string(), cv::IMREAD_COLOR);
    if (frame.empty()) {
        result.skipped = 1;
        result.warnings.push_back("missing or undecodable frame for " + xml_path.string());
        return result;
    }
    const std::string scenario = pklot_scenario(xml_path, root);
    const auto weather = weather_of(xml_path);
    const auto parking = tree.get_child_optional("parking");
    if (!parking) {
        result.skipped = 1;
        result.warnings.push_back("no <parking> element in " + xml_path.string());
        return result;
    }
    for (const auto& [tag, space] : *parking) {
        if (tag != "space") continue;
        const auto id = space.get_optional<std::string>("<xmlattr>.id");
        const auto occupied = space.get_optional<int>("<xmlattr>.occupied");
        if (!id || !occupied) {
            ++result.skipped;
            continue;
        }
        SpotGeometry geometry;
        geometry.spot_id = *id;
        std::vector<Point2> contour;
        if (auto c = space.get_child_optional("contour")) {
            for (const auto& [ptag, point] : *c) {
                if (ptag != "point" && ptag != "Point") continue;
                contour.push_back({point.get<double>("<xmlattr>.x", 0.0), point.get<double>("<xmlattr>.y", 0.0)});
            }
        }
        if (contour.size() == 4) {
            geometry.kind = SpotKind::quadrilateral;
            geometry.points = order_clockwise_from_top_left({contour[0], contour[1], contour[2], contour[3]});
        } else if (auto rr = space.get_child_optional("rotatedRect")) {
            geometry = make_rotated_rect(*id, {rr->get<double>("center.<xmlattr>.x", 0.0), rr->get<double>("center.<xmlattr>.y", 0.0)},
                                         rr->get<double>("size.<xmlattr>.w", 0.0), rr->get<double>("size.<xmlattr>.h", 0.0),
                                         rr->get<double>("angle.<xmlattr>.d", 0.0));
            geometry.points = order_clockwise_from_top_left(geometry.points);
        } else {
            ++result.skipped;
            continue;
        }
        cv::Mat patch;
        try {
            patch = crop_spot(frame, geometry, options.crop_policy, options.patch_size);
        } catch (const DataError& e) {
            ++result.skipped;
            result.warnings.push_back(xml_path.filename().string() + " space " + *id + ": " + e.what());
            continue;
        }
        const fs::path out = options.patch_dir / "PKLot" / scenario / format_date(stamp->first) /
                             (xml_path.stem().string() + "#" + pad_spot(*id) + ".png");
        write_png(out, patch);
        SampleRecord r;
        r.dataset_id = DatasetId::PKLot;
        r.scenario_key = scenario;
        r.camera_id = scenario;
        r.day = stamp->first;
        r.timestamp = stamp->second;
        r.spot_id = *id;
        r.label = *occupied != 0 ? Label::occupied : Label::empty;
        r.patch_path = out.string();
        r.weather_tag = weather;
        result.records.push_back(std::move(r));
    }
    return result;
}

// PKLotSegmented: <scenario>/<weather>/<day>/{Empty,Occupied}/<stamp>#<spot>.jpg
FrameResult ingest_pklot_segmented(const fs::path& root) {
    FrameResult result;
    for (const auto& file : walk(root, {".jpg", ".jpeg", ".png"})) {
        const std::string folder = file.parent_path().filename().string();
        if (folder != "Empty" && folder != "Occupied") continue;
        const auto stamp = parse_frame_stamp(file.stem().string());
        if (!stamp) {
            ++result.skipped;
            continue;
        }
        const std::string stem = file.stem().string();
        const auto hash = stem.find('#');
        SampleRecord r;
        r.dataset_id = DatasetId::PKLot;
        r.scenario_key = pklot_scenario(file.parent_path(), root);
        r.camera_id = r.scenario_key;
        r.day = stamp->first;
        r.timestamp = stamp->second;
        r.spot_id = hash == std::string::npos ? stem : stem.substr(hash + 1);
        r.label = folder == "Occupied" ? Label::occupied : Label::empty;
        r.patch_path = file.string();
        r.weather_tag = weather_of(file);
        result.records.push_back(std::move(r));
    }
    return result;
}

// ---------------------------------------------------------------- CNR-EXT

FrameResult ingest_cnr(const fs::path& root) {
    FrameResult result;
    const fs::path labels_dir = fs::is_directory(root / "LABELS") ? root / "LABELS" : root;
    const fs::path patches_root = fs::is_directory(root / "PATCHES") ? root / "PATCHES" : root;
    std::vector<fs::path> label_files;
    if (fs::exists(labels_dir / "all.txt")) {
        label_files.push_back(labels_dir / "all.txt");
    } else {
        for (const auto& e : fs::directory_iterator(labels_dir)) {
            const auto name = e.path().filename().string();
            if (e.is_regular_file() && name.rfind("camera", 0) == 0 && e.path().extension() == ".txt") {
                label_files.push_back(e.path());
            }
        }
        std::sort(label_files.begin(), label_files.end());
    }
    if (label_files.empty()) throw DataError("CNR-EXT: no LABELS/all.txt or LABELS/camera*.txt under " + root.string());

    // <W>_<YYYY-MM-DD>_<HH.MM>_C<NN>_<spot>.jpg
    static const std::regex name_re(R"(^([A-Z])_(\d{4}-\d{2}-\d{2})_(\d{2})\.(\d{2})_C(\d+)_(\w+)$)");
    static const std::regex camera_dir_re(R"(camera(\d+))", std::regex::icase);
    std::set<std::string> seen;
    for (const auto& label_file : label_files) {
        std::ifstream in(label_file);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            const auto space = line.find_last_of(" \t,");
            if (space == std::string::npos) {
                ++result.skipped;
                result.warnings.push_back(label_file.filename().string() + ":" + std::to_string(line_no) + ": no label");
                continue;
            }
            const std::string rel = line.substr(0, line.find_first_of(" \t,"));
            const std::string label = line.substr(space + 1);
            if (!seen.insert(rel).second) continue;
            const fs::path rel_path(rel);
            std::smatch m;
            const std::string stem = rel_path.stem().string();
            if ((label != "0" && label != "1") || !std::regex_match(stem, m, name_re)) {
                ++result.skipped;
                result.warnings.push_back(label_file.filename().string() + ":" + std::to_string(line_no) +
                                          ": unrecognised entry '" + line + "'");
                continue;
            }
            const fs::path patch = patches_root / rel_path;
            if (!fs::exists(patch)) {
                ++result.skipped;
                continue;
            }
            std::string camera = std::to_string(std::stoi(m[5].str()));
            std::smatch cm;
            const std::string parent = rel_path.parent_path().filename().string();
            if (std::regex_match(parent, cm, camera_dir_re)) camera = std::to_string(std::stoi(cm[1].str()));
            SampleRecord r;
            r.dataset_id = DatasetId::CNRExt;
            r.scenario_key = "CAM" + camera;
            r.camera_id = "camera" + camera;
            r.day = parse_date(m[2].str());
            r.timestamp = m[3].str() + ":" + m[4].str();
            r.spot_id = m[6].str();
            r.label = label == "1" ? Label::occupied : Label::empty;
            r.patch_path = patch.string();
            const auto weather_dir = rel_path.begin() != rel_path.end() ? rel_path.begin()->string() : std::string{};
            if (kWeather.contains(weather_dir)) r.weather_tag = weather_dir;
            result.records.push_back(std::move(r));
        }
    }
    return result;
}

// ---------------------------------------------------------------- per-image JSON (NDISPark, BarryStreet)

FrameResult ingest_json_frame(const fs::path& json_path, const fs::path& root, DatasetId id,
                              const IngestOptions& options) {
    FrameResult result;
    nlohmann::json doc;
    try {
        std::ifstream in(json_path);
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        result.skipped = 1;
        result.warnings.push_back("unparseable annotation " + json_path.string() + ": " + e.what());
        return result;
    }
    if (!doc.is_object() || !doc.contains("spots") || !doc["spots"].is_array()) {
        result.skipped = 1;
        result.warnings.push_back("annotation without a spots array: " + json_path.string());
        return result;
    }
    const fs::path image_path = find_image(json_path);
    cv::Mat frame = image_path.empty() ? cv::Mat{} : cv::imread(image_path.string(), cv::IMREAD_COLOR);
    if (frame.empty()) {
        result.skipped = 1;
        result.warnings.push_back("missing or undecodable frame for " + json_path.string());
        return result;
    }

    const auto rel_parent = fs::relative(json_path.parent_path(), root);
    std::string camera = doc.value("camera_id", std::string{});
    if (camera.empty()) camera = rel_parent.empty() || rel_parent == "." ? to_string(id) : rel_parent.begin()->string();
    const std::string scenario = id == DatasetId::BarryStreet ? std::string("BarryStreet") : camera;

    std::optional<Date> day;
    std::optional<std::string> timestamp;
    bool synthetic_day = false;
    const std::string ts = doc.value("timestamp", std::string{});
    if (auto stamp = parse_frame_stamp(ts.empty() ? json_path.stem().string() : ts)) {
        day = stamp->first;
        timestamp = stamp->second;
    } else if (auto d = parse_any_date(ts.empty() ? json_path.stem().string() : ts)) {
        day = d;
    } else {
        day = mtime_day(image_path);
        synthetic_day = true;
    }

    for (const auto& spot : doc["spots"]) {
        try {
            SpotGeometry g;
            g.spot_id = spot.contains("spot_id") ? spot["spot_id"].get<std::string>()
                                                 : std::to_string(spot.at("id").get<long long>());
            const auto& pts = spot.at("points");
            if (!pts.is_array() || pts.size() != 4) throw DataError("spot needs 4 points");
            for (std::size_t i = 0; i < 4; ++i) g.points[i] = {pts[i].at(0).get<double>(), pts[i].at(1).get<double>()};
            g.points = order_clockwise_from_top_left(g.points);
            Label label;
            if (spot.contains("label")) {
                label = label_from_string(spot["label"].get<std::string>());
            } else {
                label = spot.at("occupied").get<bool>() ? Label::occupied : Label::empty;
            }
            const cv::Mat patch = crop_spot(frame, g, options.crop_policy, options.patch_size);
            const fs::path out = options.patch_dir / to_string(id) / scenario /
                                 (json_path.stem().string() + "#" + pad_spot(g.spot_id) + ".png");
            write_png(out, patch);
            SampleRecord r;
            r.dataset_id = id;
            r.scenario_key = scenario;
            r.camera_id = camera;
            r.day = *day;
            r.timestamp = timestamp;
            r.spot_id = g.spot_id;
            r.label = label;
            r.patch_path = out.string();
            if (doc.contains("weather") && doc["weather"].is_string()) r.weather_tag = doc["weather"].get<std::string>();
            r.synthetic_day = synthetic_day;
            result.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            ++result.skipped;
            result.warnings.push_back(json_path.filename().string() + ": " + e.what());
        }
    }
    return result;
}

template <typename Fn>
FrameResult ingest_files(const std::vector<fs::path>& files, unsigned workers, Fn&& per_file) {
    std::vector<FrameResult> slots(files.size());
    parallel_for(files.size(), workers, [&](std::size_t i) { slots[i] = per_file(files[i]); });
    FrameResult merged;
    for (auto& s : slots) {
        merged.skipped += s.skipped;
        std::move(s.records.begin(), s.records.end(), std::back_inserter(merged.records));
        std::move(s.warnings.begin(), s.warnings.end(), std::back_inserter(merged.warnings));
    }
    return merged;
}

}  // namespace

DatasetIndex load_dataset(const fs::path& root, DatasetId id, const IngestOptions& options, IngestStats* stats) {
    require_root(root);
    FrameResult result;
    std::size_t annotation_files = 0;
    switch (id) {
        case DatasetId::PKLot: {
            const auto xmls = walk(root, {".xml"});
            annotation_files = xmls.size();
            if (!xmls.empty()) {
                result = ingest_files(xmls, options.workers,
                                      [&](const fs::path& f) { return ingest_pklot_frame(f, root, options); });
            } else {
                result = ingest_pklot_segmented(root);
            }
            break;
        }
        case DatasetId::CNRExt:
            result = ingest_cnr(root);
            annotation_files = 1;
            break;
        case DatasetId::NDISPark:
        case DatasetId::BarryStreet: {
            const auto jsons = walk(root, {".json"});
            annotation_files = jsons.size();
            result = ingest_files(jsons, options.workers,
                                  [&](const fs::path& f) { return ingest_json_frame(f, root, id, options); });
            break;
        }
        case DatasetId::Synthetic:
            throw DataError("synthetic corpora are generated, not ingested; use a manifest");
    }
    std::sort(result.records.begin(), result.records.end(), record_key_less);
    for (const auto& w : result.warnings) log::warn(w);

    DatasetIndex index(std::move(result.records));
    if (index.empty()) throw DataError("dataset root not found/empty: no usable samples under " + root.string());
    std::size_t occupied = 0;
    for (const auto& [key, s] : index.scenario_stats()) occupied += s.occupied;
    log::info(log::concat(to_string(id), ": ", index.size(), " samples (", occupied, " occupied, ",
                          index.size() - occupied, " empty) in ", index.scenario_stats().size(), " scenario(s); ",
                          result.skipped, " skipped"));
    if (stats) {
        stats->annotation_files = annotation_files;
        stats->skipped_annotations = result.skipped;
        stats->records = index.size();
        stats->warnings = std::move(result.warnings);
    }
    return index;
}

}  // namespace parkocc
