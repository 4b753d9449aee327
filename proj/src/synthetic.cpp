#include "parkocc/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "parkocc/errors.hpp"
#include "parkocc/rng.hpp"

namespace parkocc {

namespace {

cv::Scalar jitter(const cv::Scalar& base, Rng& rng, double amount) {
    const double shift = rng.uniform(-amount, amount);
    return {std::clamp(base[0] + shift, 0.0, 255.0), std::clamp(base[1] + shift, 0.0, 255.0),
            std::clamp(base[2] + shift, 0.0, 255.0)};
}

void add_noise(cv::Mat& img, Rng& rng, double amplitude) {
    for (int y = 0; y < img.rows; ++y) {
        auto* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            const double n = rng.uniform(-amplitude, amplitude);
            for (int c = 0; c < 3; ++c) row[x][c] = cv::saturate_cast<uchar>(row[x][c] + n);
        }
    }
}

cv::Mat asphalt(int size, Rng& rng) {
    cv::Mat img(size, size, CV_8UC3, jitter({72, 74, 78}, rng, 12));
    // Faint tyre tracks running along the bay.
    for (int k = 0; k < 3; ++k) {
        const int x = static_cast<int>(rng.uniform(0.2, 0.8) * size);
        cv::line(img, {x, 0}, {x + static_cast<int>(rng.uniform(-6, 6)), size - 1}, jitter({60, 60, 62}, rng, 6),
                 std::max(2, size / 20));
    }
    // Exposed aggregate and cracks.
    for (int k = 0; k < size * size / 10; ++k) {
        const cv::Point p{static_cast<int>(rng.below(size)), static_cast<int>(rng.below(size))};
        const double tone = rng.uniform(-45, 60);
        cv::circle(img, p, static_cast<int>(rng.below(2)), cv::Scalar(72 + tone, 74 + tone, 78 + tone), cv::FILLED);
    }
    for (int k = 0; k < 2; ++k) {
        cv::Point p{static_cast<int>(rng.below(size)), static_cast<int>(rng.below(size))};
        for (int step = 0; step < size / 3; ++step) {
            const cv::Point next = p + cv::Point(static_cast<int>(rng.below(5)) - 2, static_cast<int>(rng.below(5)) - 2);
            cv::line(img, p, next, cv::Scalar(35, 35, 38), 1);
            p = next;
        }
    }
    add_noise(img, rng, 10);
    return img;
}

cv::Mat pavers(int size, Rng& rng) {
    cv::Mat img(size, size, CV_8UC3);
    const int cell = std::max(4, static_cast<int>(size * rng.uniform(0.08, 0.13)));
    const cv::Scalar a = jitter({70, 95, 165}, rng, 15);
    const cv::Scalar b = jitter({150, 150, 150}, rng, 15);
    const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(cell)));
    const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(cell)));
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const bool dark = (((x + ox) / cell) + ((y + oy) / cell)) % 2 == 0;
            const cv::Scalar& c = dark ? a : b;
            img.at<cv::Vec3b>(y, x) = {static_cast<uchar>(c[0]), static_cast<uchar>(c[1]), static_cast<uchar>(c[2])};
        }
    }
    add_noise(img, rng, 8);
    return img;
}

cv::Mat gravel(int size, Rng& rng) {
    cv::Mat img(size, size, CV_8UC3, jitter({165, 178, 188}, rng, 12));
    const int stones = size * size / 12;
    for (int k = 0; k < stones; ++k) {
        const cv::Point p{static_cast<int>(rng.below(size)), static_cast<int>(rng.below(size))};
        const double tone = rng.uniform(-70, 50);
        cv::circle(img, p, 1 + static_cast<int>(rng.below(2)), cv::Scalar(165 + tone, 175 + tone, 185 + tone),
                   cv::FILLED);
    }
    add_noise(img, rng, 6);
    return img;
}

void bay_markings(cv::Mat& img, SyntheticTexture texture, Rng& rng) {
    const int size = img.cols;
    const cv::Scalar paint = texture == SyntheticTexture::paver_checker ? cv::Scalar(40, 210, 230) : cv::Scalar(235, 235, 235);
    const int thickness = std::max(2, size / 32);
    const int left = static_cast<int>(size * rng.uniform(0.03, 0.09));
    const int right = size - 1 - static_cast<int>(size * rng.uniform(0.03, 0.09));
    cv::line(img, {left, 0}, {left, size - 1}, paint, thickness);
    cv::line(img, {right, 0}, {right, size - 1}, paint, thickness);
}

void vehicle(cv::Mat& img, Rng& rng) {
    static const std::array<cv::Scalar, 8> palette{{{40, 40, 200},
                                                    {200, 80, 30},
                                                    {240, 240, 240},
                                                    {30, 30, 30},
                                                    {190, 190, 195},
                                                    {40, 160, 40},
                                                    {30, 200, 230},
                                                    {120, 40, 120}}};
    const double size = img.cols;
    const cv::Point2f center(static_cast<float>(size * (0.5 + rng.uniform(-0.06, 0.06))),
                             static_cast<float>(size * (0.5 + rng.uniform(-0.06, 0.06))));
    const float width = static_cast<float>(size * rng.uniform(0.46, 0.6));
    const float length = static_cast<float>(size * rng.uniform(0.72, 0.88));
    const float angle = static_cast<float>(rng.uniform(-10, 10));
    const cv::Scalar body = jitter(palette[rng.below(palette.size())], rng, 15);

    auto fill = [&](cv::Point2f c, float w, float h, const cv::Scalar& color) {
        cv::Point2f corners[4];
        cv::RotatedRect(c, {w, h}, angle).points(corners);
        std::array<cv::Point, 4> pts;
        for (int i = 0; i < 4; ++i) pts[i] = {cvRound(corners[i].x), cvRound(corners[i].y)};
        cv::fillConvexPoly(img, pts.data(), 4, color, cv::LINE_AA);
    };
    // Shadow, body, then dark windscreen and rear window.
    fill(center + cv::Point2f(2.5f, 2.5f), width + 4, length + 4, cv::Scalar(20, 20, 20));
    fill(center, width, length, body);
    const double rad = angle * CV_PI / 180.0;
    const cv::Point2f axis(static_cast<float>(-std::sin(rad)), static_cast<float>(std::cos(rad)));
    fill(center - axis * (length * 0.18f), width * 0.8f, length * 0.16f, cv::Scalar(25, 30, 35));
    fill(center + axis * (length * 0.25f), width * 0.75f, length * 0.1f, cv::Scalar(25, 30, 35));
}

std::string texture_name(SyntheticTexture t) {
    switch (t) {
        case SyntheticTexture::asphalt_stripes: return "asphalt_stripes";
        case SyntheticTexture::paver_checker: return "paver_checker";
        case SyntheticTexture::speckled_gravel: return "speckled_gravel";
    }
    return "unknown";
}

}  // namespace

cv::Mat render_synthetic_patch(SyntheticTexture texture, bool occupied, int size, std::uint64_t seed) {
    if (size < 16) throw DataError("synthetic patch size must be at least 16");
    Rng rng(seed);
    cv::Mat img;
    switch (texture) {
        case SyntheticTexture::asphalt_stripes: img = asphalt(size, rng); break;
        case SyntheticTexture::paver_checker: img = pavers(size, rng); break;
        case SyntheticTexture::speckled_gravel: img = gravel(size, rng); break;
    }
    bay_markings(img, texture, rng);
    if (occupied) vehicle(img, rng);
    // Time of day and weather: a global gain so overall brightness does not
    // reveal the label within a scenario.
    img.convertTo(img, -1, rng.uniform(0.6, 1.4), 0.0);
    return img;
}

std::vector<SampleRecord> generate_synthetic_corpus(const std::vector<SyntheticScenarioSpec>& scenarios,
                                                    const std::filesystem::path& dir, int patch_size,
                                                    std::uint64_t seed) {
    using namespace std::chrono;
    const sys_days first_day = year{2024} / March / 1;
    std::vector<SampleRecord> records;
    for (const auto& spec : scenarios) {
        if (spec.days < 1 || spec.samples == 0) throw DataError("synthetic scenario needs samples and days");
        const std::uint64_t scenario_seed = derive_seed(seed, hash_key(spec.scenario_key));
        Rng labels(derive_seed(scenario_seed, hash_key("labels")));
        const std::size_t per_day = (spec.samples + spec.days - 1) / spec.days;
        for (std::size_t i = 0; i < spec.samples; ++i) {
            const int d = static_cast<int>(i / per_day);
            const Date day{first_day + days{d}};
            const std::size_t slot = i % per_day;
            const bool occupied = labels.uniform() < spec.occupied_fraction;
            char name[32];
            std::snprintf(name, sizeof name, "%05zu.png", i);
            const auto path = dir / spec.scenario_key / format_date(day) / name;
            std::filesystem::create_directories(path.parent_path());
            const cv::Mat patch = render_synthetic_patch(spec.texture, occupied, patch_size, derive_seed(scenario_seed, i));
            if (!cv::imwrite(path.string(), patch)) throw Error("cannot write " + path.string());

            char time[16];
            std::snprintf(time, sizeof time, "%02zu:%02zu:%02zu", 7 + (slot / 3600) % 12, (slot / 60) % 60, slot % 60);
            SampleRecord r;
            r.dataset_id = DatasetId::Synthetic;
            r.scenario_key = spec.scenario_key;
            r.camera_id = texture_name(spec.texture);
            r.day = day;
            r.timestamp = time;
            r.spot_id = std::to_string(i);
            r.label = occupied ? Label::occupied : Label::empty;
            r.patch_path = path.string();
            records.push_back(std::move(r));
        }
    }
    std::sort(records.begin(), records.end(), record_key_less);
    return records;
}

}  // namespace parkocc
