#include "parkocc/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "parkocc/errors.hpp"
#include "parkocc/patch_source.hpp"

namespace parkocc {

EvalOutcome score_predictions(std::span<const Label> predicted, std::span<const Label> truth) {
    if (predicted.size() != truth.size()) {
        throw DataError("prediction count " + std::to_string(predicted.size()) + " does not match target size " +
                        std::to_string(truth.size()));
    }
    EvalOutcome out;
    out.total = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] == truth[i]) ++out.correct;
        if (truth[i] == Label::occupied) {
            ++out.occupied;
        } else {
            ++out.empty;
        }
    }
    return out;
}

EvalOutcome evaluate_framework(const Framework& framework, const std::set<std::string>& source_corpora,
                               std::span<const SampleRecord> target, std::size_t batch_size) {
    for (const auto& r : target) {
        if (source_corpora.contains(corpus_key(r))) {
            throw DataError("cross-dataset violation: target record " + r.patch_path + " belongs to source corpus " +
                            corpus_key(r));
        }
    }
    if (batch_size == 0) batch_size = 64;
    std::vector<Label> predicted;
    std::vector<Label> truth;
    predicted.reserve(target.size());
    truth.reserve(target.size());
    std::vector<cv::Mat> batch;
    for (std::size_t start = 0; start < target.size(); start += batch_size) {
        const std::size_t end = std::min(target.size(), start + batch_size);
        batch.clear();
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(load_patch(target[i]));
            truth.push_back(target[i].label);
        }
        for (const auto& d : framework.classify(batch)) predicted.push_back(d.label);
    }
    return score_predictions(predicted, truth);
}

RunAggregate aggregate_runs(std::span<const double> values) {
    if (values.empty()) throw DataError("aggregate_runs needs at least one value");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

std::string format_cell(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f (%.1f)", mean * 100.0, std * 100.0);
    return buf;
}

RunAggregate EvalCell::aggregate() const { return aggregate_runs(accuracies); }

void EvalReport::add_target(const std::string& target) {
    if (std::find(targets_.begin(), targets_.end(), target) == targets_.end()) targets_.push_back(target);
}

EvalCell& EvalReport::cell_for(const std::string& backbone, const std::string& framework, const std::string& target) {
    add_target(target);
    const bool known_row = std::any_of(row_order_.begin(), row_order_.end(), [&](const ReportRow& r) {
        return r.backbone == backbone && r.framework == framework;
    });
    if (!known_row) row_order_.push_back({backbone, framework});
    for (auto& c : cells_) {
        if (c.backbone == backbone && c.framework == framework && c.target == target) return c;
    }
    cells_.push_back({framework, backbone, target, {}});
    return cells_.back();
}

void EvalReport::add_accuracy(const std::string& backbone, const std::string& framework, const std::string& target,
                              double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw DataError("accuracy outside [0, 1]");
    cell_for(backbone, framework, target).accuracies.push_back(accuracy);
}

void EvalReport::set_accuracies(const std::string& backbone, const std::string& framework, const std::string& target,
                                std::vector<double> accuracies) {
    for (double a : accuracies) {
        if (!(a >= 0.0 && a <= 1.0)) throw DataError("accuracy outside [0, 1]");
    }
    cell_for(backbone, framework, target).accuracies = std::move(accuracies);
}

void EvalReport::set_class_counts(const std::string& target, std::size_t occupied, std::size_t empty) {
    class_counts_[target] = {occupied, empty};
}

std::vector<ReportRow> EvalReport::rows() const {
    std::vector<ReportRow> out;
    std::vector<std::string> backbones;
    for (const auto& r : row_order_) {
        if (std::find(backbones.begin(), backbones.end(), r.backbone) == backbones.end()) backbones.push_back(r.backbone);
    }
    for (const auto& b : backbones) {
        for (const auto& r : row_order_) {
            if (r.backbone == b) out.push_back(r);
        }
    }
    return out;
}

const EvalCell* EvalReport::cell(const ReportRow& row, const std::string& target) const {
    for (const auto& c : cells_) {
        if (c.backbone == row.backbone && c.framework == row.framework && c.target == target && !c.accuracies.empty()) {
            return &c;
        }
    }
    return nullptr;
}

std::optional<RunAggregate> EvalReport::average(const ReportRow& row) const {
    std::vector<double> means;
    for (const auto& t : targets_) {
        if (const auto* c = cell(row, t)) means.push_back(c->aggregate().mean);
    }
    if (means.empty()) return std::nullopt;
    const double n = static_cast<double>(means.size());
    const double mean = std::accumulate(means.begin(), means.end(), 0.0) / n;
    if (means.size() == 1) return RunAggregate{mean, 0.0};
    double ss = 0.0;
    for (double m : means) ss += (m - mean) * (m - mean);
    return RunAggregate{mean, std::sqrt(ss / (n - 1.0))};
}

void to_json(nlohmann::json& j, const EvalReport& report) {
    j = nlohmann::json::object();
    j["source_dataset"] = report.source_;
    j["targets"] = report.targets_;
    auto cells = nlohmann::json::array();
    for (const auto& row : report.rows()) {
        for (const auto& t : report.targets_) {
            if (const auto* c = report.cell(row, t)) {
                const auto agg = c->aggregate();
                cells.push_back({{"backbone", c->backbone},
                                 {"framework", c->framework},
                                 {"target", c->target},
                                 {"accuracies", c->accuracies},
                                 {"mean", agg.mean},
                                 {"std", agg.std}});
            }
        }
    }
    j["cells"] = std::move(cells);
    auto counts = nlohmann::json::object();
    for (const auto& [t, c] : report.class_counts_) counts[t] = {{"occupied", c.first}, {"empty", c.second}};
    j["class_counts"] = std::move(counts);
}

void from_json(const nlohmann::json& j, EvalReport& report) {
    report = EvalReport(j.value("source_dataset", std::string{}));
    for (const auto& t : j.value("targets", std::vector<std::string>{})) report.add_target(t);
    for (const auto& c : j.value("cells", nlohmann::json::array())) {
        report.set_accuracies(c.at("backbone").get<std::string>(), c.at("framework").get<std::string>(),
                              c.at("target").get<std::string>(), c.at("accuracies").get<std::vector<double>>());
    }
    if (j.contains("class_counts")) {
        for (const auto& [t, c] : j["class_counts"].items()) {
            report.set_class_counts(t, c.at("occupied").get<std::size_t>(), c.at("empty").get<std::size_t>());
        }
    }
}

std::string target_display_name(const std::string& target) {
    if (target == "NDISPark") return "NDIS";
    if (target.size() > 3 && target.compare(0, 3, "CAM") == 0 &&
        std::all_of(target.begin() + 3, target.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return "CAM#" + target.substr(3);
    }
    return target;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

const char* const kMissing = "\xE2\x80\x94";

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
    std::vector<std::string> header{"Backbone", "Framework"};
    for (const auto& t : report.targets()) header.push_back(target_display_name(t));
    header.emplace_back("Average");

    std::vector<std::vector<std::string>> body;
    for (const auto& row : report.rows()) {
        std::vector<std::string> line{row.backbone, row.framework};
        for (const auto& t : report.targets()) {
            const auto* c = report.cell(row, t);
            if (c) {
                const auto agg = c->aggregate();
                line.push_back(format_cell(agg.mean, agg.std));
            } else {
                line.emplace_back(kMissing);
            }
        }
        const auto avg = report.average(row);
        line.push_back(avg ? format_cell(avg->mean, avg->std) : std::string(kMissing));
        body.push_back(std::move(line));
    }

    std::ostringstream out;
    if (format == ReportFormat::csv) {
        auto emit = [&](const std::vector<std::string>& fields) {
            for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_field(fields[i]);
            out << '\n';
        };
        emit(header);
        for (const auto& line : body) emit(line);
        return out.str();
    }

    auto emit = [&](const std::vector<std::string>& fields) {
        out << '|';
        for (const auto& f : fields) out << ' ' << f << " |";
        out << '\n';
    };
    if (!report.source_dataset().empty()) out << "Source: " << report.source_dataset() << "\n\n";
    emit(header);
    out << '|';
    for (std::size_t i = 0; i < header.size(); ++i) out << (i < 2 ? " --- |" : " ---: |");
    out << '\n';
    // Blank the repeated backbone name so rows read as groups.
    std::string previous;
    for (auto line : body) {
        if (line[0] == previous) {
            line[0].clear();
        } else {
            previous = line[0];
        }
        emit(line);
    }
    if (!report.class_counts().empty()) {
        out << "\nTarget class counts (occupied / empty):\n\n";
        for (const auto& t : report.targets()) {
            const auto it = report.class_counts().find(t);
            if (it == report.class_counts().end()) continue;
            const auto [occ, emp] = it->second;
            char buf[64];
            const double total = static_cast<double>(occ + emp);
            std::snprintf(buf, sizeof buf, "%.1f%% occupied", total > 0 ? 100.0 * occ / total : 0.0);
            out << "- " << target_display_name(t) << ": " << occ << " / " << emp << " (" << buf << ")\n";
        }
    }
    return out.str();
}

}  // namespace parkocc
