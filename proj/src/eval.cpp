#include "mains/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "mains/errors.hpp"

namespace mains {

namespace {

int nearest_truth(const std::vector<TruthRecord>& truth, double t) {
    const auto it = std::lower_bound(truth.begin(), truth.end(), t,
                                     [](const TruthRecord& g, double tt) { return g.t < tt; });
    int best = static_cast<int>(std::min<size_t>(it - truth.begin(), truth.size() - 1));
    if (best > 0 &&
        std::abs(truth[best - 1].t - t) < std::abs(truth[static_cast<size_t>(best)].t - t)) {
        --best;
    }
    return best;
}

Vec3 truth_velocity(const std::vector<TruthRecord>& truth, int i) {
    const int lo = std::max(0, i - 1);
    const int hi = std::min(static_cast<int>(truth.size()) - 1, i + 1);
    const double dt = truth[static_cast<size_t>(hi)].t - truth[static_cast<size_t>(lo)].t;
    if (dt <= 0.0) return Vec3::Zero();
    return (truth[static_cast<size_t>(hi)].p - truth[static_cast<size_t>(lo)].p) / dt;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<TrajectoryRecord>& estimate,
                              const std::vector<TruthRecord>& truth, double aiding_seconds,
                              double time_tolerance) {
    if (estimate.empty()) {
        throw SchemaError("empty estimated trajectory");
    }
    if (truth.empty()) {
        throw SchemaError("empty ground truth");
    }
    const double t_eval = estimate.front().t + aiding_seconds;

    MetricsReport report;
    double sum_h2 = 0.0, sum_v2 = 0.0, sum_s2 = 0.0, sum_sv2 = 0.0;
    double first_t = 0.0, last_t = 0.0;
    int prev_truth = -1;
    for (const auto& rec : estimate) {
        if (rec.t < t_eval - 1e-9) continue;
        const int g = nearest_truth(truth, rec.t);
        if (std::abs(truth[static_cast<size_t>(g)].t - rec.t) > time_tolerance) continue;

        const Vec3 err = rec.p - truth[static_cast<size_t>(g)].p;
        const double horizontal = std::hypot(err.x(), err.y());
        const double vertical = std::abs(err.z());
        const Vec3 v_gt = truth_velocity(truth, g);
        const double speed = std::abs(rec.v.norm() - v_gt.norm());
        const double speed_vec = (rec.v - v_gt).norm();

        sum_h2 += horizontal * horizontal;
        sum_v2 += vertical * vertical;
        sum_s2 += speed * speed;
        sum_sv2 += speed_vec * speed_vec;
        report.end_horizontal = horizontal;
        report.end_vertical = vertical;
        if (report.epochs_evaluated == 0) first_t = rec.t;
        last_t = rec.t;

        if (prev_truth >= 0 && g > prev_truth) {
            for (int i = prev_truth; i < g; ++i) {
                report.segment_length_m +=
                    (truth[static_cast<size_t>(i) + 1].p - truth[static_cast<size_t>(i)].p)
                        .norm();
            }
        }
        prev_truth = g;
        ++report.epochs_evaluated;
    }
    if (report.epochs_evaluated == 0) {
        throw SchemaError(msg("empty evaluation segment: no estimate epochs past t = ", t_eval,
                              " matched ground truth within ", time_tolerance, " s"));
    }
    const double n = report.epochs_evaluated;
    report.rms_horizontal = std::sqrt(sum_h2 / n);
    report.rms_vertical = std::sqrt(sum_v2 / n);
    report.rms_speed = std::sqrt(sum_s2 / n);
    report.rms_speed_vector = std::sqrt(sum_sv2 / n);
    report.segment_duration_s = last_t - first_t;
    return report;
}

namespace {

struct MetricRow {
    const char* label;
    double MetricsReport::*field;
};

constexpr MetricRow kRows[] = {
    {"RMS Horizontal Error (m)", &MetricsReport::rms_horizontal},
    {"Horizontal Error at the end (m)", &MetricsReport::end_horizontal},
    {"RMS Vertical Error (m)", &MetricsReport::rms_vertical},
    {"Vertical Error at the end (m)", &MetricsReport::end_vertical},
    {"RMS Speed Error (m/s)", &MetricsReport::rms_speed},
    {"RMS Velocity Error (m/s)", &MetricsReport::rms_speed_vector},
    {"Evaluated length (m)", &MetricsReport::segment_length_m},
    {"Evaluated duration (s)", &MetricsReport::segment_duration_s},
};

}  // namespace

std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& reports,
    bool include_vector_speed) {
    std::string out;
    char buf[64];
    size_t label_width = 0;
    for (const auto& row : kRows) {
        label_width = std::max(label_width, std::string(row.label).size());
    }
    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), "");
    out += buf;
    for (const auto& [name, report] : reports) {
        (void)report;
        std::snprintf(buf, sizeof(buf), " %12s", name.c_str());
        out += buf;
    }
    out += "\n";
    for (const auto& row : kRows) {
        if (!include_vector_speed && row.field == &MetricsReport::rms_speed_vector) continue;
        std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(label_width), row.label);
        out += buf;
        for (const auto& [name, report] : reports) {
            (void)name;
            std::snprintf(buf, sizeof(buf), " %12.3f", report.*(row.field));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
    std::string out = "metric";
    for (const auto& [name, report] : reports) {
        (void)report;
        out += "," + name;
    }
    out += "\n";
    char buf[64];
    for (const auto& row : kRows) {
        out += row.label;
        for (const auto& [name, report] : reports) {
            (void)name;
            std::snprintf(buf, sizeof(buf), ",%.6f", report.*(row.field));
            out += buf;
        }
        out += "\n";
    }
    return out;
}

std::string metrics_json(const MetricsReport& report) {
    nlohmann::json j;
    j["rms_horizontal_m"] = report.rms_horizontal;
    j["end_horizontal_m"] = report.end_horizontal;
    j["rms_vertical_m"] = report.rms_vertical;
    j["end_vertical_m"] = report.end_vertical;
    j["rms_speed_mps"] = report.rms_speed;
    j["rms_speed_vector_mps"] = report.rms_speed_vector;
    j["segment_length_m"] = report.segment_length_m;
    j["segment_duration_s"] = report.segment_duration_s;
    j["epochs_evaluated"] = report.epochs_evaluated;
    return j.dump(2);
}

}  // namespace mains
