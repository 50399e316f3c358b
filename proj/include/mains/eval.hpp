#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mains/dataio.hpp"

namespace mains {

// Trajectory error metrics over the post-aiding segment. Horizontal error is
// the planar norm of the position error, vertical the absolute z error.
// Speed error is | |v_est| - |v_truth| | by default; the vector velocity
// error norm is reported alongside.
struct MetricsReport {
    double rms_horizontal = 0.0;      // m
    double end_horizontal = 0.0;      // m
    double rms_vertical = 0.0;        // m
    double end_vertical = 0.0;        // m
    double rms_speed = 0.0;           // m/s, scalar speed difference
    double rms_speed_vector = 0.0;    // m/s, velocity error norm
    double segment_length_m = 0.0;    // ground-truth path length evaluated
    double segment_duration_s = 0.0;  // evaluated duration
    int epochs_evaluated = 0;
};

// Evaluates the estimate against ground truth, excluding the first
// aiding_seconds of the estimate. Epochs are paired with the nearest truth
// sample within time_tolerance; ground-truth velocity comes from central
// differences of the truth positions.
MetricsReport compute_metrics(const std::vector<TrajectoryRecord>& estimate,
                              const std::vector<TruthRecord>& truth, double aiding_seconds,
                              double time_tolerance = 0.02);

// Formatted grid, one column per labelled report (metric rows).
std::string format_metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& reports,
    bool include_vector_speed = false);

std::string metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& reports);

std::string metrics_json(const MetricsReport& report);

}  // namespace mains
