#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mains/field_model.hpp"
#include "mains/strapdown.hpp"

namespace mains {

struct MagRecord {
    double t = 0.0;
    Eigen::VectorXd values;  // 3N, microtesla, sensor order of the geometry file
};

struct TruthRecord {
    double t = 0.0;
    Vec3 p = Vec3::Zero();
    Quat q = Quat::Identity();
};

// A recording: IMU stream, stacked magnetometer stream, optional ground
// truth, embedded array geometry, and metadata.
struct Dataset {
    std::string name;
    int n_mag = 0;
    double imu_rate = 0.0;  // informational; timestamps are authoritative
    double mag_rate = 0.0;
    double sigma_mag = 0.0;  // per-axis magnetometer noise when known, uT; 0 = unknown
    std::vector<ImuSample> imu;
    std::vector<MagRecord> mag;
    std::vector<TruthRecord> truth;
    ArrayGeometry geometry;
};

// Geometry file: one row per magnetometer, "id x y z" (meters, body frame),
// '#' comments allowed.
ArrayGeometry load_geometry(const std::string& path);
void save_geometry(const ArrayGeometry& geometry, const std::string& path);

// Dataset directory layout: meta.json, imu.txt (t sx sy sz wx wy wz),
// mag.txt (t then 3N values), groundtruth.txt (t px py pz qw qx qy qz,
// optional), geometry.txt. Streams must have strictly increasing timestamps;
// NaN is permitted only in magnetometer values (dropouts).
Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& dataset, const std::string& dir);

// Per-epoch filter output row: t, p, q (w x y z), v, then diag(P).
struct TrajectoryRecord {
    double t = 0.0;
    Vec3 p = Vec3::Zero();
    Quat q = Quat::Identity();
    Vec3 v = Vec3::Zero();
    Eigen::VectorXd cov_diag;
};

void save_trajectory(const std::vector<TrajectoryRecord>& trajectory, const std::string& path);
std::vector<TrajectoryRecord> load_trajectory(const std::string& path);

// Run configuration; every key has a default and can be set from a JSON file
// (unknown keys are rejected). See the README for the key reference.
struct RunConfig {
    int order = 1;
    std::string anchor_policy = "all";  // "all" | "minimal"
    double anchor_condition_bound = 1e6;
    Vec3 gravity = Vec3(0.0, 0.0, kDefaultGravity);

    double aiding_seconds = 60.0;
    double aiding_sigma_p = 0.01;  // m
    bool use_mag = true;
    double mag_time_tolerance = 0.005;  // s, mag-to-IMU epoch association

    // Noise densities: white noise in unit/sqrt(Hz), bias walks in unit/sqrt(s).
    double accel_noise_density = 1e-2;
    double gyro_noise_density = 1e-3;
    double accel_bias_walk = 1e-4;
    double gyro_bias_walk = 1e-4;
    double sigma_theta_step = 0.07;  // uT per coefficient per step

    bool adaptive_r = true;
    double sigma_mag = 0.05;        // uT, fixed-R per axis
    double sigma_mag_floor = 0.01;  // uT, floor for the adaptive estimate

    // Initial error standard deviations.
    double init_std_pos = 1e-2;
    double init_std_vel = 1e-2;
    double init_std_att = 1e-2;
    double init_std_bias_acc = 1e-2;
    double init_std_bias_gyro = 1e-2;
    double init_std_theta = 10.0;

    bool gate_innovations = false;
    bool joseph_form = false;
};

RunConfig load_run_config(const std::string& path);

}  // namespace mains
