#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mains/dataio.hpp"
#include "mains/field_model.hpp"
#include "mains/geometry.hpp"

namespace mains {

// Point-dipole magnetic environment plus a uniform background field. Fields
// are exactly divergence- and curl-free away from the sources; evaluation
// inside the keep-out radius of any dipole is an error.
struct Dipole {
    Vec3 position = Vec3::Zero();  // m, navigation frame
    Vec3 moment = Vec3::Zero();    // A m^2
};

struct DipoleWorld {
    std::vector<Dipole> dipoles;
    Vec3 background = Vec3(5.0, 16.0, -44.0);  // uT
    double keepout = 0.4;                      // m
};

// Field in microtesla at navigation-frame position r.
Vec3 world_field(const DipoleWorld& world, const Vec3& r);

// Scripted trajectory. The square lap is built from smooth speed and
// heading-rate profiles (quintic ramps, C1 turn-rate bumps), so the
// synthesized IMU signals are finite and continuous. Waypoint scripts are
// interpolated with a natural cubic spline at fixed attitude.
struct TrajectoryScript {
    enum class Kind { Square, Waypoints };
    Kind kind = Kind::Square;

    // Square lap.
    double side = 3.0;            // m
    int laps = 8;
    double speed = 0.9;           // m/s
    double height = 1.0;          // m
    double tilt = 0.0;            // rad, constant roll about the path tangent
    double corner_seconds = 1.0;  // duration of each 90-degree turn
    double ramp_seconds = 2.0;    // speed-up / slow-down duration
    double settle_seconds = 2.0;  // stationary lead-in and tail

    // Waypoints: strictly increasing times, fixed yaw + tilt attitude.
    std::vector<double> wp_t;
    std::vector<Vec3> wp_p;
    double yaw = 0.0;
};

// Total scripted duration in seconds.
double script_duration(const TrajectoryScript& script);

struct SimNoise {
    bool enabled = true;
    double accel_noise_density = 1e-2;  // m/s^2/sqrt(Hz)
    double gyro_noise_density = 1e-3;   // rad/s/sqrt(Hz)
    double accel_bias_walk = 1e-4;      // m/s^2/sqrt(s)
    double gyro_bias_walk = 1e-4;       // rad/s/sqrt(s)
    double sigma_mag = 0.05;            // uT per axis
    // Initial true biases: explicit value plus a seeded N(0, std^2) draw.
    // The default draw matches the filter's default initial bias variance.
    Vec3 bias_acc0 = Vec3::Zero();
    Vec3 bias_gyro0 = Vec3::Zero();
    double bias_std_acc = 0.01;
    double bias_std_gyro = 0.01;
};

// Synthesizes a dataset at the given rate: IMU samples from the exact
// trajectory derivatives, stacked magnetometer readings from the world field
// at each sensor's navigation-frame position rotated into the body frame,
// and the ground-truth pose stream. Deterministic given the seed.
Dataset synthesize(const DipoleWorld& world, const TrajectoryScript& script,
                   const ArrayGeometry& geometry, const SimNoise& noise, uint64_t seed,
                   double rate = 100.0, const Vec3& gravity = Vec3(0.0, 0.0, kDefaultGravity));

// Indoor-like environment whose field magnitude varies by roughly 8 uT along
// the default square lap.
DipoleWorld default_indoor_world();

struct Scenario {
    std::string name = "scenario";
    DipoleWorld world;
    TrajectoryScript script;
    SimNoise noise;
    double rate = 100.0;
    Vec3 gravity = Vec3(0.0, 0.0, kDefaultGravity);
};

Scenario load_scenario(const std::string& path);
Scenario default_square_scenario();

}  // namespace mains
