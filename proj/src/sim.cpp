#include "mains/sim.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "mains/errors.hpp"
#include "mains/strapdown.hpp"

namespace mains {

using nlohmann::json;

Vec3 world_field(const DipoleWorld& world, const Vec3& r) {
    Vec3 field = world.background;
    for (const auto& dipole : world.dipoles) {
        const Vec3 d = r - dipole.position;
        const double dist = d.norm();
        if (dist < world.keepout) {
            throw Error(msg("field requested ", dist, " m from a dipole source, inside the ",
                            world.keepout, " m keep-out radius"));
        }
        const Vec3 n = d / dist;
        // mu0/(4 pi) = 1e-7 T m / A = 0.1 uT m^3 / (A m^2)
        field += 0.1 * (3.0 * n.dot(dipole.moment) * n - dipole.moment) / (dist * dist * dist);
    }
    return field;
}

namespace {

// Quintic smoothstep and its first two derivatives.
double smoothstep5(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smoothstep5_d1(double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); }

// Kinematic sample of a script at time t.
struct PathPoint {
    Vec3 p = Vec3::Zero();
    Vec3 v = Vec3::Zero();
    Vec3 a = Vec3::Zero();
    Quat q = Quat::Identity();
    Vec3 w_body = Vec3::Zero();
};

// Square-lap profile: closed forms for speed v(t), heading psi(t) and their
// rates; position comes from integrating the closed-form velocity.
class SquareProfile {
public:
    explicit SquareProfile(const TrajectoryScript& script) : script_(script) {
        if (script.speed <= 0.0 || script.side <= 0.0 || script.laps < 1) {
            throw ScriptError("square script needs positive side, speed, and laps");
        }
        straight_seconds_ = script.side / script.speed - script.corner_seconds;
        if (straight_seconds_ <= 0.0) {
            throw ScriptError(msg("square script is non-smooth: corner_seconds = ",
                                  script.corner_seconds, " leaves no straight segment (side/",
                                  "speed = ", script.side / script.speed, " s)"));
        }
        lap_seconds_ = 4.0 * (straight_seconds_ + script.corner_seconds);
        cruise_end_ = script.settle_seconds + script.ramp_seconds + script.laps * lap_seconds_;
        total_ = cruise_end_ + script.ramp_seconds + script.settle_seconds;
    }

    double duration() const { return total_; }

    // speed and its derivative
    void speed(double t, double& v, double& vdot) const {
        const double ts = script_.settle_seconds;
        const double tr = script_.ramp_seconds;
        if (t < ts) {
            v = 0.0;
            vdot = 0.0;
        } else if (t < ts + tr) {
            const double u = (t - ts) / tr;
            v = script_.speed * smoothstep5(u);
            vdot = script_.speed * smoothstep5_d1(u) / tr;
        } else if (t < cruise_end_) {
            v = script_.speed;
            vdot = 0.0;
        } else if (t < cruise_end_ + tr) {
            const double u = (t - cruise_end_) / tr;
            v = script_.speed * (1.0 - smoothstep5(u));
            vdot = -script_.speed * smoothstep5_d1(u) / tr;
        } else {
            v = 0.0;
            vdot = 0.0;
        }
    }

    // heading and turn rate; corners distribute one 90-degree turn per side
    void heading(double t, double& psi, double& psidot) const {
        const double t_move = t - script_.settle_seconds - script_.ramp_seconds;
        psi = 0.0;
        psidot = 0.0;
        if (t_move <= 0.0) return;
        const double seg = straight_seconds_ + script_.corner_seconds;
        const double quarter = M_PI / 2.0;
        const int completed = static_cast<int>(std::floor(t_move / seg));
        const double rem = t_move - completed * seg;
        psi = completed * quarter;
        if (rem > straight_seconds_) {
            const double u = (rem - straight_seconds_) / script_.corner_seconds;
            psi += quarter * smoothstep5(u);
            psidot = quarter * smoothstep5_d1(u) / script_.corner_seconds;
        }
    }

    Vec3 planar_velocity(double t) const {
        double v, vdot, psi, psidot;
        speed(t, v, vdot);
        heading(t, psi, psidot);
        return Vec3(v * std::cos(psi), v * std::sin(psi), 0.0);
    }

    PathPoint sample(double t, const Vec3& start, double integrated_x,
                     double integrated_y) const {
        double v, vdot, psi, psidot;
        speed(t, v, vdot);
        heading(t, psi, psidot);
        const double c = std::cos(psi);
        const double s = std::sin(psi);

        PathPoint pt;
        pt.p = Vec3(start.x() + integrated_x, start.y() + integrated_y, script_.height);
        pt.v = Vec3(v * c, v * s, 0.0);
        pt.a = Vec3(vdot * c - v * psidot * s, vdot * s + v * psidot * c, 0.0);
        pt.q = quat_mul(quat_exp(Vec3(0.0, 0.0, psi)), quat_exp(Vec3(script_.tilt, 0.0, 0.0)));
        pt.w_body = quat_to_rot(pt.q).transpose() * Vec3(0.0, 0.0, psidot);
        return pt;
    }

private:
    TrajectoryScript script_;
    double straight_seconds_ = 0.0;
    double lap_seconds_ = 0.0;
    double cruise_end_ = 0.0;
    double total_ = 0.0;
};

// Natural cubic spline through (t_i, y_i).
class CubicSpline {
public:
    CubicSpline(const std::vector<double>& t, const std::vector<double>& y) : t_(t), y_(y) {
        const size_t n = t.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
        for (size_t i = 1; i + 1 < n; ++i) {
            const double h0 = t[i] - t[i - 1];
            const double h1 = t[i + 1] - t[i];
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        }
        // Thomas algorithm on rows 1..n-2 (natural ends: m_0 = m_{n-1} = 0).
        for (size_t i = 2; i + 1 < n; ++i) {
            const double f = a[i] / b[i - 1];
            b[i] -= f * c[i - 1];
            d[i] -= f * d[i - 1];
        }
        for (size_t i = n - 2; i >= 1; --i) {
            m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
            if (i == 1) break;
        }
    }

    void eval(double t, double& y, double& dy, double& ddy) const {
        size_t hi = 1;
        while (hi + 1 < t_.size() && t_[hi] < t) ++hi;
        const size_t lo = hi - 1;
        const double h = t_[hi] - t_[lo];
        const double u = (t_[hi] - t) / h;
        const double w = (t - t_[lo]) / h;
        y = u * y_[lo] + w * y_[hi] +
            ((u * u * u - u) * m_[lo] + (w * w * w - w) * m_[hi]) * h * h / 6.0;
        dy = (y_[hi] - y_[lo]) / h +
             (-(3.0 * u * u - 1.0) * m_[lo] + (3.0 * w * w - 1.0) * m_[hi]) * h / 6.0;
        ddy = u * m_[lo] + w * m_[hi];
    }

private:
    std::vector<double> t_;
    std::vector<double> y_;
    std::vector<double> m_;
};

}  // namespace

double script_duration(const TrajectoryScript& script) {
    if (script.kind == TrajectoryScript::Kind::Square) {
        return SquareProfile(script).duration();
    }
    if (script.wp_t.size() < 2) {
        throw ScriptError("waypoint script needs at least two waypoints");
    }
    return script.wp_t.back() - script.wp_t.front();
}

Dataset synthesize(const DipoleWorld& world, const TrajectoryScript& script,
                   const ArrayGeometry& geometry, const SimNoise& noise, uint64_t seed,
                   double rate, const Vec3& gravity) {
    if (rate <= 0.0) {
        throw ConfigError("sample rate must be positive");
    }
    const double duration = script_duration(script);
    const int count = static_cast<int>(std::floor(duration * rate)) + 1;
    const double ts = 1.0 / rate;

    // Evaluate the script at every sample time.
    std::vector<PathPoint> path(static_cast<size_t>(count));
    if (script.kind == TrajectoryScript::Kind::Square) {
        const SquareProfile profile(script);
        const Vec3 start(0.0, -0.5 * script.side, script.height);
        // Positions by RK4 quadrature of the closed-form planar velocity,
        // refined with substeps so the ground truth is consistent with the
        // analytic velocity and acceleration to near machine precision.
        double x = 0.0, y = 0.0;
        const int substeps = std::max(1, static_cast<int>(std::ceil(ts / 1e-3)));
        const double h = ts / substeps;
        for (int k = 0; k < count; ++k) {
            const double t = k / rate;
            path[static_cast<size_t>(k)] = profile.sample(t, start, x, y);
            for (int s = 0; s < substeps; ++s) {
                const double t0 = t + s * h;
                const Vec3 k1 = profile.planar_velocity(t0);
                const Vec3 k2 = profile.planar_velocity(t0 + 0.5 * h);
                const Vec3 k4 = profile.planar_velocity(t0 + h);
                x += h / 6.0 * (k1.x() + 4.0 * k2.x() + k4.x());
                y += h / 6.0 * (k1.y() + 4.0 * k2.y() + k4.y());
            }
        }
        // Center the lap footprint on the origin.
        Vec3 lo = path.front().p;
        Vec3 hi = path.front().p;
        for (const auto& pt : path) {
            lo = lo.cwiseMin(pt.p);
            hi = hi.cwiseMax(pt.p);
        }
        const Vec3 shift(0.5 * (lo.x() + hi.x()), 0.5 * (lo.y() + hi.y()), 0.0);
        for (auto& pt : path) {
            pt.p -= shift;
        }
    } else {
        const size_t n = script.wp_t.size();
        if (n < 2) {
            throw ScriptError("waypoint script needs at least two waypoints");
        }
        for (size_t i = 1; i < n; ++i) {
            if (!(script.wp_t[i] > script.wp_t[i - 1])) {
                throw ScriptError(msg("waypoint script is non-smooth: timestamps not strictly ",
                                      "increasing at waypoint ", i + 1));
            }
        }
        std::vector<double> xs(n), ys(n), zs(n);
        for (size_t i = 0; i < n; ++i) {
            xs[i] = script.wp_p[i].x();
            ys[i] = script.wp_p[i].y();
            zs[i] = script.wp_p[i].z();
        }
        const CubicSpline sx(script.wp_t, xs), sy(script.wp_t, ys), sz(script.wp_t, zs);
        const Quat q = quat_mul(quat_exp(Vec3(0.0, 0.0, script.yaw)),
                                quat_exp(Vec3(script.tilt, 0.0, 0.0)));
        for (int k = 0; k < count; ++k) {
            const double t = script.wp_t.front() + k / rate;
            PathPoint& pt = path[static_cast<size_t>(k)];
            double p, v, a;
            sx.eval(t, p, v, a); pt.p.x() = p; pt.v.x() = v; pt.a.x() = a;
            sy.eval(t, p, v, a); pt.p.y() = p; pt.v.y() = v; pt.a.y() = a;
            sz.eval(t, p, v, a); pt.p.z() = p; pt.v.z() = v; pt.a.z() = a;
            pt.q = q;
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> randn(0.0, 1.0);
    auto draw3 = [&](double std_dev) -> Vec3 {
        return Vec3(randn(rng), randn(rng), randn(rng)) * std_dev;
    };

    Vec3 bias_acc = noise.bias_acc0;
    Vec3 bias_gyro = noise.bias_gyro0;
    if (noise.enabled) {
        bias_acc += draw3(noise.bias_std_acc);
        bias_gyro += draw3(noise.bias_std_gyro);
    }
    const double sigma_acc = noise.enabled ? noise.accel_noise_density * std::sqrt(rate) : 0.0;
    const double sigma_gyro = noise.enabled ? noise.gyro_noise_density * std::sqrt(rate) : 0.0;
    const double sigma_mag = noise.enabled ? noise.sigma_mag : 0.0;

    Dataset ds;
    ds.name = "sim";
    ds.n_mag = geometry.size();
    ds.imu_rate = rate;
    ds.mag_rate = rate;
    ds.sigma_mag = sigma_mag;
    ds.geometry = geometry;
    ds.imu.reserve(path.size());
    ds.mag.reserve(path.size());
    ds.truth.reserve(path.size());

    for (int k = 0; k < count; ++k) {
        const double t = k / rate;
        const PathPoint& pt = path[static_cast<size_t>(k)];
        const Mat3 r = quat_to_rot(pt.q);

        ImuSample u;
        u.t = t;
        u.specific_force = r.transpose() * (pt.a - gravity) + bias_acc + draw3(sigma_acc);
        u.angular_rate = pt.w_body + bias_gyro + draw3(sigma_gyro);
        ds.imu.push_back(u);
        if (noise.enabled) {
            bias_acc += draw3(noise.accel_bias_walk * std::sqrt(ts));
            bias_gyro += draw3(noise.gyro_bias_walk * std::sqrt(ts));
        }

        MagRecord m;
        m.t = t;
        m.values.resize(3 * ds.n_mag);
        for (int i = 0; i < ds.n_mag; ++i) {
            const Vec3 sensor_nav = pt.p + r * geometry.positions[i];
            const Vec3 field = world_field(world, sensor_nav);
            m.values.segment<3>(3 * i) = r.transpose() * field + draw3(sigma_mag);
        }
        ds.mag.push_back(std::move(m));

        ds.truth.push_back({t, pt.p, pt.q});
    }
    return ds;
}

DipoleWorld default_indoor_world() {
    DipoleWorld world;
    world.background = Vec3(5.0, 16.0, -44.0);
    world.keepout = 0.4;
    // Moments sized so the magnitude varies by roughly 8 uT along the
    // default square lap.
    world.dipoles = {
        {Vec3(1.8, 1.2, -0.8), Vec3(26.0, -19.0, 142.0)},
        {Vec3(-1.4, -0.6, -0.9), Vec3(-39.0, 52.0, 116.0)},
        {Vec3(0.3, -2.6, 0.2), Vec3(77.0, 39.0, -58.0)},
        {Vec3(-2.8, 1.6, 0.8), Vec3(-52.0, -90.0, 39.0)},
        {Vec3(2.9, -1.1, 1.4), Vec3(58.0, 71.0, 84.0)},
        {Vec3(-0.6, 2.9, -0.5), Vec3(-32.0, 110.0, -77.0)},
    };
    return world;
}

Scenario default_square_scenario() {
    Scenario scenario;
    scenario.name = "square-default";
    scenario.world = default_indoor_world();
    scenario.script.kind = TrajectoryScript::Kind::Square;
    scenario.script.side = 3.0;
    scenario.script.laps = 8;
    scenario.script.speed = 0.9;
    scenario.script.height = 1.0;
    scenario.script.tilt = 0.0;
    scenario.script.corner_seconds = 1.0;
    scenario.script.ramp_seconds = 2.0;
    scenario.script.settle_seconds = 2.0;
    return scenario;
}

namespace {

Vec3 vec3_from(const json& j, const std::string& what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) {
        throw ConfigError(msg(what, " must have 3 components"));
    }
    return Vec3(v[0], v[1], v[2]);
}

}  // namespace

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(msg("cannot open scenario file: ", path));
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(msg("bad scenario JSON ", path, ": ", e.what()));
    }

    Scenario sc = default_square_scenario();
    try {
        sc.name = j.value("name", sc.name);
        sc.rate = j.value("rate", sc.rate);
        if (j.contains("gravity")) sc.gravity = vec3_from(j.at("gravity"), "gravity");

        if (j.contains("world")) {
            const auto& w = j.at("world");
            if (w.is_string()) {
                if (w.get<std::string>() != "default-indoor") {
                    throw ConfigError(msg("unknown world preset '", w.get<std::string>(), "'"));
                }
            } else {
                sc.world.dipoles.clear();
                if (w.contains("background")) {
                    sc.world.background = vec3_from(w.at("background"), "world.background");
                }
                sc.world.keepout = w.value("keepout", sc.world.keepout);
                for (const auto& d : w.value("dipoles", json::array())) {
                    Dipole dip;
                    dip.position = vec3_from(d.at("position"), "dipole.position");
                    dip.moment = vec3_from(d.at("moment"), "dipole.moment");
                    sc.world.dipoles.push_back(dip);
                }
            }
        }

        if (j.contains("script")) {
            const auto& s = j.at("script");
            const std::string type = s.value("type", "square");
            if (type == "square") {
                sc.script.kind = TrajectoryScript::Kind::Square;
                sc.script.side = s.value("side", sc.script.side);
                sc.script.laps = s.value("laps", sc.script.laps);
                sc.script.speed = s.value("speed", sc.script.speed);
                sc.script.height = s.value("height", sc.script.height);
                sc.script.tilt = s.value("tilt", sc.script.tilt);
                sc.script.corner_seconds = s.value("corner_seconds", sc.script.corner_seconds);
                sc.script.ramp_seconds = s.value("ramp_seconds", sc.script.ramp_seconds);
                sc.script.settle_seconds = s.value("settle_seconds", sc.script.settle_seconds);
            } else if (type == "waypoints") {
                sc.script.kind = TrajectoryScript::Kind::Waypoints;
                sc.script.yaw = s.value("yaw", 0.0);
                sc.script.tilt = s.value("tilt", 0.0);
                for (const auto& row : s.at("points")) {
                    const auto v = row.get<std::vector<double>>();
                    if (v.size() != 4) {
                        throw ConfigError("waypoint rows must be [t, x, y, z]");
                    }
                    sc.script.wp_t.push_back(v[0]);
                    sc.script.wp_p.emplace_back(v[1], v[2], v[3]);
                }
            } else {
                throw ConfigError(msg("unknown script type '", type, "'"));
            }
        }

        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            sc.noise.enabled = n.value("enabled", sc.noise.enabled);
            sc.noise.accel_noise_density = n.value("accel_noise_density",
                                                   sc.noise.accel_noise_density);
            sc.noise.gyro_noise_density = n.value("gyro_noise_density",
                                                  sc.noise.gyro_noise_density);
            sc.noise.accel_bias_walk = n.value("accel_bias_walk", sc.noise.accel_bias_walk);
            sc.noise.gyro_bias_walk = n.value("gyro_bias_walk", sc.noise.gyro_bias_walk);
            sc.noise.sigma_mag = n.value("sigma_mag", sc.noise.sigma_mag);
            sc.noise.bias_std_acc = n.value("bias_std_acc", sc.noise.bias_std_acc);
            sc.noise.bias_std_gyro = n.value("bias_std_gyro", sc.noise.bias_std_gyro);
            if (n.contains("bias_acc0")) sc.noise.bias_acc0 = vec3_from(n.at("bias_acc0"),
                                                                        "noise.bias_acc0");
            if (n.contains("bias_gyro0")) sc.noise.bias_gyro0 = vec3_from(n.at("bias_gyro0"),
                                                                          "noise.bias_gyro0");
        }
    } catch (const json::exception& e) {
        throw ConfigError(msg("scenario ", path, ": ", e.what()));
    }
    return sc;
}

}  // namespace mains
