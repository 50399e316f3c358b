#include "mains/dataio.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mains/errors.hpp"

namespace mains {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Parses one whitespace-delimited numeric row. Returns false on blank/comment.
bool parse_row(const std::string& line, std::vector<double>& out) {
    out.clear();
    const char* p = line.c_str();
    while (*p) {
        while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
        if (*p == '\0' || *p == '#') break;
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (end == p) {
            throw SchemaError(msg("unparseable token at '", std::string(p).substr(0, 16), "'"));
        }
        out.push_back(v);
        p = end;
    }
    return !out.empty();
}

std::vector<std::vector<double>> read_table(const std::string& path, size_t width,
                                            const std::string& what) {
    std::ifstream in(path);
    if (!in) {
        throw SchemaError(msg("cannot open ", what, " file: ", path));
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::vector<double> row;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        try {
            if (!parse_row(line, row)) continue;
        } catch (const SchemaError& e) {
            throw SchemaError(msg(what, " file ", path, " line ", line_no, ": ", e.what()));
        }
        if (width != 0 && row.size() != width) {
            throw SchemaError(msg(what, " file ", path, " line ", line_no, ": expected ", width,
                                  " columns, got ", row.size()));
        }
        rows.push_back(row);
    }
    return rows;
}

void check_monotone(const std::vector<double>& t, const std::string& what,
                    const std::string& path) {
    for (size_t i = 1; i < t.size(); ++i) {
        if (!(t[i] > t[i - 1])) {
            throw SchemaError(msg(what, " file ", path, ": timestamps not strictly increasing "
                                  "at row ", i + 1, " (t = ", t[i], " after ", t[i - 1], ")"));
        }
    }
}

void require_finite(const std::vector<double>& row, const std::string& what,
                    const std::string& path, size_t row_ix) {
    for (double v : row) {
        if (!std::isfinite(v)) {
            throw SchemaError(msg(what, " file ", path, " row ", row_ix + 1,
                                  ": non-finite value"));
        }
    }
}

double rate_from_times(const std::vector<double>& t) {
    if (t.size() < 2) return 0.0;
    return (t.size() - 1) / (t.back() - t.front());
}

FILE* open_out(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) {
        throw SchemaError(msg("cannot write ", path));
    }
    return f;
}

}  // namespace

ArrayGeometry load_geometry(const std::string& path) {
    const auto rows = read_table(path, 4, "geometry");
    if (rows.empty()) {
        throw SchemaError(msg("geometry file ", path, " has no sensors"));
    }
    ArrayGeometry geometry;
    for (size_t i = 0; i < rows.size(); ++i) {
        require_finite(rows[i], "geometry", path, i);
        geometry.ids.push_back(static_cast<int>(rows[i][0]));
        geometry.positions.emplace_back(rows[i][1], rows[i][2], rows[i][3]);
    }
    return geometry;
}

void save_geometry(const ArrayGeometry& geometry, const std::string& path) {
    FILE* f = open_out(path);
    std::fprintf(f, "# id x y z (meters, body frame)\n");
    for (int i = 0; i < geometry.size(); ++i) {
        std::fprintf(f, "%d %.17g %.17g %.17g\n", geometry.ids[i], geometry.positions[i].x(),
                     geometry.positions[i].y(), geometry.positions[i].z());
    }
    std::fclose(f);
}

Dataset load_dataset(const std::string& dir) {
    const fs::path base(dir);
    const auto meta_path = base / "meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) {
        throw SchemaError(msg("cannot open dataset metadata: ", meta_path.string()));
    }
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw SchemaError(msg("bad metadata JSON ", meta_path.string(), ": ", e.what()));
    }

    Dataset ds;
    ds.name = meta.value("name", base.filename().string());
    ds.n_mag = meta.at("n_mag").get<int>();
    if (meta.contains("units")) {
        const auto& units = meta.at("units");
        const std::string pos = units.value("position", "m");
        const std::string field = units.value("field", "uT");
        const std::string time = units.value("time", "s");
        if (pos != "m" || field != "uT" || time != "s") {
            throw SchemaError(msg("dataset ", dir, " declares units (", pos, ", ", field, ", ",
                                  time, "); expected (m, uT, s)"));
        }
    }

    ds.sigma_mag = meta.value("sigma_mag", 0.0);
    ds.geometry = load_geometry((base / meta.value("geometry", "geometry.txt")).string());
    if (ds.geometry.size() != ds.n_mag) {
        throw SchemaError(msg("dataset ", dir, ": geometry has ", ds.geometry.size(),
                              " sensors but meta declares n_mag = ", ds.n_mag));
    }

    const std::string imu_path = (base / "imu.txt").string();
    const auto imu_rows = read_table(imu_path, 7, "imu");
    if (imu_rows.empty()) {
        throw SchemaError(msg("imu file ", imu_path, " is empty"));
    }
    std::vector<double> imu_t;
    for (size_t i = 0; i < imu_rows.size(); ++i) {
        require_finite(imu_rows[i], "imu", imu_path, i);
        const auto& r = imu_rows[i];
        ImuSample u;
        u.t = r[0];
        u.specific_force = Vec3(r[1], r[2], r[3]);
        u.angular_rate = Vec3(r[4], r[5], r[6]);
        ds.imu.push_back(u);
        imu_t.push_back(r[0]);
    }
    check_monotone(imu_t, "imu", imu_path);
    ds.imu_rate = meta.value("imu_rate", rate_from_times(imu_t));

    const std::string mag_path = (base / "mag.txt").string();
    const size_t mag_width = 1 + 3 * static_cast<size_t>(ds.n_mag);
    const auto mag_rows = read_table(mag_path, mag_width, "mag");
    std::vector<double> mag_t;
    for (const auto& r : mag_rows) {
        if (!std::isfinite(r[0])) {
            throw SchemaError(msg("mag file ", mag_path, ": non-finite timestamp"));
        }
        MagRecord m;
        m.t = r[0];
        m.values = Eigen::Map<const Eigen::VectorXd>(r.data() + 1, 3 * ds.n_mag);
        ds.mag.push_back(std::move(m));
        mag_t.push_back(r[0]);
    }
    check_monotone(mag_t, "mag", mag_path);
    ds.mag_rate = meta.value("mag_rate", rate_from_times(mag_t));

    const auto truth_path = base / "groundtruth.txt";
    if (fs::exists(truth_path)) {
        const auto truth_rows = read_table(truth_path.string(), 8, "groundtruth");
        std::vector<double> truth_t;
        for (size_t i = 0; i < truth_rows.size(); ++i) {
            require_finite(truth_rows[i], "groundtruth", truth_path.string(), i);
            const auto& r = truth_rows[i];
            TruthRecord g;
            g.t = r[0];
            g.p = Vec3(r[1], r[2], r[3]);
            g.q = Quat(r[4], r[5], r[6], r[7]).normalized();
            ds.truth.push_back(g);
            truth_t.push_back(r[0]);
        }
        check_monotone(truth_t, "groundtruth", truth_path.string());
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
    const fs::path base(dir);
    fs::create_directories(base);

    json meta;
    meta["name"] = dataset.name;
    meta["n_mag"] = dataset.n_mag;
    meta["imu_rate"] = dataset.imu_rate;
    meta["mag_rate"] = dataset.mag_rate;
    meta["geometry"] = "geometry.txt";
    if (dataset.sigma_mag > 0.0) {
        meta["sigma_mag"] = dataset.sigma_mag;
    }
    meta["units"] = {{"position", "m"}, {"field", "uT"}, {"time", "s"}};
    std::ofstream meta_out(base / "meta.json");
    meta_out << meta.dump(2) << "\n";

    save_geometry(dataset.geometry, (base / "geometry.txt").string());

    FILE* f = open_out((base / "imu.txt").string());
    std::fprintf(f, "# t sx sy sz wx wy wz (s, m/s^2, rad/s)\n");
    for (const auto& u : dataset.imu) {
        std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", u.t,
                     u.specific_force.x(), u.specific_force.y(), u.specific_force.z(),
                     u.angular_rate.x(), u.angular_rate.y(), u.angular_rate.z());
    }
    std::fclose(f);

    f = open_out((base / "mag.txt").string());
    std::fprintf(f, "# t then 3N stacked magnetometer values (s, uT)\n");
    for (const auto& m : dataset.mag) {
        std::fprintf(f, "%.17g", m.t);
        for (int i = 0; i < m.values.size(); ++i) {
            std::fprintf(f, " %.17g", m.values(i));
        }
        std::fprintf(f, "\n");
    }
    std::fclose(f);

    if (!dataset.truth.empty()) {
        f = open_out((base / "groundtruth.txt").string());
        std::fprintf(f, "# t px py pz qw qx qy qz (s, m)\n");
        for (const auto& g : dataset.truth) {
            std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", g.t, g.p.x(),
                         g.p.y(), g.p.z(), g.q.w(), g.q.x(), g.q.y(), g.q.z());
        }
        std::fclose(f);
    }
}

void save_trajectory(const std::vector<TrajectoryRecord>& trajectory, const std::string& path) {
    FILE* f = open_out(path);
    std::fprintf(f, "# t px py pz qw qx qy qz vx vy vz diag(P)...\n");
    for (const auto& r : trajectory) {
        std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g", r.t,
                     r.p.x(), r.p.y(), r.p.z(), r.q.w(), r.q.x(), r.q.y(), r.q.z(), r.v.x(),
                     r.v.y(), r.v.z());
        for (int i = 0; i < r.cov_diag.size(); ++i) {
            std::fprintf(f, " %.17g", r.cov_diag(i));
        }
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

std::vector<TrajectoryRecord> load_trajectory(const std::string& path) {
    const auto rows = read_table(path, 0, "trajectory");
    std::vector<TrajectoryRecord> out;
    std::vector<double> times;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 11) {
            throw SchemaError(msg("trajectory file ", path, " row ", i + 1,
                                  ": expected at least 11 columns, got ", r.size()));
        }
        TrajectoryRecord rec;
        rec.t = r[0];
        rec.p = Vec3(r[1], r[2], r[3]);
        rec.q = Quat(r[4], r[5], r[6], r[7]);
        rec.v = Vec3(r[8], r[9], r[10]);
        rec.cov_diag = Eigen::Map<const Eigen::VectorXd>(r.data() + 11,
                                                         static_cast<int>(r.size()) - 11);
        out.push_back(std::move(rec));
        times.push_back(r[0]);
    }
    check_monotone(times, "trajectory", path);
    return out;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(msg("cannot open config file: ", path));
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(msg("bad config JSON ", path, ": ", e.what()));
    }

    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "order") cfg.order = value.get<int>();
            else if (key == "anchor_policy") cfg.anchor_policy = value.get<std::string>();
            else if (key == "anchor_condition_bound") cfg.anchor_condition_bound = value.get<double>();
            else if (key == "gravity") {
                const auto g = value.get<std::vector<double>>();
                if (g.size() != 3) throw ConfigError("gravity must have 3 components");
                cfg.gravity = Vec3(g[0], g[1], g[2]);
            }
            else if (key == "aiding_seconds") cfg.aiding_seconds = value.get<double>();
            else if (key == "aiding_sigma_p") cfg.aiding_sigma_p = value.get<double>();
            else if (key == "use_mag") cfg.use_mag = value.get<bool>();
            else if (key == "mag_time_tolerance") cfg.mag_time_tolerance = value.get<double>();
            else if (key == "accel_noise_density") cfg.accel_noise_density = value.get<double>();
            else if (key == "gyro_noise_density") cfg.gyro_noise_density = value.get<double>();
            else if (key == "accel_bias_walk") cfg.accel_bias_walk = value.get<double>();
            else if (key == "gyro_bias_walk") cfg.gyro_bias_walk = value.get<double>();
            else if (key == "sigma_theta_step") cfg.sigma_theta_step = value.get<double>();
            else if (key == "adaptive_r") cfg.adaptive_r = value.get<bool>();
            else if (key == "sigma_mag") cfg.sigma_mag = value.get<double>();
            else if (key == "sigma_mag_floor") cfg.sigma_mag_floor = value.get<double>();
            else if (key == "init_std_pos") cfg.init_std_pos = value.get<double>();
            else if (key == "init_std_vel") cfg.init_std_vel = value.get<double>();
            else if (key == "init_std_att") cfg.init_std_att = value.get<double>();
            else if (key == "init_std_bias_acc") cfg.init_std_bias_acc = value.get<double>();
            else if (key == "init_std_bias_gyro") cfg.init_std_bias_gyro = value.get<double>();
            else if (key == "init_std_theta") cfg.init_std_theta = value.get<double>();
            else if (key == "gate_innovations") cfg.gate_innovations = value.get<bool>();
            else if (key == "joseph_form") cfg.joseph_form = value.get<bool>();
            else throw ConfigError(msg("unknown config key '", key, "' in ", path));
        } catch (const json::exception& e) {
            throw ConfigError(msg("config key '", key, "' in ", path, ": ", e.what()));
        }
    }
    if (cfg.anchor_policy != "all" && cfg.anchor_policy != "minimal") {
        throw ConfigError(msg("anchor_policy must be 'all' or 'minimal', got '",
                              cfg.anchor_policy, "'"));
    }
    return cfg;
}

}  // namespace mains
