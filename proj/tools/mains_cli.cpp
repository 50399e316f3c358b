#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mains/dataio.hpp"
#include "mains/errors.hpp"
#include "mains/eskf.hpp"
#include "mains/eval.hpp"
#include "mains/sim.hpp"

namespace {

using namespace mains;

ArrayGeometry resolve_geometry(const std::string& geometry_path, const Dataset* dataset) {
    if (!geometry_path.empty()) {
        return load_geometry(geometry_path);
    }
    if (dataset != nullptr && dataset->geometry.size() > 0) {
        return dataset->geometry;
    }
    return make_rect_grid(6, 5, 0.05);
}

struct RunFlags {
    std::string config_path;
    int order = 0;          // 0 = keep config value
    bool no_mag = false;
    double aiding_seconds = -1.0;  // <0 = keep config value
};

RunConfig assemble_config(const RunFlags& flags) {
    RunConfig cfg;
    if (!flags.config_path.empty()) {
        cfg = load_run_config(flags.config_path);
    }
    if (flags.order > 0) cfg.order = flags.order;
    if (flags.no_mag) cfg.use_mag = false;
    if (flags.aiding_seconds >= 0.0) cfg.aiding_seconds = flags.aiding_seconds;
    return cfg;
}

int cmd_simulate(const std::string& scenario_path, const std::string& geometry_path,
                 uint64_t seed, const std::string& out_dir, bool no_noise) {
    Scenario scenario = scenario_path.empty() ? default_square_scenario()
                                              : load_scenario(scenario_path);
    if (no_noise) scenario.noise.enabled = false;
    const ArrayGeometry geometry = resolve_geometry(geometry_path, nullptr);
    Dataset dataset = synthesize(scenario.world, scenario.script, geometry, scenario.noise,
                                 seed, scenario.rate, scenario.gravity);
    dataset.name = scenario.name + "-seed" + std::to_string(seed);
    save_dataset(dataset, out_dir);
    std::printf("wrote %s: %zu IMU samples, %zu mag rows, %zu truth rows (N = %d)\n",
                out_dir.c_str(), dataset.imu.size(), dataset.mag.size(), dataset.truth.size(),
                dataset.n_mag);
    return 0;
}

int cmd_run(const std::string& dataset_dir, const RunFlags& flags,
            const std::string& geometry_path, const std::string& out_path) {
    const Dataset dataset = load_dataset(dataset_dir);
    const ArrayGeometry geometry = resolve_geometry(geometry_path, &dataset);
    const RunConfig cfg = assemble_config(flags);
    const auto epochs = run_filter(dataset, geometry, cfg);
    save_trajectory(to_trajectory_records(epochs), out_path);
    std::printf("wrote %s: %zu epochs (order %d, mag %s, aiding %.1f s)\n", out_path.c_str(),
                epochs.size(), cfg.order, cfg.use_mag ? "on" : "off", cfg.aiding_seconds);
    return 0;
}

int cmd_eval(const std::string& trajectory_path, const std::string& dataset_dir,
             double aiding_seconds, bool speed_vector, const std::string& out_path) {
    const auto trajectory = load_trajectory(trajectory_path);
    const Dataset dataset = load_dataset(dataset_dir);
    if (dataset.truth.empty()) {
        throw SchemaError(msg("dataset ", dataset_dir, " has no ground truth"));
    }
    const MetricsReport report = compute_metrics(trajectory, dataset.truth, aiding_seconds);
    std::vector<std::pair<std::string, MetricsReport>> rows = {{dataset.name, report}};
    std::fputs(format_metrics_table(rows, speed_vector).c_str(), stdout);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << metrics_json(report) << "\n";
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_table(const std::string& spec_path, bool with_ins, const std::string& out_path) {
    std::ifstream in(spec_path);
    if (!in) {
        throw ConfigError(msg("cannot open batch spec: ", spec_path));
    }
    nlohmann::json spec;
    in >> spec;

    struct Job {
        std::string label;
        Dataset dataset;
        ArrayGeometry geometry;
        RunConfig cfg;
    };
    std::vector<Job> jobs;
    for (const auto& entry : spec.at("runs")) {
        Job job;
        job.label = entry.at("label").get<std::string>();
        job.dataset = load_dataset(entry.at("dataset").get<std::string>());
        RunFlags flags;
        flags.config_path = entry.value("config", std::string());
        job.cfg = assemble_config(flags);
        if (spec.contains("aiding_seconds")) {
            job.cfg.aiding_seconds = spec.at("aiding_seconds").get<double>();
        }
        job.geometry = resolve_geometry(entry.value("geometry", std::string()), &job.dataset);
        jobs.push_back(std::move(job));
        if (with_ins) {
            Job ins = jobs.back();
            ins.label += "-INS";
            ins.cfg.use_mag = false;
            jobs.push_back(std::move(ins));
        }
    }

    // Pipelines are independent; fan out across the batch.
    std::vector<std::future<MetricsReport>> futures;
    futures.reserve(jobs.size());
    for (const auto& job : jobs) {
        futures.push_back(std::async(std::launch::async, [&job] {
            const auto epochs = run_filter(job.dataset, job.geometry, job.cfg);
            return compute_metrics(to_trajectory_records(epochs), job.dataset.truth,
                                   job.cfg.aiding_seconds);
        }));
    }
    std::vector<std::pair<std::string, MetricsReport>> columns;
    for (size_t i = 0; i < jobs.size(); ++i) {
        columns.emplace_back(jobs[i].label, futures[i].get());
    }
    std::fputs(format_metrics_table(columns, true).c_str(), stdout);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << metrics_csv(columns);
        std::printf("wrote %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_plotdata(const std::string& trajectory_path, const std::string& dataset_dir,
                 const std::string& out_path) {
    const auto trajectory = load_trajectory(trajectory_path);
    const Dataset dataset = load_dataset(dataset_dir);

    FILE* f = std::fopen(out_path.c_str(), "w");
    if (!f) {
        throw SchemaError(msg("cannot write ", out_path));
    }
    std::fprintf(f, "# t est_px est_py est_pz truth_px truth_py truth_pz horiz_err vert_err "
                    "sigma3_px sigma3_py sigma3_pz field_mag_mean\n");
    size_t truth_ix = 0;
    size_t mag_ix = 0;
    for (const auto& rec : trajectory) {
        while (truth_ix + 1 < dataset.truth.size() && dataset.truth[truth_ix + 1].t <= rec.t) {
            ++truth_ix;
        }
        while (mag_ix + 1 < dataset.mag.size() && dataset.mag[mag_ix + 1].t <= rec.t) {
            ++mag_ix;
        }
        double horiz = std::nan("");
        double vert = std::nan("");
        Vec3 truth_p = Vec3::Constant(std::nan(""));
        if (!dataset.truth.empty() &&
            std::abs(dataset.truth[truth_ix].t - rec.t) < 0.02) {
            truth_p = dataset.truth[truth_ix].p;
            const Vec3 err = rec.p - truth_p;
            horiz = std::hypot(err.x(), err.y());
            vert = std::abs(err.z());
        }
        double mag_mean = std::nan("");
        if (!dataset.mag.empty() && std::abs(dataset.mag[mag_ix].t - rec.t) < 0.02) {
            const auto& values = dataset.mag[mag_ix].values;
            double sum = 0.0;
            const int n = static_cast<int>(values.size()) / 3;
            for (int i = 0; i < n; ++i) {
                sum += values.segment<3>(3 * i).norm();
            }
            mag_mean = sum / n;
        }
        const double s3x = rec.cov_diag.size() > 2 ? 3.0 * std::sqrt(rec.cov_diag(0)) : 0.0;
        const double s3y = rec.cov_diag.size() > 2 ? 3.0 * std::sqrt(rec.cov_diag(1)) : 0.0;
        const double s3z = rec.cov_diag.size() > 2 ? 3.0 * std::sqrt(rec.cov_diag(2)) : 0.0;
        std::fprintf(f, "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                     rec.t, rec.p.x(), rec.p.y(), rec.p.z(), truth_p.x(), truth_p.y(),
                     truth_p.z(), horiz, vert, s3x, s3y, s3z, mag_mean);
    }
    std::fclose(f);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Magnetic-field aided inertial navigation: simulate, filter, evaluate"};
    app.require_subcommand(1);

    // simulate
    auto* simulate = app.add_subcommand("simulate", "synthesize a dataset from a scenario");
    std::string scenario_path, geometry_path, out_path, dataset_dir, trajectory_path;
    uint64_t seed = 0;
    bool no_noise = false;
    simulate->add_option("--scenario", scenario_path, "scenario JSON (default built-in square)");
    simulate->add_option("--geometry", geometry_path, "geometry file (default 6x5 grid)");
    simulate->add_option("--seed", seed, "RNG seed")->default_val(0);
    simulate->add_option("--out", out_path, "output dataset directory")->required();
    simulate->add_flag("--no-noise", no_noise, "disable sensor noise and bias draws");

    // run
    auto* run = app.add_subcommand("run", "run the filter over a dataset");
    RunFlags flags;
    run->add_option("--dataset", dataset_dir, "dataset directory")->required();
    run->add_option("--config", flags.config_path, "run configuration JSON");
    run->add_option("--geometry", geometry_path, "geometry override");
    run->add_option("--order", flags.order, "polynomial model order override");
    run->add_flag("--no-mag", flags.no_mag, "disable magnetometer updates (INS baseline)");
    run->add_option("--aiding-seconds", flags.aiding_seconds, "position-aiding window length");
    run->add_option("--out", out_path, "output trajectory file")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a trajectory against ground truth");
    double aiding_seconds = 60.0;
    bool speed_vector = false;
    eval->add_option("--trajectory", trajectory_path, "trajectory file")->required();
    eval->add_option("--dataset", dataset_dir, "dataset directory with ground truth")->required();
    eval->add_option("--aiding-seconds", aiding_seconds, "excluded aiding window")
        ->default_val(60.0);
    eval->add_flag("--speed-vector", speed_vector, "also report the velocity-error norm");
    eval->add_option("--out", out_path, "write the report as JSON");

    // table
    auto* table = app.add_subcommand("table", "batch-evaluate datasets into a metrics grid");
    std::string spec_path;
    bool with_ins = false;
    table->add_option("--spec", spec_path, "batch spec JSON")->required();
    table->add_flag("--with-ins", with_ins, "add a no-mag INS baseline column per run");
    table->add_option("--out", out_path, "write the grid as CSV");

    // plotdata
    auto* plotdata = app.add_subcommand("plotdata", "plot-ready columns for a trajectory");
    plotdata->add_option("--trajectory", trajectory_path, "trajectory file")->required();
    plotdata->add_option("--dataset", dataset_dir, "dataset directory")->required();
    plotdata->add_option("--out", out_path, "output column file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            return cmd_simulate(scenario_path, geometry_path, seed, out_path, no_noise);
        }
        if (run->parsed()) {
            return cmd_run(dataset_dir, flags, geometry_path, out_path);
        }
        if (eval->parsed()) {
            return cmd_eval(trajectory_path, dataset_dir, aiding_seconds, speed_vector,
                            out_path);
        }
        if (table->parsed()) {
            return cmd_table(spec_path, with_ins, out_path);
        }
        if (plotdata->parsed()) {
            return cmd_plotdata(trajectory_path, dataset_dir, out_path);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
