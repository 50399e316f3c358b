// Acceptance suite: one pass/fail line per criterion, exit code = number of
// hard failures. Criterion 8 needs external recordings and reports SKIP when
// the MAINS_REAL_DATA_DIR environment variable is not set.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "mains/dataio.hpp"
#include "mains/errors.hpp"
#include "mains/eskf.hpp"
#include "mains/eval.hpp"
#include "mains/sim.hpp"
#include "support/oracles.hpp"

using namespace mains;

namespace {

struct Outcome {
    bool pass = false;
    bool skipped = false;
    std::string details;
};

const Vec3 kGravity(0.0, 0.0, -9.81);

// ---------------------------------------------------------------------------
// 1. Field-model lawfulness: divergence and curl of Phi(r) theta vanish.
Outcome criterion_field_lawfulness() {
    auto gen = oracle::rng(1001);
    double worst_div = 0.0;
    double worst_curl = 0.0;
    for (int l = 1; l <= 3; ++l) {
        const FieldModel model = build_model(l);
        for (int trial = 0; trial < 1000; ++trial) {
            const Theta theta = oracle::random_vec(gen, model.reduced_dim, 10.0);
            const Vec3 r = oracle::random_vec3(gen);
            auto field = [&](const Vec3& rr) { return eval_field(model, theta, rr); };
            worst_div = std::max(worst_div,
                                 std::abs(oracle::numeric_divergence(field, r)) / theta.norm());
            worst_curl = std::max(worst_curl,
                                  oracle::numeric_curl(field, r).norm() / theta.norm());
        }
    }
    Outcome out;
    out.pass = worst_div <= 1e-9 && worst_curl <= 1e-6;
    out.details = msg("max |div|/|theta| = ", worst_div, ", max |curl|/|theta| = ", worst_curl,
                      " over 1000 pairs x l in {1,2,3}");
    return out;
}

// ---------------------------------------------------------------------------
// 2. Dimensional identities of the constructed basis.
Outcome criterion_dimensions() {
    Outcome out;
    out.pass = true;
    for (int l = 1; l <= 4; ++l) {
        const FieldModel model = build_model(l);
        const int expected_l = (l + 4) * (l + 3) * (l + 2) / 6 - 1;
        const int expected_kappa = l * l + 4 * l + 3;
        if (model.raw_dim != expected_l || model.reduced_dim != expected_kappa ||
            model.null_basis.cols() != expected_kappa) {
            out.pass = false;
            out.details = msg("l = ", l, ": got L = ", model.raw_dim, ", kappa = ",
                              model.reduced_dim, ", expected L = ", expected_l, ", kappa = ",
                              expected_kappa);
            return out;
        }
    }
    out.details = "L and kappa match for l = 1..4";
    return out;
}

// ---------------------------------------------------------------------------
// 3. Transport correctness: identity, round trip, direct re-evaluation.
Outcome criterion_transport() {
    auto gen = oracle::rng(1003);
    const FieldModel model = build_model(1);
    const AnchorSet anchors = make_anchors(model, make_rect_grid(6, 5, 0.05));

    double worst_identity = 0.0;
    double worst_round = 0.0;
    double worst_eval = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const Theta theta = oracle::random_vec(gen, model.reduced_dim, 15.0);
        worst_identity = std::max(worst_identity,
                                  (transport_theta(model, anchors, PoseDelta{}, theta) - theta)
                                      .cwiseAbs()
                                      .maxCoeff());

        PoseDelta psi;
        psi.dp = oracle::random_vec3(gen, 0.05);
        psi.dphi = oracle::random_vec3(gen, 0.25);
        const Theta moved = transport_theta(model, anchors, psi, theta);

        PoseDelta inv;
        inv.dphi = -psi.dphi;
        inv.dp = -(rot_exp(psi.dphi).transpose() * psi.dp);
        const Theta back = transport_theta(model, anchors, inv, moved);
        worst_round = std::max(worst_round, (back - theta).norm() / theta.norm());

        const Mat3 e = rot_exp(psi.dphi);
        for (int pt = 0; pt < 10; ++pt) {
            const Vec3 r = oracle::random_vec3(gen, 0.2);
            const Vec3 lhs = eval_field(model, moved, r);
            const Vec3 rhs = e.transpose() * eval_field(model, theta, e * r + psi.dp);
            worst_eval = std::max(worst_eval, (lhs - rhs).norm() / (1.0 + theta.norm()));
        }
    }
    Outcome out;
    out.pass = worst_identity <= 1e-10 && worst_round <= 1e-8 && worst_eval <= 1e-8;
    out.details = msg("identity ", worst_identity, ", round trip ", worst_round,
                      ", re-evaluation ", worst_eval);
    return out;
}

// ---------------------------------------------------------------------------
// 4. Jacobians vs central finite differences.
FullState acceptance_random_state(std::mt19937_64& gen, const FieldModel& model) {
    FullState s;
    s.ins.p = oracle::random_vec3(gen, 5.0);
    s.ins.v = oracle::random_vec3(gen, 1.0);
    s.ins.q = quat_exp(oracle::random_vec3(gen, 1.0));
    s.ins.bias_acc = oracle::random_vec3(gen, 0.05);
    s.ins.bias_gyro = oracle::random_vec3(gen, 0.01);
    s.theta = Theta::Zero(model.reduced_dim);
    s.theta.head<3>() = oracle::random_vec3(gen, 40.0);
    s.theta.tail(model.reduced_dim - 3) = oracle::random_vec(gen, model.reduced_dim - 3, 5.0);
    return s;
}

Outcome criterion_jacobians() {
    auto gen = oracle::rng(1004);
    Eskf filter(build_model(1), make_rect_grid(6, 5, 0.05), EskfOptions{});
    const FieldModel& model = filter.model();
    const AnchorSet& anchors = filter.anchors();
    const int dim = filter.dim();
    const int kappa = model.reduced_dim;
    const double ts = 5e-4;
    const double h = 1e-6;

    auto boxplus = [&](const FullState& s, const Eigen::VectorXd& d) {
        FullState o = s;
        o.ins.p += d.segment<3>(0);
        o.ins.v += d.segment<3>(3);
        o.ins.q = quat_mul(s.ins.q, error_quat(d.segment<3>(6)));
        o.ins.bias_acc += d.segment<3>(9);
        o.ins.bias_gyro += d.segment<3>(12);
        o.theta += d.tail(kappa);
        return o;
    };
    auto boxminus = [&](const FullState& a, const FullState& ref) {
        Eigen::VectorXd d(dim);
        d.segment<3>(0) = a.ins.p - ref.ins.p;
        d.segment<3>(3) = a.ins.v - ref.ins.v;
        d.segment<3>(6) = quat_log(ref.ins.q.conjugate() * a.ins.q);
        d.segment<3>(9) = a.ins.bias_acc - ref.ins.bias_acc;
        d.segment<3>(12) = a.ins.bias_gyro - ref.ins.bias_gyro;
        d.tail(kappa) = a.theta - ref.theta;
        return d;
    };
    auto propagate_full = [&](const FullState& s, const ImuSample& u) {
        FullState next;
        const PoseDelta psi = pose_delta(s.ins, u, ts, kGravity);
        next.theta = transport_theta(model, anchors, psi, s.theta);
        next.ins = propagate(s.ins, u, ts, kGravity);
        return next;
    };

    double worst_f = 0.0;
    double worst_g = 0.0;
    double worst_j = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const FullState s = acceptance_random_state(gen, model);
        ImuSample u;
        u.specific_force = quat_to_rot(s.ins.q).transpose() *
                               (oracle::random_vec3(gen, 1.0) - kGravity) +
                           s.ins.bias_acc;
        u.angular_rate = oracle::random_vec3(gen, 0.5) + s.ins.bias_gyro;
        filter.state() = s;
        const Eskf::Transition tr = filter.transition(u, ts);

        // F vs finite differences of the nominal propagation through boxplus.
        const FullState nominal = propagate_full(s, u);
        Eigen::MatrixXd f_fd(dim, dim);
        for (int c = 0; c < dim; ++c) {
            Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
            d(c) = h;
            const FullState plus = propagate_full(boxplus(s, d), u);
            d(c) = -h;
            const FullState minus = propagate_full(boxplus(s, d), u);
            f_fd.col(c) = (boxminus(plus, nominal) - boxminus(minus, nominal)) / (2.0 * h);
        }
        worst_f = std::max(worst_f, (tr.f - f_fd).norm() / f_fd.norm());

        // G(theta rows) vs finite differences over the noise vector.
        auto theta_map = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
            ImuSample noisy = u;
            noisy.specific_force = u.specific_force - w.segment<3>(0);
            noisy.angular_rate = u.angular_rate - w.segment<3>(3);
            const PoseDelta psi = pose_delta(s.ins, noisy, ts, kGravity);
            return transport_theta(model, anchors, psi, s.theta) + w.tail(kappa);
        };
        const Eigen::MatrixXd g_fd =
            oracle::numeric_jacobian(theta_map, Eigen::VectorXd::Zero(12 + kappa));
        worst_g = std::max(worst_g,
                           (tr.g.bottomRows(kappa) - g_fd).norm() / (1.0 + g_fd.norm()));

        // J1 / J2 vs finite differences of B(psi) theta.
        PoseDelta psi;
        psi.dp = oracle::random_vec3(gen, 0.02);
        psi.dphi = oracle::random_vec3(gen, 0.05);
        const TransportJacobians jac = transport_jacobians(model, anchors, psi, s.theta);
        auto b_dp = [&](const Eigen::VectorXd& dp) -> Eigen::VectorXd {
            PoseDelta p = psi;
            p.dp = dp;
            return transport_matrix(model, anchors, p) * s.theta;
        };
        auto b_dphi = [&](const Eigen::VectorXd& dphi) -> Eigen::VectorXd {
            PoseDelta p = psi;
            p.dphi = dphi;
            return transport_matrix(model, anchors, p) * s.theta;
        };
        const Eigen::MatrixXd j1_fd = oracle::numeric_jacobian(b_dp, psi.dp);
        const Eigen::MatrixXd j2_fd = oracle::numeric_jacobian(b_dphi, psi.dphi);
        worst_j = std::max(worst_j, (jac.dp - j1_fd).norm() / (1.0 + j1_fd.norm()));
        worst_j = std::max(worst_j, (jac.dphi - j2_fd).norm() / (1.0 + j2_fd.norm()));
    }
    Outcome out;
    out.pass = worst_f <= 1e-5 && worst_g <= 1e-5 && worst_j <= 1e-5;
    out.details = msg("relative errors over 100 states: F ", worst_f, ", G_theta ", worst_g,
                      ", J1/J2 ", worst_j);
    return out;
}

// ---------------------------------------------------------------------------
// 5. Adaptive covariance Monte Carlo.
Outcome criterion_adaptive_covariance() {
    auto gen = oracle::rng(1005);
    const FieldModel model = build_model(1);
    const ArrayGeometry geometry = make_rect_grid(6, 5, 0.05);
    const int n3 = 3 * geometry.size();

    Eigen::MatrixXd x(n3, model.reduced_dim);
    for (int i = 0; i < geometry.size(); ++i) {
        x.middleRows(3 * i, 3) = phi(model, geometry.positions[i]);
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);

    Theta truth = Theta::Zero(model.reduced_dim);
    truth.head<3>() = Vec3(12.0, -20.0, 41.0);
    truth.tail(model.reduced_dim - 3) =
        oracle::random_vec(gen, model.reduced_dim - 3, 5.0);
    const Eigen::VectorXd clean = x * truth;

    const double sigma = 0.1;
    std::normal_distribution<double> noise(0.0, sigma);
    const int trials = 10000;
    double sum_scaled = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        Eigen::VectorXd y = clean;
        for (int i = 0; i < n3; ++i) y(i) += noise(gen);
        const double sigma2 = (y - x * qr.solve(y)).squaredNorm() / n3;
        sum_scaled += n3 * sigma2 / (sigma * sigma);
    }
    const double dof = static_cast<double>(trials) * (n3 - model.reduced_dim);
    const double lo = oracle::chi2_quantile(dof, -oracle::kZ995);
    const double hi = oracle::chi2_quantile(dof, oracle::kZ995);
    Outcome out;
    out.pass = sum_scaled > lo && sum_scaled < hi;
    out.details = msg("scaled residual sum ", sum_scaled, " in 99% band [", lo, ", ", hi,
                      "] over ", trials, " snapshots (N = 30, l = 1, sigma = 0.1 uT)");
    return out;
}

// ---------------------------------------------------------------------------
// 6. End-to-end drift reduction on the synthetic square-lap scenario.
Outcome criterion_drift_reduction() {
    const Scenario scenario = default_square_scenario();
    const ArrayGeometry geometry = make_rect_grid(6, 5, 0.05);

    RunConfig mains_cfg;
    mains_cfg.aiding_seconds = 60.0;
    RunConfig ins_cfg = mains_cfg;
    ins_cfg.use_mag = false;

    double worst_ratio = 1e300;
    std::string ratios;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds = synthesize(scenario.world, scenario.script, geometry,
                                      scenario.noise, seed, scenario.rate, scenario.gravity);
        const auto mains_run = run_filter(ds, geometry, mains_cfg);
        const auto ins_run = run_filter(ds, geometry, ins_cfg);

        const Vec3 truth_end = ds.truth.back().p;
        const auto horiz = [&](const FilterEpoch& e) {
            return std::hypot(e.state.ins.p.x() - truth_end.x(),
                              e.state.ins.p.y() - truth_end.y());
        };
        const double mains_err = horiz(mains_run.back());
        const double ins_err = horiz(ins_run.back());
        const double ratio = ins_err / mains_err;
        worst_ratio = std::min(worst_ratio, ratio);
        ratios += msg(" seed", seed, ": INS ", ins_err, " m / aided ", mains_err, " m = ",
                      ratio, "x;");
    }
    Outcome out;
    out.pass = worst_ratio >= 10.0;
    out.details = msg("final horizontal error ratios (gate 10x):", ratios);
    return out;
}

// ---------------------------------------------------------------------------
// 7. Filter consistency on exact-model data.
Outcome criterion_consistency() {
    const ArrayGeometry geometry = make_rect_grid(6, 5, 0.05);
    DipoleWorld uniform_world;
    uniform_world.dipoles.clear();

    TrajectoryScript hold;
    hold.kind = TrajectoryScript::Kind::Waypoints;
    hold.wp_t = {0.0, 60.0};
    hold.wp_p = {Vec3(0, 0, 1), Vec3(0, 0, 1)};

    RunConfig cfg;
    cfg.aiding_seconds = 0.0;

    long inside = 0;
    long total = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const Dataset ds = synthesize(uniform_world, hold, geometry, SimNoise{}, seed, 100.0);
        const auto epochs = run_filter(ds, geometry, cfg);
        for (size_t k = 0; k < epochs.size(); ++k) {
            const Vec3 err = epochs[k].state.ins.p - ds.truth[k].p;
            bool ok = true;
            for (int axis = 0; axis < 3; ++axis) {
                ok = ok && std::abs(err(axis)) <= 3.0 * std::sqrt(epochs[k].cov_diag(axis));
            }
            inside += ok ? 1 : 0;
            ++total;
        }
    }
    const double fraction = static_cast<double>(inside) / static_cast<double>(total);
    Outcome out;
    out.pass = fraction >= 0.95;
    out.details = msg(100.0 * fraction, "% of ", total,
                      " epochs inside the 3-sigma envelope across 20 seeds");
    return out;
}

// ---------------------------------------------------------------------------
// 8. Table replication against external recordings (soft, needs data).
Outcome criterion_table_replication() {
    Outcome out;
    const char* dir = std::getenv("MAINS_REAL_DATA_DIR");
    if (dir == nullptr || std::string(dir).empty()) {
        out.skipped = true;
        out.details = "MAINS_REAL_DATA_DIR not set; external recordings unavailable in this "
                      "environment. Convert the published datasets (see README) and re-run.";
        return out;
    }
    // Published rectangular-configuration RMS horizontal errors (m).
    const std::vector<std::pair<std::string, double>> published = {
        {"LP-1", 0.77}, {"LP-2", 0.84}, {"LP-3", 1.15}, {"NP-1", 2.65},
        {"NP-2", 1.24}, {"NP-3", 2.32}, {"NT-1", 0.83}, {"NT-2", 1.73},
    };
    RunConfig cfg;
    cfg.aiding_seconds = 60.0;
    out.pass = true;
    std::vector<std::pair<std::string, MetricsReport>> grid;
    for (const auto& [name, reference] : published) {
        const std::string path = std::string(dir) + "/" + name;
        if (!std::filesystem::exists(path)) continue;
        const Dataset ds = load_dataset(path);
        const auto epochs = run_filter(ds, ds.geometry, cfg);
        const MetricsReport report =
            compute_metrics(to_trajectory_records(epochs), ds.truth, cfg.aiding_seconds);
        grid.emplace_back(name, report);
        const bool within = report.rms_horizontal <= 2.0 * reference;
        out.pass = out.pass && within;
        out.details += msg(" ", name, ": ", report.rms_horizontal, " m (published ", reference,
                           " m, gate 2x);");
    }
    if (grid.empty()) {
        out.skipped = true;
        out.pass = false;
        out.details = msg("no datasets found under ", dir);
    } else {
        std::fputs(format_metrics_table(grid, true).c_str(), stdout);
    }
    return out;
}

// ---------------------------------------------------------------------------
// 9. Degenerate inputs fail loudly with typed errors, never silent NaN.
Outcome criterion_degenerate_inputs() {
    Outcome out;
    out.pass = true;
    const FieldModel model = build_model(1);

    // Collinear anchors.
    ArrayGeometry collinear;
    for (int i = 0; i < 3; ++i) {
        collinear.ids.push_back(i);
        collinear.positions.emplace_back(0.05 * i, 0.0, 0.0);
    }
    try {
        make_anchors(model, collinear);
        out.pass = false;
        out.details += " collinear anchors not rejected;";
    } catch (const DegenerateGeometryError&) {
        out.details += " collinear anchors rejected;";
    }

    // Rank-deficient fit.
    std::vector<Vec3> line;
    for (int i = 0; i < 5; ++i) line.emplace_back(0.05 * i, 0.0, 0.0);
    try {
        fit_theta(model, line, Eigen::VectorXd::Zero(15));
        out.pass = false;
        out.details += " rank-deficient fit not rejected;";
    } catch (const DegenerateGeometryError&) {
        out.details += " rank-deficient fit rejected;";
    }

    // NaN magnetometer row: rejected sample, filter continues, output finite.
    const ArrayGeometry geometry = make_rect_grid(6, 5, 0.05);
    DipoleWorld world;
    world.dipoles.clear();
    TrajectoryScript hold;
    hold.kind = TrajectoryScript::Kind::Waypoints;
    hold.wp_t = {0.0, 2.0};
    hold.wp_p = {Vec3(0, 0, 1), Vec3(0, 0, 1)};
    Dataset ds = synthesize(world, hold, geometry, SimNoise{}, 2, 100.0);
    for (size_t k = 50; k < 60; ++k) {
        ds.mag[k].values.setConstant(std::nan(""));
    }
    RunConfig cfg;
    cfg.aiding_seconds = 0.0;
    const auto epochs = run_filter(ds, geometry, cfg);
    bool finite = true;
    for (const auto& e : epochs) {
        finite = finite && e.state.ins.p.allFinite() && e.cov_diag.allFinite() &&
                 e.state.theta.allFinite();
    }
    if (finite) {
        out.details += " NaN magnetometer rows skipped without contaminating the filter;";
    } else {
        out.pass = false;
        out.details += " NaN propagated into the state;";
    }
    return out;
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const std::vector<Entry> criteria = {
        {1, "field-model lawfulness (divergence/curl)", criterion_field_lawfulness},
        {2, "dimensional identities", criterion_dimensions},
        {3, "coefficient transport correctness", criterion_transport},
        {4, "Jacobian suite vs finite differences", criterion_jacobians},
        {5, "adaptive measurement covariance Monte Carlo", criterion_adaptive_covariance},
        {6, "end-to-end drift reduction vs stand-alone INS", criterion_drift_reduction},
        {7, "filter consistency (3-sigma envelope)", criterion_consistency},
        {8, "metrics-table replication on external recordings", criterion_table_replication},
        {9, "degenerate-input behavior", criterion_degenerate_inputs},
    };

    int failures = 0;
    for (const auto& entry : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = entry.fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.details = msg("unexpected exception: ", e.what());
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = outcome.skipped ? "SKIP" : (outcome.pass ? "PASS" : "FAIL");
        if (!outcome.pass && !outcome.skipped) ++failures;
        std::printf("[%s] criterion %d: %s (%.1f s) — %s\n", tag, entry.id, entry.name,
                    seconds, outcome.details.c_str());
        std::fflush(stdout);
    }
    if (failures == 0) {
        std::printf("acceptance: all hard criteria passed\n");
    } else {
        std::printf("acceptance: %d criterion(s) failed\n", failures);
    }
    return failures;
}
