#include "mains/eskf.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "mains/errors.hpp"

namespace mains {

namespace {

// chi-square(3) quantile at the two-sided 3-sigma level (p = 0.9973).
constexpr double kGateChi2Dim3 = 14.16;

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

}  // namespace

NoiseConfig NoiseConfig::from_densities(double accel_density, double gyro_density,
                                        double accel_bias_walk, double gyro_bias_walk,
                                        double sigma_theta_step, double rate) {
    NoiseConfig noise;
    noise.acc_cov = Mat3::Identity() * accel_density * accel_density * rate;
    noise.gyro_cov = Mat3::Identity() * gyro_density * gyro_density * rate;
    noise.acc_bias_cov = Mat3::Identity() * accel_bias_walk * accel_bias_walk;
    noise.gyro_bias_cov = Mat3::Identity() * gyro_bias_walk * gyro_bias_walk;
    noise.theta_step_var = sigma_theta_step * sigma_theta_step;
    return noise;
}

KalmanCorrection kalman_correct(const Eigen::MatrixXd& p, const Eigen::MatrixXd& h,
                                const Eigen::MatrixXd& r, const Eigen::VectorXd& z,
                                bool joseph) {
    const Eigen::MatrixXd pht = p * h.transpose();
    Eigen::MatrixXd s = h * pht + r;
    s = 0.5 * (s + s.transpose());
    if (!s.allFinite()) {
        throw SingularInnovationError("innovation covariance is not finite");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) {
        throw SingularInnovationError(msg("innovation covariance (", s.rows(), "x", s.cols(),
                                          ") is not positive definite"));
    }
    const Eigen::MatrixXd k = llt.solve(pht.transpose()).transpose();

    KalmanCorrection out;
    out.dx = k * z;
    if (joseph) {
        const Eigen::MatrixXd ikh =
            Eigen::MatrixXd::Identity(p.rows(), p.cols()) - k * h;
        out.p = ikh * p * ikh.transpose() + k * r * k.transpose();
    } else {
        out.p = p - k * pht.transpose();
    }
    out.p = 0.5 * (out.p + out.p.transpose()).eval();
    return out;
}

Eskf::Eskf(FieldModel model, ArrayGeometry geometry, EskfOptions options,
           AnchorOptions anchor_options)
    : model_(std::move(model)), geometry_(std::move(geometry)), options_(options) {
    anchors_ = make_anchors(model_, geometry_, anchor_options);

    const int n = n_mag();
    stacked_phi_.resize(3 * n, model_.reduced_dim);
    for (int i = 0; i < n; ++i) {
        stacked_phi_.middleRows(3 * i, 3) = phi(model_, geometry_.positions[i]);
    }
    fit_qr_.compute(stacked_phi_);
    fit_qr_.setThreshold(1e-10);
    if (fit_qr_.rank() < model_.reduced_dim) {
        throw DegenerateGeometryError(msg("magnetometer geometry is rank deficient for order ",
                                          model_.order, ": rank ", fit_qr_.rank(), " < ",
                                          model_.reduced_dim));
    }

    h_ = Eigen::MatrixXd::Zero(3 * n, dim());
    h_.rightCols(model_.reduced_dim) = stacked_phi_;

    state_.theta = Theta::Zero(model_.reduced_dim);
    cov_ = Eigen::MatrixXd::Identity(dim(), dim());
}

void Eskf::init(const NavState& x0, const Theta& theta0, const Eigen::VectorXd& init_var) {
    if (theta0.size() != model_.reduced_dim) {
        throw ConfigError(msg("theta0 length ", theta0.size(), " != kappa ",
                              model_.reduced_dim));
    }
    if (init_var.size() != dim()) {
        throw ConfigError(msg("init_var length ", init_var.size(), " != dim ", dim()));
    }
    state_.ins = x0;
    state_.theta = theta0;
    cov_ = init_var.asDiagonal();
}

Eigen::MatrixXd Eskf::process_noise() const {
    const int kappa = model_.reduced_dim;
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(12 + kappa, 12 + kappa);
    q.block<3, 3>(0, 0) = options_.noise.acc_cov;
    q.block<3, 3>(3, 3) = options_.noise.gyro_cov;
    q.block<3, 3>(6, 6) = options_.noise.acc_bias_cov;
    q.block<3, 3>(9, 9) = options_.noise.gyro_bias_cov;
    q.block(12, 12, kappa, kappa) =
        options_.noise.theta_step_var * Eigen::MatrixXd::Identity(kappa, kappa);
    return q;
}

Eskf::Transition Eskf::transition(const ImuSample& u, double ts) const {
    const int kappa = model_.reduced_dim;
    const Mat3 r = quat_to_rot(state_.ins.q);
    const Vec3 s_hat = u.specific_force - state_.ins.bias_acc;
    const PoseDelta psi = pose_delta(state_.ins, u, ts, options_.gravity);

    Transition tr;
    tr.f = Eigen::MatrixXd::Zero(dim(), dim());
    tr.g = Eigen::MatrixXd::Zero(dim(), 12 + kappa);

    // INS blocks.
    const Mat3 i3 = Mat3::Identity();
    tr.f.block<3, 3>(0, 0) = i3;
    tr.f.block<3, 3>(0, 3) = i3 * ts;
    tr.f.block<3, 3>(3, 3) = i3;
    tr.f.block<3, 3>(3, 6) = -r * skew(s_hat) * ts;
    tr.f.block<3, 3>(3, 9) = -r * ts;
    tr.f.block<3, 3>(6, 6) = rot_exp(psi.dphi).transpose();
    tr.f.block<3, 3>(6, 12) = -i3 * ts;
    tr.f.block<3, 3>(9, 9) = i3;
    tr.f.block<3, 3>(12, 12) = i3;

    tr.g.block<3, 3>(3, 0) = r * ts;
    tr.g.block<3, 3>(6, 3) = i3 * ts;
    tr.g.block<3, 3>(9, 6) = i3 * std::sqrt(ts);
    tr.g.block<3, 3>(12, 9) = i3 * std::sqrt(ts);

    // Field coefficient blocks. The pose-delta errors enter through
    // d dp = [eta]x eps + R^T dv Ts and d dphi = -(d bias_gyro + w_gyro) Ts.
    tr.b = transport_matrix(model_, anchors_, psi);
    const TransportJacobians jac = transport_jacobians(model_, anchors_, psi, state_.theta);
    const Eigen::MatrixXd aj1 = anchors_.pinv * jac.dp;
    const Eigen::MatrixXd aj2 = anchors_.pinv * jac.dphi;
    const Vec3 eta = r.transpose() * ts * (state_.ins.v + 0.5 * ts * options_.gravity);

    tr.f.block(15, 3, kappa, 3) = aj1 * r.transpose() * ts;
    tr.f.block(15, 6, kappa, 3) = aj1 * skew(eta);
    tr.f.block(15, 12, kappa, 3) = -aj2 * ts;
    tr.f.block(15, 15, kappa, kappa) = anchors_.pinv * tr.b;

    tr.g.block(15, 3, kappa, 3) = -aj2 * ts;
    tr.g.block(15, 12, kappa, kappa) = Eigen::MatrixXd::Identity(kappa, kappa);
    return tr;
}

void Eskf::predict(const ImuSample& u, double ts) {
    const Transition tr = transition(u, ts);

    // Nominal propagation (noise-free state transition).
    state_.theta = anchors_.pinv * (tr.b * state_.theta);
    state_.ins = propagate(state_.ins, u, ts, options_.gravity);

    const Eigen::MatrixXd q = process_noise();
    cov_ = tr.f * cov_ * tr.f.transpose() + tr.g * q * tr.g.transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose()).eval();

    if (!cov_.allFinite() || !state_.theta.allFinite() || !state_.ins.p.allFinite() ||
        !state_.ins.v.allFinite()) {
        throw DivergenceError(msg("non-finite state or covariance after predict (t = ", u.t,
                                  ", trace(P) = ", cov_.trace(), ")"));
    }
}

double Eskf::adapt_r_variance(const Eigen::VectorXd& y) const {
    const Theta theta_ls = fit_qr_.solve(y);
    const double sigma2 = (y - stacked_phi_ * theta_ls).squaredNorm() / y.size();
    const double floor2 = options_.noise.sigma_mag_floor * options_.noise.sigma_mag_floor;
    return std::max(sigma2, floor2);
}

Eigen::VectorXd Eskf::innovation(const Eigen::VectorXd& y) const {
    return y - stacked_phi_ * state_.theta;
}

bool Eskf::update(const Eigen::VectorXd& y) {
    const int n = n_mag();
    if (y.size() != 3 * n) {
        throw SchemaError(msg("measurement length ", y.size(), " != 3N = ", 3 * n));
    }
    if (!all_finite(y)) {
        return false;  // rejected sample; caller continues with prediction only
    }

    const double r_var = options_.noise.adaptive_r
                             ? adapt_r_variance(y)
                             : options_.noise.sigma_mag * options_.noise.sigma_mag;
    const Eigen::VectorXd z = innovation(y);

    std::vector<int> kept(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) kept[static_cast<size_t>(i)] = i;
    if (options_.gate_innovations) {
        const Eigen::MatrixXd p_theta = cov_.bottomRightCorner(model_.reduced_dim,
                                                               model_.reduced_dim);
        kept.clear();
        for (int i = 0; i < n; ++i) {
            const Eigen::MatrixXd phi_i = stacked_phi_.middleRows(3 * i, 3);
            Mat3 s_i = phi_i * p_theta * phi_i.transpose() + r_var * Mat3::Identity();
            const Vec3 z_i = z.segment<3>(3 * i);
            const double nis = z_i.dot(s_i.ldlt().solve(z_i));
            if (nis <= kGateChi2Dim3) kept.push_back(i);
        }
        if (kept.empty()) {
            return false;
        }
    }

    KalmanCorrection corr;
    if (static_cast<int>(kept.size()) == n) {
        const Eigen::MatrixXd r_mat =
            r_var * Eigen::MatrixXd::Identity(3 * n, 3 * n);
        corr = kalman_correct(cov_, h_, r_mat, z, options_.joseph_form);
    } else {
        const int m = static_cast<int>(kept.size());
        Eigen::MatrixXd h_sub = Eigen::MatrixXd::Zero(3 * m, dim());
        Eigen::VectorXd z_sub(3 * m);
        for (int i = 0; i < m; ++i) {
            h_sub.middleRows(3 * i, 3) = h_.middleRows(3 * kept[static_cast<size_t>(i)], 3);
            z_sub.segment<3>(3 * i) = z.segment<3>(3 * kept[static_cast<size_t>(i)]);
        }
        const Eigen::MatrixXd r_mat =
            r_var * Eigen::MatrixXd::Identity(3 * m, 3 * m);
        corr = kalman_correct(cov_, h_sub, r_mat, z_sub, options_.joseph_form);
    }

    cov_ = corr.p;
    inject(corr.dx);
    return true;
}

void Eskf::update_position(const Vec3& p_meas, double sigma_p) {
    if (!p_meas.allFinite()) {
        throw SchemaError("position measurement is not finite");
    }
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, dim());
    h.leftCols<3>() = Mat3::Identity();
    const Eigen::MatrixXd r = sigma_p * sigma_p * Mat3::Identity();
    const Eigen::VectorXd z = p_meas - state_.ins.p;
    KalmanCorrection corr = kalman_correct(cov_, h, r, z, options_.joseph_form);
    cov_ = corr.p;
    inject(corr.dx);
}

void Eskf::inject(const Eigen::VectorXd& dx) {
    state_.ins.p += dx.segment<3>(0);
    state_.ins.v += dx.segment<3>(3);
    state_.ins.q = quat_mul(state_.ins.q, error_quat(dx.segment<3>(6)));
    state_.ins.bias_acc += dx.segment<3>(9);
    state_.ins.bias_gyro += dx.segment<3>(12);
    state_.theta += dx.tail(model_.reduced_dim);
    // Error state is reset to zero implicitly: dx is not carried over.
}

Eigen::VectorXd initial_variances(const RunConfig& cfg, int kappa) {
    Eigen::VectorXd var(15 + kappa);
    var.segment<3>(0).setConstant(cfg.init_std_pos * cfg.init_std_pos);
    var.segment<3>(3).setConstant(cfg.init_std_vel * cfg.init_std_vel);
    var.segment<3>(6).setConstant(cfg.init_std_att * cfg.init_std_att);
    var.segment<3>(9).setConstant(cfg.init_std_bias_acc * cfg.init_std_bias_acc);
    var.segment<3>(12).setConstant(cfg.init_std_bias_gyro * cfg.init_std_bias_gyro);
    var.tail(kappa).setConstant(cfg.init_std_theta * cfg.init_std_theta);
    return var;
}

namespace {

double median_step(const std::vector<ImuSample>& imu) {
    std::vector<double> steps;
    steps.reserve(imu.size());
    for (size_t i = 1; i < imu.size(); ++i) {
        steps.push_back(imu[i].t - imu[i - 1].t);
    }
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    return steps[steps.size() / 2];
}

EskfOptions options_from_config(const RunConfig& cfg, double rate) {
    EskfOptions options;
    options.gravity = cfg.gravity;
    options.noise = NoiseConfig::from_densities(cfg.accel_noise_density, cfg.gyro_noise_density,
                                                cfg.accel_bias_walk, cfg.gyro_bias_walk,
                                                cfg.sigma_theta_step, rate);
    options.noise.adaptive_r = cfg.adaptive_r;
    options.noise.sigma_mag = cfg.sigma_mag;
    options.noise.sigma_mag_floor = cfg.sigma_mag_floor;
    options.gate_innovations = cfg.gate_innovations;
    options.joseph_form = cfg.joseph_form;
    return options;
}

// Nearest record index to t, advancing `next` past everything earlier.
template <typename Rec>
int nearest_record(const std::vector<Rec>& records, size_t& next, double t, double tol) {
    while (next < records.size() && records[next].t < t - tol) ++next;
    if (next >= records.size()) return -1;
    int best = -1;
    double best_dt = tol;
    for (size_t i = next; i < records.size() && records[i].t <= t + tol; ++i) {
        const double dt = std::abs(records[i].t - t);
        if (dt <= best_dt) {
            best = static_cast<int>(i);
            best_dt = dt;
        }
    }
    return best;
}

}  // namespace

std::vector<FilterEpoch> run_filter(const Dataset& dataset, const ArrayGeometry& geometry,
                                    const RunConfig& cfg) {
    if (dataset.imu.size() < 2) {
        throw SchemaError("dataset needs at least two IMU samples");
    }
    const double rate = 1.0 / median_step(dataset.imu);
    FieldModel model = build_model(cfg.order);
    AnchorOptions anchor_options;
    anchor_options.policy = (cfg.anchor_policy == "minimal") ? AnchorOptions::Policy::Minimal
                                                             : AnchorOptions::Policy::All;
    anchor_options.condition_bound = cfg.anchor_condition_bound;
    Eskf filter(std::move(model), geometry, options_from_config(cfg, rate), anchor_options);

    // Initial nominal state: first ground-truth pose when available, the
    // field coefficients from a fit to the first clean magnetometer snapshot.
    NavState x0;
    if (!dataset.truth.empty()) {
        x0.p = dataset.truth.front().p;
        x0.q = dataset.truth.front().q;
    }
    Theta theta0 = Theta::Zero(filter.model().reduced_dim);
    if (cfg.use_mag) {
        for (const auto& m : dataset.mag) {
            if (m.values.allFinite()) {
                theta0 = fit_theta(filter.model(), geometry.positions, m.values).theta;
                break;
            }
        }
    }
    filter.init(x0, theta0, initial_variances(cfg, filter.model().reduced_dim));

    std::vector<FilterEpoch> out;
    out.reserve(dataset.imu.size());
    const double t0 = dataset.imu.front().t;
    out.push_back({t0, filter.state(), filter.covariance().diagonal()});

    size_t next_mag = 0;
    size_t next_truth = 0;
    for (size_t k = 0; k + 1 < dataset.imu.size(); ++k) {
        const double t_next = dataset.imu[k + 1].t;
        const double ts = t_next - dataset.imu[k].t;
        try {
            filter.predict(dataset.imu[k], ts);

            if (cfg.use_mag) {
                const int m = nearest_record(dataset.mag, next_mag, t_next,
                                             cfg.mag_time_tolerance);
                if (m >= 0) {
                    filter.update(dataset.mag[static_cast<size_t>(m)].values);
                    next_mag = static_cast<size_t>(m) + 1;
                }
            }
            if (!dataset.truth.empty() && t_next - t0 <= cfg.aiding_seconds) {
                const int g = nearest_record(dataset.truth, next_truth, t_next,
                                             cfg.mag_time_tolerance);
                if (g >= 0) {
                    filter.update_position(dataset.truth[static_cast<size_t>(g)].p,
                                           cfg.aiding_sigma_p);
                    next_truth = static_cast<size_t>(g) + 1;
                }
            }
        } catch (const DivergenceError& e) {
            throw DivergenceError(msg("epoch ", k + 1, " (t = ", t_next, "): ", e.what()));
        } catch (const SingularInnovationError& e) {
            throw SingularInnovationError(msg("epoch ", k + 1, " (t = ", t_next, "): ",
                                              e.what()));
        } catch (const Error& e) {
            throw Error(msg("epoch ", k + 1, " (t = ", t_next, "): ", e.what()));
        }
        out.push_back({t_next, filter.state(), filter.covariance().diagonal()});
    }
    return out;
}

std::vector<TrajectoryRecord> to_trajectory_records(const std::vector<FilterEpoch>& epochs) {
    std::vector<TrajectoryRecord> out;
    out.reserve(epochs.size());
    for (const auto& e : epochs) {
        TrajectoryRecord r;
        r.t = e.t;
        r.p = e.state.ins.p;
        r.q = e.state.ins.q;
        r.v = e.state.ins.v;
        r.cov_diag = e.cov_diag;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace mains
