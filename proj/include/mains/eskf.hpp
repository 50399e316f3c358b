#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mains/dataio.hpp"
#include "mains/field_model.hpp"
#include "mains/strapdown.hpp"

namespace mains {

// Joint nominal state: INS navigation state plus body-frame field coefficients.
struct FullState {
    NavState ins;
    Theta theta;
};

// Per-step process noise blocks, in the order (w_a, w_w, w_oa, w_ow, w_theta).
// White-noise blocks are discrete per-sample covariances; bias blocks are
// random-walk densities per second (the transition applies the sqrt(Ts)
// scaling). theta_step_var is the per-coefficient variance added per step.
struct NoiseConfig {
    Mat3 acc_cov = Mat3::Identity() * 1e-2;
    Mat3 gyro_cov = Mat3::Identity() * 1e-4;
    Mat3 acc_bias_cov = Mat3::Identity() * 1e-8;
    Mat3 gyro_bias_cov = Mat3::Identity() * 1e-8;
    double theta_step_var = 4.9e-3;

    // Measurement covariance policy.
    bool adaptive_r = true;
    double sigma_mag = 0.05;        // uT, used when adaptive_r is false
    double sigma_mag_floor = 0.01;  // uT, lower bound for the adaptive estimate

    // White-noise densities in unit/sqrt(Hz), bias walks in unit/sqrt(s).
    static NoiseConfig from_densities(double accel_density, double gyro_density,
                                      double accel_bias_walk, double gyro_bias_walk,
                                      double sigma_theta_step, double rate);
};

struct EskfOptions {
    Vec3 gravity = Vec3(0.0, 0.0, kDefaultGravity);
    NoiseConfig noise;
    bool gate_innovations = false;  // 3-sigma gate per magnetometer triple
    bool joseph_form = false;       // covariance update form cross-check
};

// Generic Kalman measurement correction: S = H P H^T + R, K = P H^T S^-1,
// dx = K z, P' = P - K H P (or the Joseph form), re-symmetrized.
// Throws SingularInnovationError when S is not positive definite.
struct KalmanCorrection {
    Eigen::VectorXd dx;
    Eigen::MatrixXd p;
};
KalmanCorrection kalman_correct(const Eigen::MatrixXd& p, const Eigen::MatrixXd& h,
                                const Eigen::MatrixXd& r, const Eigen::VectorXd& z,
                                bool joseph = false);

// Error-state Kalman filter over (dp, dv, eps, d bias_acc, d bias_gyro, dtheta).
//
// predict() propagates the nominal state with the strapdown mechanization and
// the coefficient transport, and the covariance with F P F^T + G Q G^T.
// update() applies a stacked magnetometer measurement, corrects the nominal
// state through the error-state composition, and resets the error state.
class Eskf {
public:
    Eskf(FieldModel model, ArrayGeometry geometry, EskfOptions options,
         AnchorOptions anchor_options = {});

    // Initial nominal state and initial error variances (length dim()).
    void init(const NavState& x0, const Theta& theta0, const Eigen::VectorXd& init_var);

    int dim() const { return 15 + model_.reduced_dim; }
    int n_mag() const { return static_cast<int>(geometry_.positions.size()); }

    void predict(const ImuSample& u, double ts);

    // Stacked 3N magnetometer measurement. Returns false when the sample is
    // rejected (non-finite values or every triple gated); the filter then
    // continues on prediction alone.
    bool update(const Eigen::VectorXd& y);

    // External position measurement with isotropic std dev sigma_p (meters).
    void update_position(const Vec3& p_meas, double sigma_p);

    // Adaptive measurement variance: residual variance of the least-squares
    // field fit to y, floored at sigma_mag_floor^2.
    double adapt_r_variance(const Eigen::VectorXd& y) const;

    // Error-state transition for one step, evaluated at the current estimate.
    struct Transition {
        Eigen::MatrixXd f;  // dim x dim
        Eigen::MatrixXd g;  // dim x (12 + kappa)
        Eigen::MatrixXd b;  // B(psi), 3S x kappa
    };
    Transition transition(const ImuSample& u, double ts) const;

    // Q = blkdiag(acc, gyro, acc bias, gyro bias, theta).
    Eigen::MatrixXd process_noise() const;

    const FullState& state() const { return state_; }
    FullState& state() { return state_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }
    Eigen::MatrixXd& covariance() { return cov_; }
    const FieldModel& model() const { return model_; }
    const AnchorSet& anchors() const { return anchors_; }
    const ArrayGeometry& geometry() const { return geometry_; }
    // Stacked Phi(r_mi): the theta block of the measurement matrix.
    const Eigen::MatrixXd& measurement_matrix() const { return stacked_phi_; }
    const EskfOptions& options() const { return options_; }

    // Innovation and its covariance for the current state (diagnostics).
    Eigen::VectorXd innovation(const Eigen::VectorXd& y) const;

private:
    void inject(const Eigen::VectorXd& dx);

    FieldModel model_;
    ArrayGeometry geometry_;
    EskfOptions options_;
    AnchorSet anchors_;
    Eigen::MatrixXd stacked_phi_;  // X, 3N x kappa
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> fit_qr_;
    Eigen::MatrixXd h_;  // full measurement matrix, 3N x dim

    FullState state_;
    Eigen::MatrixXd cov_;
};

struct FilterEpoch {
    double t = 0.0;
    FullState state;
    Eigen::VectorXd cov_diag;
};

// Runs the full loop over a dataset: per IMU interval predict, then the
// magnetometer update associated with the epoch, plus position aiding inside
// the initial window. Errors are rethrown with the epoch index attached.
std::vector<FilterEpoch> run_filter(const Dataset& dataset, const ArrayGeometry& geometry,
                                    const RunConfig& cfg);

std::vector<TrajectoryRecord> to_trajectory_records(const std::vector<FilterEpoch>& epochs);

// Initial error variances (diagonal of P0) from the config.
Eigen::VectorXd initial_variances(const RunConfig& cfg, int kappa);

}  // namespace mains
