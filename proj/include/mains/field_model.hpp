#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mains/geometry.hpp"

namespace mains {

// Coefficients of the reduced polynomial field model; length model.reduced_dim.
// With positions in meters, phi(r) * theta is the field in microtesla.
using Theta = Eigen::VectorXd;

// Curl- and divergence-free polynomial field model of order l.
//
// The field is the gradient of a scalar potential built from all monomials
// x^i y^j z^k with 1 <= i+j+k <= l+1, so the curl vanishes identically. The
// divergence constraint (the potential's Laplacian is the zero polynomial)
// is collected into the linear system D mu = 0; the model is reparameterized
// on an orthonormal basis of null(D), giving M(r; theta) = Gamma(r) Dperp theta.
//
// Monomial order: total degree ascending, then exponent triple (i,j,k) in
// descending lexicographic order, e.g. x, y, z, x^2, xy, xz, y^2, yz, z^2.
// The Laplacian maps degree-m monomials to degree m-2, so D is block diagonal
// across degrees and the null basis is assembled per degree block (identity
// for degree 1, SVD null space for each higher degree, columns sign-fixed so
// the largest-magnitude entry is positive). This makes theta reproducible
// across runs and keeps the constant-field modes in the leading columns.
struct FieldModel {
    int order = 0;        // l
    int raw_dim = 0;      // L, number of potential monomials
    int reduced_dim = 0;  // kappa, dim of null(D)

    // raw_dim rows of (i, j, k) exponents.
    Eigen::Matrix<int, Eigen::Dynamic, 3> exponents;
    // Divergence constraint matrix D, one row per monomial of degree 0..l-1.
    Eigen::MatrixXd constraint;
    // Orthonormal null-space basis Dperp, raw_dim x reduced_dim.
    Eigen::MatrixXd null_basis;
};

// Builds the model for order l >= 1. Orders above 4 are allowed but untested.
FieldModel build_model(int order);

// Gamma(r) = grad h(r)^T, 3 x raw_dim.
Eigen::MatrixXd gamma_matrix(const FieldModel& model, const Vec3& r);

// Regression matrix Phi(r) = Gamma(r) Dperp, 3 x reduced_dim.
Eigen::MatrixXd phi(const FieldModel& model, const Vec3& r);

// M(r; theta) = Phi(r) theta, microtesla.
Vec3 eval_field(const FieldModel& model, const Theta& theta, const Vec3& r);

// dM/dr, the (symmetric, traceless) 3x3 spatial Jacobian of the field.
Mat3 field_jacobian(const FieldModel& model, const Theta& theta, const Vec3& r);

struct FitResult {
    Theta theta;
    double sigma2 = 0.0;  // residual variance, |y - X theta|^2 / (3N)
};

// Least-squares fit of theta to stacked readings (3N-vector, sensor order
// matching positions). Throws DegenerateGeometryError when 3N < kappa or the
// stacked regressor is rank deficient.
FitResult fit_theta(const FieldModel& model, const std::vector<Vec3>& positions,
                    const Eigen::VectorXd& readings);

// Rigid magnetometer array: body-frame sensor positions in meters.
struct ArrayGeometry {
    std::vector<int> ids;
    std::vector<Vec3> positions;

    int size() const { return static_cast<int>(positions.size()); }
};

struct AnchorOptions {
    enum class Policy { All, Minimal };
    Policy policy = Policy::All;
    double condition_bound = 1e6;
};

// Anchor points for coefficient transport plus the cached matrices A and
// its Moore-Penrose inverse.
struct AnchorSet {
    std::vector<Vec3> positions;
    Eigen::MatrixXd stacked_phi;  // A, 3S x kappa
    Eigen::MatrixXd pinv;         // A-dagger, kappa x 3S
    double condition = 0.0;
};

// Selects anchors (default: every magnetometer position), builds A, checks
// rank and conditioning, and computes the pseudo-inverse.
AnchorSet make_anchors(const FieldModel& model, const ArrayGeometry& geometry,
                       const AnchorOptions& options = {});

// Rigid body-frame change between consecutive epochs: translation expressed
// in the departing frame, rotation as an axis-angle increment.
struct PoseDelta {
    Vec3 dp = Vec3::Zero();
    Vec3 dphi = Vec3::Zero();
};

// B(psi): rows R * Phi(R^T_of... ) stacked over anchors; the transported
// coefficients solve A theta' = B(psi) theta.
Eigen::MatrixXd transport_matrix(const FieldModel& model, const AnchorSet& anchors,
                                 const PoseDelta& psi);

// theta' = pinv(A) * B(psi) * theta.
Theta transport_theta(const FieldModel& model, const AnchorSet& anchors,
                      const PoseDelta& psi, const Theta& theta);

struct TransportJacobians {
    Eigen::MatrixXd dp;    // d(B(psi) theta)/d dp,   3S x 3
    Eigen::MatrixXd dphi;  // d(B(psi) theta)/d dphi, 3S x 3
};

// Analytic Jacobians of the pre-pseudo-inverse product B(psi) theta.
TransportJacobians transport_jacobians(const FieldModel& model, const AnchorSet& anchors,
                                       const PoseDelta& psi, const Theta& theta);

// Planar rectangular grid geometry, nx * ny sensors spaced `spacing` meters,
// centered on the origin at z = 0.
ArrayGeometry make_rect_grid(int nx, int ny, double spacing);

}  // namespace mains
