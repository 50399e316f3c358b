#include "mains/field_model.hpp"

#include <array>
#include <cmath>
#include <map>

#include <Eigen/SVD>

#include "mains/errors.hpp"

namespace mains {

namespace {

// Monomials of exactly degree m, descending lexicographic in (i,j,k).
void append_degree(int m, std::vector<std::array<int, 3>>& out) {
    for (int i = m; i >= 0; --i) {
        for (int j = m - i; j >= 0; --j) {
            out.push_back({i, j, m - i - j});
        }
    }
}

int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2; }

// Powers r^0 .. r^max for one coordinate.
void fill_powers(double r, int max_pow, std::vector<double>& out) {
    out.resize(static_cast<size_t>(max_pow) + 1);
    out[0] = 1.0;
    for (int n = 1; n <= max_pow; ++n) {
        out[n] = out[n - 1] * r;
    }
}

}  // namespace

FieldModel build_model(int order) {
    if (order < 1) {
        throw ConfigError(msg("field model order must be >= 1, got ", order));
    }
    FieldModel model;
    model.order = order;

    std::vector<std::array<int, 3>> monomials;
    for (int m = 1; m <= order + 1; ++m) {
        append_degree(m, monomials);
    }
    model.raw_dim = static_cast<int>(monomials.size());
    model.exponents.resize(model.raw_dim, 3);
    for (int t = 0; t < model.raw_dim; ++t) {
        model.exponents(t, 0) = monomials[t][0];
        model.exponents(t, 1) = monomials[t][1];
        model.exponents(t, 2) = monomials[t][2];
    }

    // Constraint rows: one per monomial of degree 0..order-1 (the Laplacian
    // of the degree-(l+1) potential). Row lookup by exponent triple.
    std::vector<std::array<int, 3>> rows;
    for (int m = 0; m <= order - 1; ++m) {
        append_degree(m, rows);
    }
    std::map<std::array<int, 3>, int> row_index;
    for (size_t rix = 0; rix < rows.size(); ++rix) {
        row_index[rows[rix]] = static_cast<int>(rix);
    }

    model.constraint = Eigen::MatrixXd::Zero(static_cast<int>(rows.size()), model.raw_dim);
    for (int t = 0; t < model.raw_dim; ++t) {
        const int i = model.exponents(t, 0);
        const int j = model.exponents(t, 1);
        const int k = model.exponents(t, 2);
        if (i >= 2) {
            model.constraint(row_index.at({i - 2, j, k}), t) += i * (i - 1);
        }
        if (j >= 2) {
            model.constraint(row_index.at({i, j - 2, k}), t) += j * (j - 1);
        }
        if (k >= 2) {
            model.constraint(row_index.at({i, j, k - 2}), t) += k * (k - 1);
        }
    }

    // Null basis, one block per degree. The Laplacian sends degree m to
    // degree m-2, so the constraint never couples different degrees.
    std::vector<Eigen::MatrixXd> blocks;
    int kappa = 0;
    int col_offset = 0;
    for (int m = 1; m <= order + 1; ++m) {
        const int cols = monomial_count(m);
        Eigen::MatrixXd basis;
        if (m == 1) {
            basis = Eigen::MatrixXd::Identity(3, 3);
        } else {
            const int rows_m = monomial_count(m - 2);
            const int row_offset = (m - 2 == 0) ? 0 : [&] {
                int off = 0;
                for (int d = 0; d <= m - 3; ++d) off += monomial_count(d);
                return off;
            }();
            const Eigen::MatrixXd block =
                model.constraint.block(row_offset, col_offset, rows_m, cols);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(block, Eigen::ComputeFullV);
            const auto& sv = svd.singularValues();
            const double tol = 1e-10 * sv(0);
            int rank = 0;
            for (int s = 0; s < sv.size(); ++s) {
                if (sv(s) > tol) ++rank;
            }
            basis = svd.matrixV().rightCols(cols - rank);
            // Deterministic sign: largest-magnitude entry of each column positive.
            for (int c = 0; c < basis.cols(); ++c) {
                int imax = 0;
                basis.col(c).cwiseAbs().maxCoeff(&imax);
                if (basis(imax, c) < 0.0) {
                    basis.col(c) = -basis.col(c);
                }
            }
        }
        blocks.push_back(basis);
        kappa += static_cast<int>(basis.cols());
        col_offset += cols;
    }

    model.reduced_dim = kappa;
    model.null_basis = Eigen::MatrixXd::Zero(model.raw_dim, kappa);
    int ro = 0;
    int co = 0;
    for (const auto& block : blocks) {
        model.null_basis.block(ro, co, block.rows(), block.cols()) = block;
        ro += static_cast<int>(block.rows());
        co += static_cast<int>(block.cols());
    }
    return model;
}

Eigen::MatrixXd gamma_matrix(const FieldModel& model, const Vec3& r) {
    const int max_pow = model.order + 1;
    std::vector<double> px, py, pz;
    fill_powers(r.x(), max_pow, px);
    fill_powers(r.y(), max_pow, py);
    fill_powers(r.z(), max_pow, pz);

    Eigen::MatrixXd g(3, model.raw_dim);
    for (int t = 0; t < model.raw_dim; ++t) {
        const int i = model.exponents(t, 0);
        const int j = model.exponents(t, 1);
        const int k = model.exponents(t, 2);
        g(0, t) = (i > 0) ? i * px[i - 1] * py[j] * pz[k] : 0.0;
        g(1, t) = (j > 0) ? j * px[i] * py[j - 1] * pz[k] : 0.0;
        g(2, t) = (k > 0) ? k * px[i] * py[j] * pz[k - 1] : 0.0;
    }
    return g;
}

Eigen::MatrixXd phi(const FieldModel& model, const Vec3& r) {
    return gamma_matrix(model, r) * model.null_basis;
}

Vec3 eval_field(const FieldModel& model, const Theta& theta, const Vec3& r) {
    if (theta.size() != model.reduced_dim) {
        throw ConfigError(msg("theta length ", theta.size(), " does not match model kappa ",
                              model.reduced_dim));
    }
    return gamma_matrix(model, r) * (model.null_basis * theta);
}

Mat3 field_jacobian(const FieldModel& model, const Theta& theta, const Vec3& r) {
    const Eigen::VectorXd mu = model.null_basis * theta;
    const int max_pow = model.order + 1;
    std::vector<double> px, py, pz;
    fill_powers(r.x(), max_pow, px);
    fill_powers(r.y(), max_pow, py);
    fill_powers(r.z(), max_pow, pz);

    // Hessian of the potential applied to mu; symmetric by construction.
    Mat3 jac = Mat3::Zero();
    for (int t = 0; t < model.raw_dim; ++t) {
        const double c = mu(t);
        if (c == 0.0) continue;
        const int i = model.exponents(t, 0);
        const int j = model.exponents(t, 1);
        const int k = model.exponents(t, 2);
        if (i >= 2) jac(0, 0) += c * i * (i - 1) * px[i - 2] * py[j] * pz[k];
        if (j >= 2) jac(1, 1) += c * j * (j - 1) * px[i] * py[j - 2] * pz[k];
        if (k >= 2) jac(2, 2) += c * k * (k - 1) * px[i] * py[j] * pz[k - 2];
        if (i >= 1 && j >= 1) jac(0, 1) += c * i * j * px[i - 1] * py[j - 1] * pz[k];
        if (i >= 1 && k >= 1) jac(0, 2) += c * i * k * px[i - 1] * py[j] * pz[k - 1];
        if (j >= 1 && k >= 1) jac(1, 2) += c * j * k * px[i] * py[j - 1] * pz[k - 1];
    }
    jac(1, 0) = jac(0, 1);
    jac(2, 0) = jac(0, 2);
    jac(2, 1) = jac(1, 2);
    return jac;
}

FitResult fit_theta(const FieldModel& model, const std::vector<Vec3>& positions,
                    const Eigen::VectorXd& readings) {
    const int n = static_cast<int>(positions.size());
    const int rows = 3 * n;
    if (readings.size() != rows) {
        throw SchemaError(msg("stacked readings length ", readings.size(),
                              " does not match 3N = ", rows));
    }
    if (rows < model.reduced_dim) {
        throw DegenerateGeometryError(msg("underdetermined fit: 3N = ", rows,
                                          " < kappa = ", model.reduced_dim,
                                          " (N = ", n, ", order = ", model.order, ")"));
    }

    Eigen::MatrixXd x(rows, model.reduced_dim);
    for (int s = 0; s < n; ++s) {
        x.middleRows(3 * s, 3) = phi(model, positions[s]);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < model.reduced_dim) {
        throw DegenerateGeometryError(msg("rank-deficient fit geometry: rank ", qr.rank(),
                                          " < kappa = ", model.reduced_dim, " with N = ", n,
                                          " sensor positions (order ", model.order, ")"));
    }

    FitResult result;
    result.theta = qr.solve(readings);
    result.sigma2 = (readings - x * result.theta).squaredNorm() / rows;
    return result;
}

AnchorSet make_anchors(const FieldModel& model, const ArrayGeometry& geometry,
                       const AnchorOptions& options) {
    const int min_anchors = (model.reduced_dim + 2) / 3;  // ceil(kappa/3)
    AnchorSet anchors;
    if (options.policy == AnchorOptions::Policy::Minimal) {
        if (geometry.size() < min_anchors) {
            throw DegenerateGeometryError(msg("geometry has ", geometry.size(),
                                              " sensors, need at least ", min_anchors,
                                              " anchors for order ", model.order));
        }
        // Greedy farthest-point subset: deterministic and well spread.
        std::vector<int> chosen = {0};
        while (static_cast<int>(chosen.size()) < min_anchors) {
            int best = -1;
            double best_dist = -1.0;
            for (int i = 0; i < geometry.size(); ++i) {
                double nearest = 1e300;
                for (int c : chosen) {
                    nearest = std::min(nearest,
                                       (geometry.positions[i] - geometry.positions[c]).norm());
                }
                if (nearest > best_dist) {
                    best_dist = nearest;
                    best = i;
                }
            }
            chosen.push_back(best);
        }
        for (int c : chosen) {
            anchors.positions.push_back(geometry.positions[c]);
        }
    } else {
        anchors.positions = geometry.positions;
    }
    const int s_count = static_cast<int>(anchors.positions.size());
    if (s_count < min_anchors) {
        throw DegenerateGeometryError(msg(s_count, " anchors < ceil(kappa/3) = ", min_anchors));
    }

    anchors.stacked_phi.resize(3 * s_count, model.reduced_dim);
    for (int s = 0; s < s_count; ++s) {
        anchors.stacked_phi.middleRows(3 * s, 3) = phi(model, anchors.positions[s]);
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(anchors.stacked_phi,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv(0);
    const double smin = sv(sv.size() - 1);
    if (smin <= 1e-12 * smax) {
        throw DegenerateGeometryError(msg("degenerate anchors: stacked regressor is rank "
                                          "deficient (sigma_min/sigma_max = ",
                                          smin / smax, ", S = ", s_count, ", order = ",
                                          model.order, "); anchor points likely collinear or "
                                          "coincident"));
    }
    anchors.condition = smax / smin;
    if (anchors.condition > options.condition_bound) {
        throw DegenerateGeometryError(msg("anchor condition number ", anchors.condition,
                                          " exceeds bound ", options.condition_bound));
    }
    anchors.pinv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    return anchors;
}

Eigen::MatrixXd transport_matrix(const FieldModel& model, const AnchorSet& anchors,
                                 const PoseDelta& psi) {
    const Mat3 e = rot_exp(psi.dphi);         // exp([dphi]x)
    const Mat3 r_new_old = e.transpose();     // rotation applied to field vectors
    const int s_count = static_cast<int>(anchors.positions.size());
    Eigen::MatrixXd b(3 * s_count, model.reduced_dim);
    for (int s = 0; s < s_count; ++s) {
        const Vec3 r_old = e * anchors.positions[s] + psi.dp;
        b.middleRows(3 * s, 3) = r_new_old * phi(model, r_old);
    }
    return b;
}

Theta transport_theta(const FieldModel& model, const AnchorSet& anchors, const PoseDelta& psi,
                      const Theta& theta) {
    return anchors.pinv * (transport_matrix(model, anchors, psi) * theta);
}

TransportJacobians transport_jacobians(const FieldModel& model, const AnchorSet& anchors,
                                       const PoseDelta& psi, const Theta& theta) {
    const Mat3 e = rot_exp(psi.dphi);
    const Mat3 r_new_old = e.transpose();
    Mat3 de[3];
    for (int a = 0; a < 3; ++a) {
        de[a] = rot_exp_derivative(psi.dphi, a);
    }

    const int s_count = static_cast<int>(anchors.positions.size());
    TransportJacobians jac;
    jac.dp.resize(3 * s_count, 3);
    jac.dphi.resize(3 * s_count, 3);
    for (int s = 0; s < s_count; ++s) {
        const Vec3 r_old = e * anchors.positions[s] + psi.dp;
        const Vec3 field = eval_field(model, theta, r_old);
        const Mat3 grad = field_jacobian(model, theta, r_old);
        // Translation moves the evaluation point only.
        jac.dp.middleRows(3 * s, 3) = r_new_old * grad;
        // Rotation moves both the field vector and the evaluation point.
        for (int a = 0; a < 3; ++a) {
            jac.dphi.block<3, 1>(3 * s, a) =
                de[a].transpose() * field + r_new_old * (grad * (de[a] * anchors.positions[s]));
        }
    }
    return jac;
}

ArrayGeometry make_rect_grid(int nx, int ny, double spacing) {
    ArrayGeometry geometry;
    const double x0 = -0.5 * spacing * (nx - 1);
    const double y0 = -0.5 * spacing * (ny - 1);
    int id = 0;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            geometry.ids.push_back(id++);
            geometry.positions.emplace_back(x0 + spacing * ix, y0 + spacing * iy, 0.0);
        }
    }
    return geometry;
}

}  // namespace mains
