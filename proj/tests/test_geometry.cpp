#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mains/geometry.hpp"
#include "support/oracles.hpp"

using namespace mains;

namespace {

Quat random_unit_quat(std::mt19937_64& gen) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q(n(gen), n(gen), n(gen), n(gen));
    q.normalize();
    return q;
}

}  // namespace

TEST_CASE("quat_exp basic values") {
    const Quat identity = quat_exp(Vec3::Zero());
    CHECK(identity.w() == doctest::Approx(1.0));
    CHECK(identity.vec().norm() == doctest::Approx(0.0));

    const Quat half_turn = quat_exp(Vec3(M_PI, 0.0, 0.0));
    CHECK(std::abs(half_turn.w()) < 1e-15);
    CHECK(half_turn.x() == doctest::Approx(1.0));

    // Tiny angle against the closed form evaluated in extended precision.
    const double a = 1e-12;
    const Quat tiny = quat_exp(Vec3(a, 0.0, 0.0));
    const long double half = a / 2.0L;
    CHECK(std::abs(tiny.w() - static_cast<double>(cosl(half))) < 1e-15);
    CHECK(std::abs(tiny.x() - static_cast<double>(sinl(half))) < 1e-15);
}

TEST_CASE("quat_mul identity, inverse, and matrix-form oracle") {
    auto gen = oracle::rng(7);
    const Quat q = random_unit_quat(gen);
    const Quat qi = quat_mul(Quat::Identity(), q);
    CHECK(qi.angularDistance(q) < 1e-14);

    const Quat inv = quat_mul(q, q.conjugate());
    CHECK(inv.angularDistance(Quat::Identity()) < 1e-12);

    for (int trial = 0; trial < 100; ++trial) {
        const Quat a = random_unit_quat(gen);
        const Quat b = random_unit_quat(gen);
        const Quat ab = quat_mul(a, b);
        const Eigen::Vector4d expected = oracle::quat_product_matrix_form(
            Eigen::Vector4d(a.w(), a.x(), a.y(), a.z()),
            Eigen::Vector4d(b.w(), b.x(), b.y(), b.z()));
        const Eigen::Vector4d got(ab.w(), ab.x(), ab.y(), ab.z());
        CHECK((got - expected.normalized()).norm() < 1e-14);
        CHECK(std::abs(ab.norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("quat_to_rot") {
    CHECK((quat_to_rot(Quat::Identity()) - Mat3::Identity()).norm() < 1e-15);

    // 90 degrees about x maps y to z.
    const Mat3 rx = quat_to_rot(quat_exp(Vec3(M_PI / 2.0, 0.0, 0.0)));
    CHECK((rx * Vec3(0.0, 1.0, 0.0) - Vec3(0.0, 0.0, 1.0)).norm() < 1e-12);

    auto gen = oracle::rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat3 r = quat_to_rot(random_unit_quat(gen));
        CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("skew against the cross product") {
    CHECK(skew(Vec3::Zero()).norm() == 0.0);
    CHECK((skew(Vec3(1, 0, 0)) * Vec3(0, 1, 0) - Vec3(0, 0, 1)).norm() == 0.0);

    auto gen = oracle::rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 v = oracle::random_vec3(gen, 2.0);
        const Vec3 b = oracle::random_vec3(gen, 2.0);
        CHECK((skew(v) * b - v.cross(b)).norm() < 1e-15);
        CHECK((skew(v) + skew(v).transpose()).norm() == 0.0);
    }
}

TEST_CASE("error_quat") {
    CHECK(error_quat(Vec3::Zero()).angularDistance(Quat::Identity()) == 0.0);

    const Vec3 eps(1e-3, 0.0, 0.0);
    CHECK(error_quat(eps).angularDistance(quat_exp(eps)) < 1e-9);

    const Quat big = error_quat(Vec3(0.2, 0.0, 0.0));
    CHECK(std::abs(big.norm() - 1.0) < 1e-15);
}

TEST_CASE("rotation homomorphism over 1000 random pairs") {
    auto gen = oracle::rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        const Quat a = random_unit_quat(gen);
        const Quat b = random_unit_quat(gen);
        const Mat3 lhs = quat_to_rot(quat_mul(a, b));
        const Mat3 rhs = quat_to_rot(a) * quat_to_rot(b);
        CHECK((lhs - rhs).norm() < 1e-10);
    }
}

TEST_CASE("exp/log round trip below pi") {
    auto gen = oracle::rng(19);
    std::uniform_real_distribution<double> angle(0.0, M_PI - 0.1);
    for (int trial = 0; trial < 500; ++trial) {
        Vec3 axis = oracle::random_vec3(gen);
        if (axis.norm() < 1e-6) continue;
        axis.normalize();
        const Vec3 v = axis * angle(gen);
        CHECK((quat_log(quat_exp(v)) - v).norm() < 1e-9);
    }
    // Small-angle branch round trip as well.
    const Vec3 tiny(1e-10, -2e-10, 5e-11);
    CHECK((quat_log(quat_exp(tiny)) - tiny).norm() < 1e-15);
}

TEST_CASE("rot_exp_derivative matches finite differences") {
    auto gen = oracle::rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        // Cover both the closed-form and the small-angle branch.
        const double scale = (trial % 2 == 0) ? 1.0 : 1e-5;
        const Vec3 v = oracle::random_vec3(gen, scale);
        for (int axis = 0; axis < 3; ++axis) {
            const Mat3 analytic = rot_exp_derivative(v, axis);
            Vec3 vp = v, vm = v;
            const double h = 1e-7;
            vp(axis) += h;
            vm(axis) -= h;
            const Mat3 fd = (rot_exp(vp) - rot_exp(vm)) / (2.0 * h);
            CHECK((analytic - fd).norm() < 1e-6);
        }
    }
}
