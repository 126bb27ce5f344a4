#include <catch2/catch_amalgamated.hpp>

#include "choreo/posemath.hpp"
#include "grad_check.hpp"

using namespace choreo;

namespace {

// oracle: random rotation composed from random axis-angle factors
Mat3 random_rotation(PhiloxRng& rng) {
    Mat3 r = Mat3::identity();
    for (int k = 0; k < 3; ++k) {
        Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
        r = r * axis_angle_to_matrix(axis, rng.uniform(-3.0, 3.0));
    }
    return r;
}

double mat_dist(const Mat3& a, const Mat3& b) {
    double d = 0.0;
    for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(a.m[i] - b.m[i]));
    return d;
}

PoseVector random_pose(PhiloxRng& rng) {
    PoseVector p;
    for (int j = 0; j < kNumJoints; ++j) p.rots[j] = matrix_to_rot6d(random_rotation(rng));
    p.root_t = {rng.normal(), rng.normal(), rng.normal()};
    for (int c = 0; c < 4; ++c) p.contacts[c] = rng.uniform();
    return p;
}

}  // namespace

TEST_CASE("rot6d identity and 90-degree analytic cases") {
    Rot6D ident;
    Mat3 m = rot6d_to_matrix(ident);
    CHECK(mat_dist(m, Mat3::identity()) < 1e-12);

    Rot6D zrot;
    zrot.a = {0, 1, 0, -1, 0, 0};
    Mat3 r = rot6d_to_matrix(zrot);
    // columns (0,1,0), (-1,0,0), (0,0,1)
    CHECK(r(0, 0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(r(1, 0) == Catch::Approx(1.0));
    CHECK(r(0, 1) == Catch::Approx(-1.0));
    CHECK(r(2, 2) == Catch::Approx(1.0));

    CHECK(matrix_to_rot6d(Mat3::identity()).a == std::array<double, 6>{1, 0, 0, 0, 1, 0});
    auto r6 = matrix_to_rot6d(r);
    CHECK(r6.a == std::array<double, 6>{0, 1, 0, -1, 0, 0});
}

TEST_CASE("rot6d round-trip on 100 random rotations") {
    PhiloxRng rng(11);
    for (int i = 0; i < 100; ++i) {
        Mat3 r = random_rotation(rng);
        Mat3 back = rot6d_to_matrix(matrix_to_rot6d(r));
        CHECK(mat_dist(back, r) < 1e-6);
    }
}

TEST_CASE("rot6d output is orthonormal with unit determinant") {
    PhiloxRng rng(12);
    for (int i = 0; i < 100; ++i) {
        Rot6D r;
        for (auto& v : r.a) v = rng.normal();
        Mat3 m;
        try {
            m = rot6d_to_matrix(r);
        } catch (const DegenerateRotation&) {
            continue;  // vanishingly unlikely with gaussian input
        }
        Mat3 gram = m.transposed() * m;
        CHECK(mat_dist(gram, Mat3::identity()) < 1e-6);
        CHECK(std::abs(m.det() - 1.0) < 1e-6);
    }
}

TEST_CASE("degenerate rotations are rejected") {
    Rot6D zero;
    zero.a = {0, 0, 0, 0, 1, 0};
    CHECK_THROWS_AS(rot6d_to_matrix(zero), DegenerateRotation);
    Rot6D parallel;
    parallel.a = {1, 0, 0, 2, 0, 0};
    CHECK_THROWS_AS(rot6d_to_matrix(parallel), DegenerateRotation);
    Mat3 not_rot;
    not_rot(0, 0) = 2.0;
    CHECK_THROWS_AS(matrix_to_rot6d(not_rot), NotARotation);
}

TEST_CASE("pose pack/unpack round-trip and layout") {
    PhiloxRng rng(13);
    std::vector<double> v(kPoseDim);
    for (auto& x : v) x = rng.normal();
    CHECK(pose_pack(pose_unpack(v)) == v);

    // joint k's 6d block starts at 4 + 6k
    PoseVector p;
    p.rots[5].a = {9, 8, 7, 6, 5, 4};
    auto packed = pose_pack(p);
    CHECK(packed[4 + 6 * 5] == 9);
    CHECK(packed[4 + 6 * 5 + 5] == 4);

    std::vector<double> bad(150);
    CHECK_THROWS_AS(pose_unpack(bad), BadLength);

    std::vector<double> zeros(kPoseDim, 0.0);
    CHECK_THROWS_AS(forward_kinematics(SkeletonModel::standard(), pose_unpack(zeros)),
                    DegenerateRotation);
}

TEST_CASE("skeleton is topologically sorted with one root") {
    auto skel = SkeletonModel::standard();
    CHECK(skel.parents[0] == -1);
    for (int j = 1; j < kNumJoints; ++j) {
        CHECK(skel.parents[j] >= 0);
        CHECK(skel.parents[j] < j);
    }
}

TEST_CASE("fk with identity rotations accumulates rest offsets") {
    auto skel = SkeletonModel::standard();
    PoseVector p;  // identity rotations, zero root
    auto pos = forward_kinematics(skel, p);
    std::array<Vec3, kNumJoints> want;
    want[0] = {0, 0, 0};
    for (int j = 1; j < kNumJoints; ++j) want[j] = want[skel.parents[j]] + skel.offsets[j];
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(pos[j].x == Catch::Approx(want[j].x).margin(1e-12));
        CHECK(pos[j].y == Catch::Approx(want[j].y).margin(1e-12));
        CHECK(pos[j].z == Catch::Approx(want[j].z).margin(1e-12));
    }
}

TEST_CASE("fk two-bone analytic case") {
    // child offset (0,1,0); root rotated 90 degrees about z moves it to (-1,0,0)
    SkeletonModel skel = SkeletonModel::standard();
    skel.offsets[1] = {0, 1, 0};
    PoseVector p;
    p.rots[0] = matrix_to_rot6d(axis_angle_to_matrix({0, 0, 1}, std::numbers::pi / 2));
    auto pos = forward_kinematics(skel, p);
    CHECK(pos[1].x == Catch::Approx(-1.0).margin(1e-12));
    CHECK(pos[1].y == Catch::Approx(0.0).margin(1e-12));
    CHECK(pos[1].z == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("fk matches an independent matrix-chain oracle on random poses") {
    auto skel = SkeletonModel::standard();
    PhiloxRng rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        PoseVector p = random_pose(rng);
        auto pos = forward_kinematics(skel, p);
        // oracle: for each joint walk the chain to the root, composing
        // explicit matrix products from scratch
        for (int j = 0; j < kNumJoints; ++j) {
            std::vector<int> chain;
            for (int k = j; k != -1; k = skel.parents[k]) chain.push_back(k);
            // chain is j..root; accumulate from root down
            Mat3 rot = Mat3::identity();
            Vec3 want = p.root_t;
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                if (*it == 0) {
                    rot = rot6d_to_matrix(p.rots[0]);
                    continue;
                }
                want = want + rot * skel.offsets[*it];
                rot = rot * rot6d_to_matrix(p.rots[*it]);
            }
            CHECK((pos[j] - want).norm() < 1e-9);
        }
    }
}

TEST_CASE("fk is translation-equivariant") {
    auto skel = SkeletonModel::standard();
    PhiloxRng rng(15);
    PoseVector p = random_pose(rng);
    auto base = forward_kinematics(skel, p);
    const Vec3 delta{0.37, -1.2, 2.05};
    PoseVector q = p;
    q.root_t = p.root_t + delta;
    auto moved = forward_kinematics(skel, q);
    for (int j = 0; j < kNumJoints; ++j) {
        CHECK(moved[j].x == Catch::Approx(base[j].x + delta.x).margin(1e-12));
        CHECK(moved[j].y == Catch::Approx(base[j].y + delta.y).margin(1e-12));
        CHECK(moved[j].z == Catch::Approx(base[j].z + delta.z).margin(1e-12));
    }
}

TEST_CASE("fk is rotation-equivariant at the root") {
    auto skel = SkeletonModel::standard();
    PhiloxRng rng(16);
    PoseVector p = random_pose(rng);
    p.root_t = {0, 0, 0};
    Mat3 q = random_rotation(rng);
    PoseVector rotated = p;
    rotated.rots[0] = matrix_to_rot6d(q * rot6d_to_matrix(p.rots[0]));
    auto base = forward_kinematics(skel, p);
    auto moved = forward_kinematics(skel, rotated);
    for (int j = 0; j < kNumJoints; ++j) {
        Vec3 want = q * base[j];
        CHECK((moved[j] - want).norm() < 1e-6);
    }
}

TEST_CASE("tensor fk agrees with plain fk and is differentiable") {
    auto skel = SkeletonModel::standard();
    PhiloxRng rng(17);
    MotionSequence seq;
    seq.frames = {random_pose(rng), random_pose(rng), random_pose(rng)};
    ag::Tensor x = to_tensor(seq);
    ag::Tensor pos = fk_positions(x, skel);
    REQUIRE(pos.rows() == 3);
    REQUIRE(pos.cols() == 72);
    for (int i = 0; i < 3; ++i) {
        auto want = forward_kinematics(skel, seq.frames[i]);
        for (int j = 0; j < kNumJoints; ++j) {
            CHECK(pos.at(i, j * 3) == Catch::Approx(want[j].x).margin(1e-9));
            CHECK(pos.at(i, j * 3 + 1) == Catch::Approx(want[j].y).margin(1e-9));
            CHECK(pos.at(i, j * 3 + 2) == Catch::Approx(want[j].z).margin(1e-9));
        }
    }

    auto res = gradcheck::check([&] { return ag::mean(ag::square(fk_positions(x, skel))); }, {x},
                                1e-4, 60, 21);
    INFO("fk grad max rel err " << res.max_rel_err);
    CHECK(res.max_rel_err < 1e-4);
}
