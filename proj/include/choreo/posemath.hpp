#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "choreo/common.hpp"
#include "choreo/tensor.hpp"

namespace choreo {

constexpr int kNumJoints = 24;
constexpr int kPoseDim = 151;  // 4 contacts | 24 x 6d rotations | 3 root translation
constexpr int kContactDim = 4;
constexpr int kRotBlockOffset = 4;
constexpr int kRootOffset = 4 + 6 * kNumJoints;  // 148

// contact channel order: left heel, right heel, left toe, right toe
constexpr std::array<int, 4> kContactJoints{7, 8, 10, 11};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
};

struct Mat3 {
    // row-major
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    double operator()(int i, int j) const { return m[i * 3 + j]; }
    double& operator()(int i, int j) { return m[i * 3 + j]; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Vec3 col(int j) const { return {m[j], m[3 + j], m[6 + j]}; }
    void set_col(int j, const Vec3& v) {
        m[j] = v.x;
        m[3 + j] = v.y;
        m[6 + j] = v.z;
    }
};

inline Mat3 axis_angle_to_matrix(Vec3 axis, double angle) {
    const double n = axis.norm();
    if (n < 1e-12) return Mat3::identity();
    axis = axis * (1.0 / n);
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    Mat3 r;
    r(0, 0) = t * axis.x * axis.x + c;
    r(0, 1) = t * axis.x * axis.y - s * axis.z;
    r(0, 2) = t * axis.x * axis.z + s * axis.y;
    r(1, 0) = t * axis.x * axis.y + s * axis.z;
    r(1, 1) = t * axis.y * axis.y + c;
    r(1, 2) = t * axis.y * axis.z - s * axis.x;
    r(2, 0) = t * axis.x * axis.z - s * axis.y;
    r(2, 1) = t * axis.y * axis.z + s * axis.x;
    r(2, 2) = t * axis.z * axis.z + c;
    return r;
}

// First two columns of a rotation matrix, column-major: [c0; c1].
struct Rot6D {
    std::array<double, 6> a{1, 0, 0, 0, 1, 0};

    static Rot6D identity() { return {}; }

    Vec3 col0() const { return {a[0], a[1], a[2]}; }
    Vec3 col1() const { return {a[3], a[4], a[5]}; }
};

// Gram-Schmidt recovery of the full matrix from its first two columns.
inline Mat3 rot6d_to_matrix(const Rot6D& r) {
    const Vec3 a0 = r.col0(), a1 = r.col1();
    const double n0 = a0.norm();
    if (n0 < 1e-9) throw DegenerateRotation("first column norm below 1e-9");
    const Vec3 b0 = a0 * (1.0 / n0);
    const Vec3 u = a1 - b0 * b0.dot(a1);
    const double nu = u.norm();
    if (nu < 1e-9) throw DegenerateRotation("columns parallel within 1e-9");
    const Vec3 b1 = u * (1.0 / nu);
    const Vec3 b2 = b0.cross(b1);
    Mat3 m;
    m.set_col(0, b0);
    m.set_col(1, b1);
    m.set_col(2, b2);
    return m;
}

inline Rot6D matrix_to_rot6d(const Mat3& m) {
    const Mat3 gram = m.transposed() * m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            if (std::abs(gram(i, j) - want) > 1e-4)
                throw NotARotation("R^T R deviates from identity beyond 1e-4");
        }
    if (std::abs(m.det() - 1.0) > 1e-4) throw NotARotation("det(R) != 1");
    Rot6D r;
    r.a = {m(0, 0), m(1, 0), m(2, 0), m(0, 1), m(1, 1), m(2, 1)};
    return r;
}

struct PoseVector {
    std::array<double, 4> contacts{0, 0, 0, 0};
    std::array<Rot6D, kNumJoints> rots{};
    Vec3 root_t;
};

inline std::vector<double> pose_pack(const PoseVector& p) {
    std::vector<double> v(kPoseDim);
    for (int i = 0; i < 4; ++i) v[i] = p.contacts[i];
    for (int j = 0; j < kNumJoints; ++j)
        for (int i = 0; i < 6; ++i) v[kRotBlockOffset + 6 * j + i] = p.rots[j].a[i];
    v[kRootOffset] = p.root_t.x;
    v[kRootOffset + 1] = p.root_t.y;
    v[kRootOffset + 2] = p.root_t.z;
    return v;
}

template <typename Seq>
PoseVector pose_unpack(const Seq& v) {
    if (static_cast<int>(v.size()) != kPoseDim)
        throw BadLength("pose vector must have 151 entries, got " + std::to_string(v.size()));
    PoseVector p;
    for (int i = 0; i < 4; ++i) p.contacts[i] = v[i];
    for (int j = 0; j < kNumJoints; ++j)
        for (int i = 0; i < 6; ++i) p.rots[j].a[i] = v[kRotBlockOffset + 6 * j + i];
    p.root_t = {v[kRootOffset], v[kRootOffset + 1], v[kRootOffset + 2]};
    return p;
}

struct MotionSequence {
    double fps = 30.0;
    std::vector<PoseVector> frames;

    int frame_count() const { return static_cast<int>(frames.size()); }
    double duration() const { return frames.size() / fps; }
};

// 24-joint kinematic tree, topologically sorted (parent index < child index).
struct SkeletonModel {
    std::array<int, kNumJoints> parents;
    std::array<Vec3, kNumJoints> offsets;  // rest-pose bone offsets, meters

    // Fixed SMPL-like tree with hand-set plausible rest offsets. Y is up,
    // the character faces +Z. Joints:
    //  0 pelvis, 1/2 L/R hip, 3 spine1, 4/5 L/R knee, 6 spine2, 7/8 L/R ankle,
    //  9 spine3, 10/11 L/R toe, 12 neck, 13/14 L/R collar, 15 head,
    //  16/17 L/R shoulder, 18/19 L/R elbow, 20/21 L/R wrist, 22/23 L/R hand
    static SkeletonModel standard() {
        SkeletonModel s;
        s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
        s.offsets = {{
            {0.00, 0.00, 0.00},    // 0 pelvis
            {0.09, -0.07, 0.00},   // 1 L hip
            {-0.09, -0.07, 0.00},  // 2 R hip
            {0.00, 0.11, 0.00},    // 3 spine1
            {0.00, -0.38, 0.00},   // 4 L knee
            {0.00, -0.38, 0.00},   // 5 R knee
            {0.00, 0.12, 0.00},    // 6 spine2
            {0.00, -0.40, 0.00},   // 7 L ankle
            {0.00, -0.40, 0.00},   // 8 R ankle
            {0.00, 0.13, 0.00},    // 9 spine3
            {0.00, -0.05, 0.13},   // 10 L toe
            {0.00, -0.05, 0.13},   // 11 R toe
            {0.00, 0.10, 0.00},    // 12 neck
            {0.08, 0.06, 0.00},    // 13 L collar
            {-0.08, 0.06, 0.00},   // 14 R collar
            {0.00, 0.12, 0.00},    // 15 head
            {0.10, 0.00, 0.00},    // 16 L shoulder
            {-0.10, 0.00, 0.00},   // 17 R shoulder
            {0.26, 0.00, 0.00},    // 18 L elbow
            {-0.26, 0.00, 0.00},   // 19 R elbow
            {0.25, 0.00, 0.00},    // 20 L wrist
            {-0.25, 0.00, 0.00},   // 21 R wrist
            {0.08, 0.00, 0.00},    // 22 L hand
            {-0.08, 0.00, 0.00}    // 23 R hand
        }};
        return s;
    }
};

// parent->child bone pairs (23 bones, child joints 1..23)
inline std::vector<std::pair<int, int>> skeleton_bones(const SkeletonModel& skel) {
    std::vector<std::pair<int, int>> bones;
    for (int j = 1; j < kNumJoints; ++j) bones.emplace_back(skel.parents[j], j);
    return bones;
}

inline std::array<Vec3, kNumJoints> forward_kinematics(const SkeletonModel& skel,
                                                       const PoseVector& pose) {
    std::array<Mat3, kNumJoints> global;
    std::array<Vec3, kNumJoints> rel;  // joint position relative to the root
    global[0] = rot6d_to_matrix(pose.rots[0]);
    rel[0] = {0, 0, 0};
    for (int j = 1; j < kNumJoints; ++j) {
        const int p = skel.parents[j];
        rel[j] = rel[p] + global[p] * skel.offsets[j];
        global[j] = global[p] * rot6d_to_matrix(pose.rots[j]);
    }
    // root added last, so a root shift moves every joint by exactly that shift
    std::array<Vec3, kNumJoints> pos;
    for (int j = 0; j < kNumJoints; ++j) pos[j] = pose.root_t + rel[j];
    return pos;
}

// ---- autograd bridge ----

inline ag::Tensor to_tensor(const MotionSequence& seq) {
    std::vector<double> data;
    data.reserve(seq.frames.size() * kPoseDim);
    for (const auto& f : seq.frames) {
        auto v = pose_pack(f);
        data.insert(data.end(), v.begin(), v.end());
    }
    return ag::Tensor::from(static_cast<int>(seq.frames.size()), kPoseDim, std::move(data));
}

inline MotionSequence from_tensor(const ag::Tensor& t, double fps) {
    if (t.cols() != kPoseDim) throw BadLength("sequence tensor must have 151 columns");
    MotionSequence seq;
    seq.fps = fps;
    seq.frames.reserve(t.rows());
    for (int i = 0; i < t.rows(); ++i) {
        std::vector<double> row(t.values().begin() + static_cast<size_t>(i) * kPoseDim,
                                t.values().begin() + static_cast<size_t>(i + 1) * kPoseDim);
        seq.frames.push_back(pose_unpack(row));
    }
    return seq;
}

// Differentiable Gram-Schmidt: [N,6] 6d blocks -> [N,9] row-major matrices.
inline ag::Tensor rot6d_to_matrix_rows(const ag::Tensor& six) {
    using namespace ag;
    if (six.cols() != 6) throw ShapeMismatch("rot6d_to_matrix_rows expects [N,6]");
    for (int i = 0; i < six.rows(); ++i) {
        const double* a = six.values().data() + static_cast<size_t>(i) * 6;
        const double n0 = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        if (n0 < 1e-9) throw DegenerateRotation("first column norm below 1e-9 (row " +
                                                std::to_string(i) + ")");
    }
    Tensor a0 = slice_cols(six, 0, 3);
    Tensor a1 = slice_cols(six, 3, 3);
    Tensor b0 = mul_rowwise(a0, recip(sqrt(rowdot(a0, a0))));
    Tensor u = sub(a1, mul_rowwise(b0, rowdot(b0, a1)));
    for (int i = 0; i < six.rows(); ++i) {
        const double* uv = u.values().data() + static_cast<size_t>(i) * 3;
        if (std::sqrt(uv[0] * uv[0] + uv[1] * uv[1] + uv[2] * uv[2]) < 1e-9)
            throw DegenerateRotation("columns parallel within 1e-9 (row " + std::to_string(i) + ")");
    }
    Tensor b1 = mul_rowwise(u, recip(sqrt(rowdot(u, u))));
    Tensor b2 = cross_rows(b0, b1);
    // row-major [r00 r01 r02 r10 ...] with columns b0, b1, b2
    Tensor rows[9];
    for (int i = 0; i < 3; ++i) {
        rows[i * 3 + 0] = slice_cols(b0, i, 1);
        rows[i * 3 + 1] = slice_cols(b1, i, 1);
        rows[i * 3 + 2] = slice_cols(b2, i, 1);
    }
    Tensor out = rows[0];
    for (int i = 1; i < 9; ++i) out = concat_cols(out, rows[i]);
    return out;
}

// Differentiable forward kinematics over a pose matrix [N,151] -> [N,72]
// (24 joints x xyz per row). Bone offsets may be overridden (one [1,3] tensor
// per joint) so shape parameters can scale them.
inline ag::Tensor fk_positions(const ag::Tensor& x, const SkeletonModel& skel,
                               const std::vector<ag::Tensor>* offsets_override = nullptr) {
    using namespace ag;
    if (x.cols() != kPoseDim) throw ShapeMismatch("fk_positions expects [N,151]");
    const int n = x.rows();
    Tensor root = slice_cols(x, kRootOffset, 3);
    std::vector<Tensor> global(kNumJoints), rel(kNumJoints);
    global[0] = rot6d_to_matrix_rows(slice_cols(x, kRotBlockOffset, 6));
    rel[0] = Tensor::zeros(n, 3);
    for (int j = 1; j < kNumJoints; ++j) {
        const int p = skel.parents[j];
        Tensor off;
        if (offsets_override) {
            off = (*offsets_override)[j];
        } else {
            off = Tensor::from(1, 3, {skel.offsets[j].x, skel.offsets[j].y, skel.offsets[j].z});
        }
        rel[j] = add(rel[p], mat3_apply_rows(global[p], off));
        global[j] = mat3_mul_rows(global[p], rot6d_to_matrix_rows(slice_cols(x, kRotBlockOffset + 6 * j, 6)));
    }
    Tensor out = add(root, rel[0]);
    for (int j = 1; j < kNumJoints; ++j) out = concat_cols(out, add(root, rel[j]));
    return out;
}

}  // namespace choreo
