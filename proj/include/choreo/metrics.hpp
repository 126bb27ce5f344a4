#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "choreo/posemath.hpp"

namespace choreo {

// fixed motion feature layout: 72-dim kinetic block followed by a 32-dim
// geometric block
constexpr int kKineticDim = 72;
constexpr int kGeometricDim = 32;
constexpr int kFeatureDim = kKineticDim + kGeometricDim;

struct FeatureVector {
    std::array<double, kFeatureDim> v{};

    const double* kinetic() const { return v.data(); }
    const double* geometric() const { return v.data() + kKineticDim; }
};

namespace metrics_detail {

// geometric block: time-mean of thresholded joint-pair distance relations.
// 32 fixed (joint, joint, threshold-meters) triples chosen to separate
// arm-, leg- and torso-dominant movement.
inline const std::array<std::array<double, 3>, kGeometricDim>& geometric_pairs() {
    static const std::array<std::array<double, 3>, kGeometricDim> pairs = {{
        {20, 21, 0.40}, {20, 15, 0.45}, {21, 15, 0.45}, {20, 0, 0.50},  {21, 0, 0.50},
        {22, 23, 0.45}, {18, 19, 0.45}, {20, 1, 0.45},  {21, 2, 0.45},  {22, 15, 0.50},
        {7, 8, 0.25},   {10, 11, 0.30}, {7, 0, 0.75},   {8, 0, 0.75},   {10, 0, 0.85},
        {11, 0, 0.85},  {4, 5, 0.25},   {7, 20, 0.80},  {8, 21, 0.80},  {10, 22, 0.90},
        {15, 0, 0.62},  {12, 0, 0.50},  {9, 0, 0.38},   {15, 9, 0.26},  {3, 15, 0.50},
        {16, 17, 0.25}, {13, 14, 0.20}, {18, 15, 0.40}, {19, 15, 0.40}, {16, 1, 0.55},
        {17, 2, 0.55},  {23, 11, 0.95},
    }};
    return pairs;
}

inline std::vector<std::array<Vec3, kNumJoints>> all_positions(const MotionSequence& seq,
                                                               const SkeletonModel& skel) {
    std::vector<std::array<Vec3, kNumJoints>> pos;
    pos.reserve(seq.frames.size());
    for (const auto& f : seq.frames) pos.push_back(forward_kinematics(skel, f));
    return pos;
}

}  // namespace metrics_detail

// phi(x): kinetic block = per-joint, per-axis time-mean squared velocity;
// geometric block = time-mean thresholded joint-pair relations.
inline FeatureVector motion_features(const MotionSequence& seq, const SkeletonModel& skel) {
    if (seq.frame_count() < 2) throw TooShort("motion_features needs >= 2 frames");
    const auto pos = metrics_detail::all_positions(seq, skel);
    const int n = seq.frame_count();
    FeatureVector f;
    for (int i = 0; i + 1 < n; ++i) {
        for (int j = 0; j < kNumJoints; ++j) {
            const Vec3 v = (pos[i + 1][j] - pos[i][j]) * seq.fps;
            f.v[j * 3] += v.x * v.x;
            f.v[j * 3 + 1] += v.y * v.y;
            f.v[j * 3 + 2] += v.z * v.z;
        }
    }
    for (int k = 0; k < kKineticDim; ++k) f.v[k] /= (n - 1);

    const auto& pairs = metrics_detail::geometric_pairs();
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < kGeometricDim; ++k) {
            const int a = static_cast<int>(pairs[k][0]);
            const int b = static_cast<int>(pairs[k][1]);
            if ((pos[i][a] - pos[i][b]).norm() < pairs[k][2]) f.v[kKineticDim + k] += 1.0;
        }
    }
    for (int k = 0; k < kGeometricDim; ++k) f.v[kKineticDim + k] /= n;
    return f;
}

// Physical foot contact score. Per interior frame: |COM acceleration| times
// both foot speeds, averaged and normalized by the peak COM acceleration
// (zero when the COM never accelerates). Foot position is the heel/toe
// midpoint per side.
inline double pfc(const MotionSequence& seq, const SkeletonModel& skel) {
    if (seq.frame_count() < 3) throw TooShort("pfc needs >= 3 frames");
    const auto pos = metrics_detail::all_positions(seq, skel);
    const int n = seq.frame_count();
    const double fps = seq.fps;

    auto com = [&](int i) {
        Vec3 c;
        for (int j = 0; j < kNumJoints; ++j) c = c + pos[i][j];
        return c * (1.0 / kNumJoints);
    };
    auto foot = [&](int i, bool left) {
        const int heel = left ? kContactJoints[0] : kContactJoints[1];
        const int toe = left ? kContactJoints[2] : kContactJoints[3];
        return (pos[i][heel] + pos[i][toe]) * 0.5;
    };

    double acc_max = 0.0;
    std::vector<double> acc_norm(n, 0.0), vl(n, 0.0), vr(n, 0.0);
    for (int i = 1; i + 1 < n; ++i) {
        const Vec3 a = (com(i + 1) - com(i) * 2.0 + com(i - 1)) * (fps * fps);
        acc_norm[i] = a.norm();
        acc_max = std::max(acc_max, acc_norm[i]);
        vl[i] = ((foot(i + 1, true) - foot(i, true)) * fps).norm();
        vr[i] = ((foot(i + 1, false) - foot(i, false)) * fps).norm();
    }
    if (acc_max <= 0.0) return 0.0;
    double s = 0.0;
    for (int i = 1; i + 1 < n; ++i) s += acc_norm[i] * vl[i] * vr[i];
    return s / (n - 2) / acc_max;
}

enum class FeatureBlock { kinetic, geometric };

// Diversity: mean pairwise Euclidean distance over the chosen block.
inline double diversity(const std::vector<FeatureVector>& feats, FeatureBlock block) {
    if (feats.size() < 2) throw TooFew("diversity needs >= 2 feature vectors");
    const int off = block == FeatureBlock::kinetic ? 0 : kKineticDim;
    const int dim = block == FeatureBlock::kinetic ? kKineticDim : kGeometricDim;
    double total = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < feats.size(); ++i)
        for (size_t j = i + 1; j < feats.size(); ++j) {
            double d2 = 0.0;
            for (int k = 0; k < dim; ++k) {
                const double d = feats[i].v[off + k] - feats[j].v[off + k];
                d2 += d * d;
            }
            total += std::sqrt(d2);
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

// Kinematic beats: local minima of mean joint speed within a 5-frame window.
// Speed index i covers the displacement between frames i and i+1, so its
// time is (i + 0.5) / fps.
inline std::vector<double> kinematic_beats(const MotionSequence& seq, const SkeletonModel& skel,
                                           int window = 5) {
    if (seq.frame_count() < 3) throw TooShort("kinematic_beats needs >= 3 frames");
    const auto pos = metrics_detail::all_positions(seq, skel);
    const int n = seq.frame_count();
    std::vector<double> speed(n - 1, 0.0);
    for (int i = 0; i + 1 < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < kNumJoints; ++j) s += (pos[i + 1][j] - pos[i][j]).norm();
        speed[i] = s / kNumJoints * seq.fps;
    }
    const int half = window / 2;
    std::vector<double> beats;
    for (int i = 1; i + 1 < static_cast<int>(speed.size()); ++i) {
        if (!(speed[i] < speed[i - 1]) || !(speed[i] < speed[i + 1])) continue;
        bool is_min = true;
        for (int k = std::max(0, i - half); k <= std::min<int>(speed.size() - 1, i + half); ++k)
            if (speed[k] < speed[i]) is_min = false;
        if (is_min) beats.push_back((i + 0.5) / seq.fps);
    }
    return beats;
}

// Beat alignment score: mean over kinematic beats of
// exp(-min_b (t_k - t_b)^2 / (2 sigma^2)).
inline double bas(const MotionSequence& seq, const SkeletonModel& skel,
                  const std::vector<double>& music_beats, double sigma = 0.1) {
    const auto kin = kinematic_beats(seq, skel);
    if (kin.empty() || music_beats.empty()) throw NoBeats("need >= 1 beat on each side");
    double total = 0.0;
    for (double tk : kin) {
        double best = std::numeric_limits<double>::infinity();
        for (double tb : music_beats) best = std::min(best, (tk - tb) * (tk - tb));
        total += std::exp(-best / (2.0 * sigma * sigma));
    }
    return total / static_cast<double>(kin.size());
}

// MSAS over precomputed classifier rows. Per item: the probability assigned
// to the true style when it appears in the top 3 (ties broken by descending
// probability, then ascending class index), else 0.
inline double msas(const std::vector<std::vector<double>>& probs,
                   const std::vector<int>& truth) {
    if (probs.size() != truth.size() || probs.empty())
        throw BadDistribution("probs/truth size mismatch or empty");
    double total = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        const auto& row = probs[i];
        double sum = 0.0;
        for (double p : row) sum += p;
        if (std::abs(sum - 1.0) > 1e-6)
            throw BadDistribution("row " + std::to_string(i) + " sums to " + std::to_string(sum));
        if (truth[i] < 0 || truth[i] >= static_cast<int>(row.size()))
            throw BadDistribution("truth index out of range");
        std::vector<int> order(row.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (row[a] != row[b]) return row[a] > row[b];
            return a < b;
        });
        const int top = std::min<int>(3, static_cast<int>(order.size()));
        for (int k = 0; k < top; ++k) {
            if (order[k] == truth[i]) {
                total += row[truth[i]];
                break;
            }
        }
    }
    return total / static_cast<double>(probs.size());
}

struct StyleReferenceSet {
    std::string style;
    std::vector<FeatureVector> members;
};

namespace metrics_detail {

struct Standardizer {
    std::array<double, kFeatureDim> mean{};
    std::array<double, kFeatureDim> std{};

    static Standardizer fit(const std::vector<StyleReferenceSet>& refs) {
        Standardizer s;
        size_t n = 0;
        for (const auto& r : refs) n += r.members.size();
        if (n == 0) throw TooFew("no reference members");
        for (const auto& r : refs)
            for (const auto& m : r.members)
                for (int k = 0; k < kFeatureDim; ++k) s.mean[k] += m.v[k];
        for (int k = 0; k < kFeatureDim; ++k) s.mean[k] /= static_cast<double>(n);
        for (const auto& r : refs)
            for (const auto& m : r.members)
                for (int k = 0; k < kFeatureDim; ++k) {
                    const double d = m.v[k] - s.mean[k];
                    s.std[k] += d * d;
                }
        for (int k = 0; k < kFeatureDim; ++k) {
            s.std[k] = std::sqrt(s.std[k] / static_cast<double>(n));
            if (s.std[k] < 1e-12) s.std[k] = 1.0;  // constant feature
        }
        return s;
    }

    std::array<double, kFeatureDim> apply(const FeatureVector& f) const {
        std::array<double, kFeatureDim> out;
        for (int k = 0; k < kFeatureDim; ++k) out[k] = (f.v[k] - mean[k]) / std[k];
        return out;
    }
};

}  // namespace metrics_detail

// CSAS: mean over generated items of exp(-alpha * distance to the intended
// style centroid), in the feature space standardized by the reference sets'
// pooled statistics.
inline double csas(const std::vector<std::pair<FeatureVector, std::string>>& generated,
                   const std::vector<StyleReferenceSet>& refs, double alpha = 1.0) {
    if (alpha <= 0.0) throw BadAlpha("alpha must be positive");
    if (generated.empty()) throw TooFew("no generated items");
    const auto standardizer = metrics_detail::Standardizer::fit(refs);

    std::map<std::string, std::array<double, kFeatureDim>> centroids;
    for (const auto& r : refs) {
        if (r.members.empty()) throw TooFew("empty reference set " + r.style);
        std::array<double, kFeatureDim> c{};
        for (const auto& m : r.members) {
            const auto z = standardizer.apply(m);
            for (int k = 0; k < kFeatureDim; ++k) c[k] += z[k];
        }
        for (int k = 0; k < kFeatureDim; ++k) c[k] /= static_cast<double>(r.members.size());
        centroids[r.style] = c;
    }

    double total = 0.0;
    for (const auto& [feat, style] : generated) {
        const auto it = centroids.find(style);
        if (it == centroids.end()) throw UnknownStyle(style);
        const auto z = standardizer.apply(feat);
        double d2 = 0.0;
        for (int k = 0; k < kFeatureDim; ++k) {
            const double d = z[k] - it->second[k];
            d2 += d * d;
        }
        total += std::exp(-alpha * std::sqrt(d2));
    }
    return total / static_cast<double>(generated.size());
}

// Calibration helper: the alpha for which the median reference member's
// self-score exp(-alpha d) would be 0.5.
inline double csas_calibrate_alpha(const std::vector<StyleReferenceSet>& refs) {
    const auto standardizer = metrics_detail::Standardizer::fit(refs);
    std::vector<double> dists;
    for (const auto& r : refs) {
        std::array<double, kFeatureDim> c{};
        std::vector<std::array<double, kFeatureDim>> zs;
        for (const auto& m : r.members) {
            zs.push_back(standardizer.apply(m));
            for (int k = 0; k < kFeatureDim; ++k) c[k] += zs.back()[k];
        }
        for (int k = 0; k < kFeatureDim; ++k) c[k] /= static_cast<double>(r.members.size());
        for (const auto& z : zs) {
            double d2 = 0.0;
            for (int k = 0; k < kFeatureDim; ++k) d2 += (z[k] - c[k]) * (z[k] - c[k]);
            dists.push_back(std::sqrt(d2));
        }
    }
    if (dists.empty()) throw TooFew("no reference members");
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double median = dists[dists.size() / 2];
    if (median < 1e-12) throw BadAlpha("reference sets are degenerate (zero spread)");
    return std::log(2.0) / median;
}

}  // namespace choreo
