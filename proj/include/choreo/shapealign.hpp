#pragma once

#include <array>
#include <optional>
#include <vector>

#include "choreo/io.hpp"
#include "choreo/posemath.hpp"
#include "choreo/tensor.hpp"

namespace choreo {

// Simplified capsule body: one capsule per bone, with ten grouped shape
// multipliers (five girth groups, five length groups). Groups are disjoint,
// so the parameters are identifiable from silhouette plus keypoints.
//
// beta layout:
//   0 torso girth | 1 head girth | 2 arm girth | 3 leg girth | 4 hand/foot girth
//   5 spine length | 6 neck/head length | 7 arm length | 8 upper-leg length
//   9 lower-leg length

constexpr int kBetaDim = 10;
constexpr double kBetaMin = 0.2;
constexpr double kBetaMax = 5.0;

struct CameraParams {
    double scale = 28.0;  // pixels per meter, orthographic
    double off_x = 32.0;
    double off_y = 30.0;
};

struct BodyParams {
    std::array<double, kBetaDim> beta{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    PoseVector pose;  // rotations and root translation; contacts unused
    CameraParams camera;
};

namespace shape_detail {

// per-bone girth group and base radius (meters), keyed by child joint
inline int girth_group(int child) {
    switch (child) {
        case 3: case 6: case 9: case 12: case 13: case 14: return 0;  // torso
        case 15: return 1;                                            // head
        case 16: case 17: case 18: case 19: case 20: case 21: return 2;  // arms
        case 1: case 2: case 4: case 5: case 7: case 8: return 3;        // legs
        default: return 4;  // hands and feet (10, 11, 22, 23)
    }
}

inline int length_group(int child) {
    switch (child) {
        case 3: case 6: case 9: case 12: return 5;                     // spine
        case 15: return 6;                                             // neck/head
        case 13: case 14: case 16: case 17: case 18: case 19:
        case 20: case 21: case 22: case 23: return 7;                  // arms
        case 1: case 2: case 4: case 5: return 8;                      // upper legs
        default: return 9;  // lower legs (7, 8, 10, 11)
    }
}

inline double base_radius(int child) {
    switch (child) {
        case 3: case 6: case 9: return 0.10;
        case 12: return 0.05;
        case 13: case 14: return 0.06;
        case 15: return 0.09;
        case 16: case 17: return 0.05;
        case 18: case 19: return 0.045;
        case 20: case 21: return 0.04;
        case 22: case 23: return 0.03;
        case 1: case 2: return 0.08;
        case 4: case 5: return 0.065;
        case 7: case 8: return 0.05;
        default: return 0.035;  // 10, 11
    }
}

inline double point_segment_distance(double px, double py, double ax, double ay, double bx,
                                     double by) {
    const double ex = bx - ax, ey = by - ay;
    const double len2 = ex * ex + ey * ey;
    double t = len2 > 1e-12 ? ((px - ax) * ex + (py - ay) * ey) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * ex), dy = py - (ay + t * ey);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace shape_detail

// rest offsets scaled by the length multipliers
inline SkeletonModel scaled_skeleton(const SkeletonModel& skel,
                                     const std::array<double, kBetaDim>& beta) {
    SkeletonModel out = skel;
    for (int j = 1; j < kNumJoints; ++j) {
        const double s = beta[shape_detail::length_group(j)];
        out.offsets[j] = skel.offsets[j] * s;
    }
    return out;
}

// project world joints to pixel coordinates (y up in world, v down in image)
inline std::array<std::array<double, 2>, kNumJoints> project_joints(
    const BodyParams& params, const SkeletonModel& skel) {
    const auto pos = forward_kinematics(scaled_skeleton(skel, params.beta), params.pose);
    std::array<std::array<double, 2>, kNumJoints> uv;
    for (int j = 0; j < kNumJoints; ++j) {
        uv[j][0] = params.camera.scale * pos[j].x + params.camera.off_x;
        uv[j][1] = -params.camera.scale * pos[j].y + params.camera.off_y;
    }
    return uv;
}

// Hard binary render: pixel on iff its center lies within a bone capsule.
inline Raster render_silhouette(const BodyParams& params, const SkeletonModel& skel,
                                int width = 64, int height = 64) {
    const auto uv = project_joints(params, skel);
    Raster out;
    out.width = width;
    out.height = height;
    out.pixels.assign(static_cast<size_t>(width) * height, 0);
    for (int child = 1; child < kNumJoints; ++child) {
        const int parent = skel.parents[child];
        const double r = params.camera.scale * shape_detail::base_radius(child) *
                         params.beta[shape_detail::girth_group(child)];
        const double ax = uv[parent][0], ay = uv[parent][1];
        const double bx = uv[child][0], by = uv[child][1];
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r - 1)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r - 1)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(ay, by) + r + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d = shape_detail::point_segment_distance(x + 0.5, y + 0.5, ax, ay,
                                                                      bx, by);
                if (d <= r) out.at(x, y) = 1;
            }
    }
    return out;
}

// Hard silhouette loss: per-pixel squared difference summed over the raster.
inline double silhouette_loss(const BodyParams& params, const Raster& ref,
                              const SkeletonModel& skel) {
    const Raster render = render_silhouette(params, skel, ref.width, ref.height);
    double total = 0.0;
    for (size_t i = 0; i < render.pixels.size(); ++i) {
        const double d = static_cast<double>(render.pixels[i]) - static_cast<double>(ref.pixels[i]);
        total += d * d;
    }
    return total;
}

// ---- differentiable path ----

struct AlignVariables {
    ag::Tensor beta;  // [1,10]
    ag::Tensor rot6;  // [1,144]
    ag::Tensor root;  // [1,3]

    static AlignVariables from(const BodyParams& p) {
        AlignVariables v;
        std::vector<double> b(p.beta.begin(), p.beta.end());
        v.beta = ag::Tensor::from(1, kBetaDim, b, true);
        std::vector<double> r;
        for (const auto& rot : p.pose.rots) r.insert(r.end(), rot.a.begin(), rot.a.end());
        v.rot6 = ag::Tensor::from(1, 6 * kNumJoints, r, true);
        v.root = ag::Tensor::from(1, 3, {p.pose.root_t.x, p.pose.root_t.y, p.pose.root_t.z}, true);
        return v;
    }

    BodyParams to_params(const CameraParams& cam) const {
        BodyParams p;
        for (int k = 0; k < kBetaDim; ++k) p.beta[k] = beta.at(0, k);
        for (int j = 0; j < kNumJoints; ++j)
            for (int k = 0; k < 6; ++k) p.pose.rots[j].a[k] = rot6.at(0, 6 * j + k);
        p.pose.root_t = {root.at(0, 0), root.at(0, 1), root.at(0, 2)};
        p.camera = cam;
        return p;
    }
};

// projected joints as a [24,2] tensor, differentiable in beta/rot6/root
inline ag::Tensor project_joints_tensor(const AlignVariables& vars, const CameraParams& cam,
                                        const SkeletonModel& skel) {
    using namespace ag;
    Tensor xrow = concat_cols(concat_cols(Tensor::zeros(1, 4), vars.rot6), vars.root);
    std::vector<Tensor> offsets(kNumJoints);
    for (int j = 1; j < kNumJoints; ++j) {
        Tensor base = Tensor::from(1, 3, {skel.offsets[j].x, skel.offsets[j].y, skel.offsets[j].z});
        offsets[j] = mul_scalar(base, slice_cols(vars.beta, shape_detail::length_group(j), 1));
    }
    Tensor pos = fk_positions(xrow, skel, &offsets);  // [1,72]
    Tensor xyz = reshape(pos, kNumJoints, 3);
    Tensor u = affine(slice_cols(xyz, 0, 1), cam.scale, cam.off_x);
    Tensor v = affine(slice_cols(xyz, 1, 1), -cam.scale, cam.off_y);
    return concat_cols(u, v);  // [24,2]
}

// Fused soft-capsule coverage: s_u = sigmoid((r - dist(u, segment)) / tau)
// over a fixed pixel grid. One graph node per bone; backward uses the
// envelope property of the point-segment distance (the projection parameter
// is a minimizer, so it is treated as constant).
inline ag::Tensor soft_capsule_rows(const std::vector<double>& grid /* P x 2 */,
                                    const ag::Tensor& p0, const ag::Tensor& p1,
                                    const ag::Tensor& radius, double tau) {
    using namespace ag;
    if (p0.size() != 2 || p1.size() != 2 || radius.size() != 1)
        throw ShapeMismatch("soft_capsule_rows endpoint shapes");
    const int npix = static_cast<int>(grid.size() / 2);
    Tensor out = Tensor::zeros(npix, 1);
    const double ax = p0.values()[0], ay = p0.values()[1];
    const double bx = p1.values()[0], by = p1.values()[1];
    const double r = radius.values()[0];
    const double ex = bx - ax, ey = by - ay;
    const double len2 = ex * ex + ey * ey + 1e-12;

    std::vector<double> ts(npix), us_x(npix), us_y(npix);
    for (int i = 0; i < npix; ++i) {
        const double px = grid[2 * i], py = grid[2 * i + 1];
        double t = ((px - ax) * ex + (py - ay) * ey) / len2;
        t = std::clamp(t, 0.0, 1.0);
        const double dx = px - (ax + t * ex);
        const double dy = py - (ay + t * ey);
        const double d = std::sqrt(dx * dx + dy * dy + 1e-12);
        ts[i] = t;
        us_x[i] = dx / d;
        us_y[i] = dy / d;
        out.values()[i] = 1.0 / (1.0 + std::exp(-(r - d) / tau));
    }
    if (detail::tracing({&p0, &p1, &radius})) {
        detail::record(out, {&p0, &p1, &radius},
                       [p0 = p0.impl_, p1 = p1.impl_, radius = radius.impl_, o = out.impl_,
                        ts = std::move(ts), us_x = std::move(us_x), us_y = std::move(us_y), tau,
                        npix] {
                           for (int i = 0; i < npix; ++i) {
                               const double s = o->val[i];
                               const double g = o->grad[i] * s * (1.0 - s) / tau;
                               if (g == 0.0) continue;
                               // d(s)/d(r) = +g; d(s)/d(d) = -g; dd/dendpoint below
                               if (radius->requires_grad) radius->grad[0] += g;
                               const double gx = g * us_x[i], gy = g * us_y[i];
                               if (p0->requires_grad) {
                                   p0->grad[0] += gx * (1.0 - ts[i]);
                                   p0->grad[1] += gy * (1.0 - ts[i]);
                               }
                               if (p1->requires_grad) {
                                   p1->grad[0] += gx * ts[i];
                                   p1->grad[1] += gy * ts[i];
                               }
                           }
                       });
    }
    return out;
}

// Soft silhouette over the pixel grid: capsules combined with a smooth
// union, [W*H,1] in raster row-major order. The edge temperature scales
// with each bone's radius (clamped to one pixel), which keeps thin capsules
// saturated in their interior so shape gradients come from the edges alone.
inline ag::Tensor render_soft_silhouette(const AlignVariables& vars, const CameraParams& cam,
                                         const SkeletonModel& skel, int width, int height,
                                         double temperature = 1.0) {
    using namespace ag;
    const int npix = width * height;
    std::vector<double> grid(static_cast<size_t>(npix) * 2);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            grid[2 * (static_cast<size_t>(y) * width + x)] = x + 0.5;
            grid[2 * (static_cast<size_t>(y) * width + x) + 1] = y + 0.5;
        }

    Tensor uv = project_joints_tensor(vars, cam, skel);
    Tensor occupancy;  // max over capsules, which is the exact union rule
    for (int child = 1; child < kNumJoints; ++child) {
        const int parent = skel.parents[child];
        Tensor p0 = slice_rows(uv, parent, 1);  // [1,2]
        Tensor p1 = slice_rows(uv, child, 1);
        Tensor radius = affine(slice_cols(vars.beta, shape_detail::girth_group(child), 1),
                               cam.scale * shape_detail::base_radius(child), 0.0);  // [1,1]
        const double tau = temperature * std::clamp(radius.values()[0] / 6.0, 0.1, 0.75);
        Tensor s = soft_capsule_rows(grid, p0, p1, radius, tau);
        occupancy = occupancy.defined() ? max_elem(occupancy, s) : s;
    }
    return occupancy;
}

struct AlignWeights {
    double lambda_kpt = 1.0;
    double lambda_sil = 1e-3;
};

struct AlignReport {
    BodyParams params;
    std::vector<double> objective_history;
    double final_objective = 0.0;
    double final_keypoint_err = 0.0;  // max over valid keypoints, pixels
};

namespace shape_detail {

inline ag::Tensor keypoint_loss(const ag::Tensor& uv, const Keypoints2D& kpts) {
    using namespace ag;
    Tensor target = Tensor::zeros(kNumJoints, 2);
    Tensor mask = Tensor::zeros(kNumJoints, 1);
    for (int j = 0; j < kNumJoints; ++j) {
        target.at(j, 0) = kpts.x[j];
        target.at(j, 1) = kpts.y[j];
        mask.at(j, 0) = kpts.valid[j] ? 1.0 : 0.0;
    }
    return sum(mul_rowwise(row_sum(square(sub(uv, target))), mask));
}

}  // namespace shape_detail

// Joint minimization of the keypoint and soft-silhouette objectives over
// (beta, theta, root) by gradient descent with backtracking line search.
// Each parameter block's direction is normalized by its own gradient RMS so
// girth components (silhouette-only signal) keep a usable step size.
inline AlignReport align(const BodyParams& init, const Raster& silhouette_ref,
                         const Keypoints2D& keypoints, const SkeletonModel& skel,
                         AlignWeights weights = {}, int iters = 400) {
    const bool have_sil = !silhouette_ref.pixels.empty() && weights.lambda_sil > 0.0;
    if (keypoints.valid_count() < 4 && !have_sil)
        throw InsufficientKeypoints("need >= 4 valid keypoints or a silhouette");

    AlignVariables vars = AlignVariables::from(init);
    const CameraParams cam = init.camera;

    ag::Tensor sil_target;
    if (have_sil) {
        std::vector<double> ref(silhouette_ref.pixels.begin(), silhouette_ref.pixels.end());
        const int npix = static_cast<int>(ref.size());
        sil_target = ag::Tensor::from(npix, 1, std::move(ref));
    }

    auto objective = [&]() -> ag::Tensor {
        using namespace ag;
        Tensor uv = project_joints_tensor(vars, cam, skel);
        Tensor total = affine(shape_detail::keypoint_loss(uv, keypoints), weights.lambda_kpt, 0.0);
        if (have_sil) {
            Tensor soft = render_soft_silhouette(vars, cam, skel, silhouette_ref.width,
                                                 silhouette_ref.height);
            total = add(total, affine(sum(square(sub(soft, sil_target))), weights.lambda_sil, 0.0));
        }
        return total;
    };

    std::vector<ag::Tensor> blocks{vars.beta, vars.rot6, vars.root};
    double step = 0.05;
    double current = objective().item();
    AlignReport report;
    report.objective_history.push_back(current);

    int consecutive_failures = 0;
    for (int it = 0; it < iters; ++it) {
        for (auto& b : blocks) b.zero_grad();
        {
            ag::Graph g;
            ag::Tensor loss = objective();
            g.backward(loss);
        }
        // per-block RMS-normalized descent direction
        std::vector<std::vector<double>> dir(blocks.size());
        double dot_gd = 0.0;
        for (size_t b = 0; b < blocks.size(); ++b) {
            const auto& g = blocks[b].grads();
            double rms = 0.0;
            for (double v : g) rms += v * v;
            rms = std::sqrt(rms / g.size());
            const double scale = 1.0 / (rms + 1e-9);
            dir[b].resize(g.size());
            for (size_t i = 0; i < g.size(); ++i) {
                dir[b][i] = g[i] * scale;
                dot_gd += g[i] * dir[b][i];
            }
        }
        if (dot_gd <= 0.0) break;  // stationary

        std::vector<std::vector<double>> saved;
        for (auto& b : blocks) saved.push_back(b.values());
        bool accepted = false;
        double trial_step = step;
        for (int bt = 0; bt < 30; ++bt) {
            for (size_t b = 0; b < blocks.size(); ++b)
                for (size_t i = 0; i < dir[b].size(); ++i)
                    blocks[b].values()[i] = saved[b][i] - trial_step * dir[b][i];
            // project beta into its box
            for (auto& v : vars.beta.values()) v = std::clamp(v, kBetaMin, kBetaMax);
            const double candidate = objective().item();
            if (candidate < current - 1e-12 * std::abs(current)) {
                current = candidate;
                accepted = true;
                step = std::min(trial_step * 1.5, 1.0);
                break;
            }
            trial_step *= 0.5;
        }
        if (!accepted) {
            for (size_t b = 0; b < blocks.size(); ++b) blocks[b].values() = saved[b];
            step = std::max(step * 0.5, 1e-9);
            if (++consecutive_failures >= 50)
                throw Diverged("no decrease for 50 consecutive iterations");
        } else {
            consecutive_failures = 0;
        }
        report.objective_history.push_back(current);
    }

    report.params = vars.to_params(cam);
    report.final_objective = current;
    const auto uv = project_joints(report.params, skel);
    for (int j = 0; j < kNumJoints; ++j) {
        if (!keypoints.valid[j]) continue;
        const double dx = uv[j][0] - keypoints.x[j];
        const double dy = uv[j][1] - keypoints.y[j];
        report.final_keypoint_err = std::max(report.final_keypoint_err,
                                             std::sqrt(dx * dx + dy * dy));
    }
    return report;
}

// keypoints rendered from known body parameters, all valid
inline Keypoints2D keypoints_from_params(const BodyParams& params, const SkeletonModel& skel) {
    const auto uv = project_joints(params, skel);
    Keypoints2D k;
    for (int j = 0; j < kNumJoints; ++j) {
        k.x[j] = uv[j][0];
        k.y[j] = uv[j][1];
        k.valid[j] = true;
    }
    return k;
}

}  // namespace choreo
