#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "choreo/posemath.hpp"
#include "choreo/rng.hpp"
#include "choreo/tensor.hpp"

namespace choreo {

enum class ScheduleKind { cosine, linear };

// DDPM variance schedule: alpha_bar[0..T] with alpha_bar[0] = 1, plus the
// per-step betas consistent with it (alpha_bar[t] = alpha_bar[t-1]*(1-beta[t])).
struct DiffusionSchedule {
    int T = 0;
    std::vector<double> alpha_bar;  // size T+1
    std::vector<double> beta;       // size T+1, beta[0] unused

    static DiffusionSchedule cosine(int T) {
        const double s = 0.008;
        auto f = [&](double t) {
            const double v = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
            return v * v;
        };
        std::vector<double> raw(T + 1);
        for (int t = 0; t <= T; ++t) raw[t] = f(t) / f(0.0);
        DiffusionSchedule sched;
        sched.T = T;
        sched.beta.assign(T + 1, 0.0);
        sched.alpha_bar.assign(T + 1, 1.0);
        for (int t = 1; t <= T; ++t) {
            double b = 1.0 - raw[t] / raw[t - 1];
            b = std::min(b, 0.999);
            sched.beta[t] = b;
            sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - b);
        }
        sched.validate();
        return sched;
    }

    static DiffusionSchedule linear(int T) {
        // classic 1e-4..0.02 range at T=1000, rescaled for other step counts
        const double scale = 1000.0 / T;
        DiffusionSchedule sched;
        sched.T = T;
        sched.beta.assign(T + 1, 0.0);
        sched.alpha_bar.assign(T + 1, 1.0);
        for (int t = 1; t <= T; ++t) {
            double b = scale * (1e-4 + (0.02 - 1e-4) * (t - 1) / std::max(1, T - 1));
            b = std::min(b, 0.999);
            sched.beta[t] = b;
            sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - b);
        }
        sched.validate();
        return sched;
    }

    static DiffusionSchedule make(ScheduleKind kind, int T) {
        return kind == ScheduleKind::cosine ? cosine(T) : linear(T);
    }

    double alpha(int t) const { return 1.0 - beta[t]; }

    void validate() const {
        if (T < 1) throw BadSchedule("T must be >= 1");
        if (alpha_bar.size() != static_cast<size_t>(T + 1)) throw BadSchedule("alpha_bar size");
        if (alpha_bar[0] != 1.0) throw BadSchedule("alpha_bar[0] must be 1");
        for (int t = 1; t <= T; ++t)
            if (!(alpha_bar[t] < alpha_bar[t - 1]) || !(alpha_bar[t] > 0.0))
                throw BadSchedule("alpha_bar must be strictly decreasing and positive");
        if (!(alpha_bar[T] < 0.01)) throw BadSchedule("alpha_bar[T] must fall below 0.01");
    }
};

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps
inline ag::Tensor forward_noise(const ag::Tensor& z0, int t, const ag::Tensor& eps,
                                const DiffusionSchedule& sched) {
    if (t < 0 || t > sched.T) throw StepOutOfRange("t=" + std::to_string(t));
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols())
        throw ShapeMismatch("forward_noise z0/eps");
    const double a = std::sqrt(sched.alpha_bar[t]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
    return ag::add(ag::affine(z0, a, 0.0), ag::affine(eps, b, 0.0));
}

inline ag::Tensor gaussian_like(int rows, int cols, PhiloxRng& rng) {
    ag::Tensor t = ag::Tensor::zeros(rows, cols);
    for (auto& v : t.values()) v = rng.normal();
    return t;
}

// One reverse step of the x-prediction DDPM chain: sample z_{t-1} from the
// posterior q(z_{t-1} | z_t, x_hat). At t=1 the posterior mean is returned
// with no added noise.
inline ag::Tensor reverse_step_xpred(const ag::Tensor& z_t, int t, const ag::Tensor& x_hat,
                                     const DiffusionSchedule& sched, PhiloxRng& rng) {
    if (t < 1 || t > sched.T) throw StepOutOfRange("t=" + std::to_string(t));
    if (z_t.rows() != x_hat.rows() || z_t.cols() != x_hat.cols())
        throw ShapeMismatch("reverse_step_xpred z_t/x_hat");
    const double ab_t = sched.alpha_bar[t];
    const double ab_prev = sched.alpha_bar[t - 1];
    const double beta_t = sched.beta[t];
    const double alpha_t = 1.0 - beta_t;
    const double coef_x0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    const double coef_zt = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
    const double post_var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t;

    ag::Tensor out = ag::Tensor::zeros(z_t.rows(), z_t.cols());
    const double sigma = t > 1 ? std::sqrt(post_var) : 0.0;
    for (size_t i = 0; i < out.size(); ++i) {
        double v = coef_x0 * x_hat.values()[i] + coef_zt * z_t.values()[i];
        if (sigma > 0.0) v += sigma * rng.normal();
        out.values()[i] = v;
    }
    return out;
}

// Binary mask over an N x 151 sequence; 1 marks a known coordinate.
struct PoseMask {
    int rows = 0, cols = 0;
    std::vector<uint8_t> m;

    static PoseMask zeros(int rows, int cols) {
        PoseMask pm;
        pm.rows = rows;
        pm.cols = cols;
        pm.m.assign(static_cast<size_t>(rows) * cols, 0);
        return pm;
    }

    // mark all coordinates of frames [start, start+len)
    void set_frames(int start, int len) {
        for (int i = start; i < start + len; ++i)
            for (int j = 0; j < cols; ++j) m[static_cast<size_t>(i) * cols + j] = 1;
    }

    bool any() const {
        for (uint8_t b : m)
            if (b) return true;
        return false;
    }
};

// Masked constraint on a reverse step (RePaint convention): known coordinates
// are replaced by a fresh forward-diffused sample of x_start at step t-1.
// Replacement is a select, not a blend, so at t=1 the known region equals
// x_start bit-exactly.
inline ag::Tensor masked_constrain(const ag::Tensor& x_tm1, const ag::Tensor& x_start,
                                   const PoseMask& mask, int t, const DiffusionSchedule& sched,
                                   PhiloxRng& rng) {
    if (x_tm1.rows() != x_start.rows() || x_tm1.cols() != x_start.cols())
        throw ShapeMismatch("masked_constrain x_tm1/x_start");
    if (mask.rows != x_tm1.rows() || mask.cols != x_tm1.cols())
        throw ShapeMismatch("masked_constrain mask shape");
    if (t < 1 || t > sched.T) throw StepOutOfRange("t=" + std::to_string(t));
    const double a = std::sqrt(sched.alpha_bar[t - 1]);
    const double b = std::sqrt(1.0 - sched.alpha_bar[t - 1]);
    ag::Tensor out = ag::Tensor::from(x_tm1.rows(), x_tm1.cols(), x_tm1.values());
    for (size_t i = 0; i < out.size(); ++i) {
        if (mask.m[i]) {
            double v = a * x_start.values()[i];
            if (b > 0.0) v += b * rng.normal();
            out.values()[i] = v;
        }
    }
    return out;
}

// Denoiser callback: predicts the clean sequence from (z_t, t).
using Denoiser = std::function<ag::Tensor(const ag::Tensor&, int)>;

// Full reverse chain over an n_frames x 151 latent, optionally constrained.
inline ag::Tensor sample_chain(const Denoiser& denoise, int n_frames, int dim,
                               const DiffusionSchedule& sched, PhiloxRng& rng,
                               const ag::Tensor* x_start = nullptr,
                               const PoseMask* mask = nullptr) {
    ag::Tensor z = gaussian_like(n_frames, dim, rng);
    for (int t = sched.T; t >= 1; --t) {
        ag::Tensor x_hat = denoise(z, t);
        z = reverse_step_xpred(z, t, x_hat, sched, rng);
        if (x_start && mask && mask->any()) z = masked_constrain(z, *x_start, *mask, t, sched, rng);
    }
    return z;
}

// Arbitrary-length generation by overlapped clips: each window beyond the
// first is sampled with its leading frames masked to the frames already
// generated, and the duplicated overlap is dropped on concatenation. The
// output's first prev_tail.frames frames equal prev_tail exactly.
inline MotionSequence stitch_generate(const Denoiser& denoise, const MotionSequence& prev_tail,
                                      int total_frames, const DiffusionSchedule& sched,
                                      PhiloxRng& rng, int clip_frames = 150, int overlap = 75,
                                      double fps = 30.0) {
    if (prev_tail.frame_count() > clip_frames)
        throw BadOverlap("prev_tail longer than one clip (" +
                         std::to_string(prev_tail.frame_count()) + " > " +
                         std::to_string(clip_frames) + ")");
    if (total_frames < 1) throw BadLength("total_frames must be >= 1");

    ag::Tensor canvas = ag::Tensor::zeros(total_frames, kPoseDim);
    int done = 0;  // frames of canvas that are final
    if (prev_tail.frame_count() > 0) {
        ag::Tensor tail = to_tensor(prev_tail);
        for (int i = 0; i < std::min(total_frames, tail.rows()); ++i)
            for (int j = 0; j < kPoseDim; ++j) canvas.at(i, j) = tail.at(i, j);
        done = std::min(total_frames, tail.rows());
    }

    while (done < total_frames) {
        int start = done == 0 ? 0 : done - std::min(overlap, done);
        int len = std::min(clip_frames, total_frames - start);
        // keep windows full-length when possible so the model sees its
        // training-time clip size
        if (len < clip_frames && start > 0) {
            start = std::max(0, total_frames - clip_frames);
            len = total_frames - start;
        }
        const int known = done - start;  // leading frames already final

        ag::Tensor x_start = ag::Tensor::zeros(len, kPoseDim);
        PoseMask mask = PoseMask::zeros(len, kPoseDim);
        if (known > 0) {
            for (int i = 0; i < known; ++i)
                for (int j = 0; j < kPoseDim; ++j) x_start.at(i, j) = canvas.at(start + i, j);
            mask.set_frames(0, known);
        }
        ag::Tensor clip = sample_chain(denoise, len, kPoseDim, sched, rng,
                                       known > 0 ? &x_start : nullptr, known > 0 ? &mask : nullptr);
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < kPoseDim; ++j) canvas.at(start + i, j) = clip.at(i, j);
        done = start + len;
    }
    return from_tensor(canvas, fps);
}

}  // namespace choreo
