#pragma once

#include "choreo/posemath.hpp"
#include "choreo/tensor.hpp"

namespace choreo {

struct LossWeights {
    double lambda_pos = 1.0;
    double lambda_vel = 1.0;
    double lambda_foot = 1.0;
};

// Reconstruction term: mean squared error over all coordinates.
inline ag::Tensor l_basic(const ag::Tensor& x_true, const ag::Tensor& x_pred) {
    return ag::mse(x_true, x_pred);
}

// Noise-prediction loss kernel for the epsilon-predicting stage.
inline ag::Tensor l_vg(const ag::Tensor& eps_true, const ag::Tensor& eps_pred) {
    return ag::mse(eps_true, eps_pred);
}

// Joint-position term: mean over frames of the squared joint-position error,
// summed over all 24 joints and xyz within a frame.
inline ag::Tensor l_joint(const ag::Tensor& x_true, const ag::Tensor& x_pred,
                          const SkeletonModel& skel) {
    ag::detail::check_same_shape(x_true, x_pred, "l_joint");
    ag::Tensor diff = ag::sub(fk_positions(x_true, skel), fk_positions(x_pred, skel));
    return ag::mean(ag::row_sum(ag::square(diff)));
}

// Velocity term: mean over N-1 frame pairs of the squared difference of
// first differences, summed over coordinates within a pair.
inline ag::Tensor l_vel(const ag::Tensor& x_true, const ag::Tensor& x_pred) {
    ag::detail::check_same_shape(x_true, x_pred, "l_vel");
    const int n = x_true.rows();
    if (n < 2) throw TooShort("l_vel needs at least 2 frames");
    auto first_diff = [&](const ag::Tensor& x) {
        return ag::sub(ag::slice_rows(x, 1, n - 1), ag::slice_rows(x, 0, n - 1));
    };
    return ag::mean(ag::row_sum(ag::square(ag::sub(first_diff(x_true), first_diff(x_pred)))));
}

// Foot-skate term: mean over N-1 steps of the squared foot-joint
// displacement, each foot joint's displacement gated by the predicted
// contact channel of its frame (soft labels, kept differentiable).
inline ag::Tensor l_foot(const ag::Tensor& x_pred, const SkeletonModel& skel) {
    const int n = x_pred.rows();
    if (n < 2) throw TooShort("l_foot needs at least 2 frames");
    ag::Tensor pos = fk_positions(x_pred, skel);  // [N,72]
    ag::Tensor loss;
    for (int c = 0; c < 4; ++c) {
        const int joint = kContactJoints[c];
        ag::Tensor pj = ag::slice_cols(pos, joint * 3, 3);
        ag::Tensor disp = ag::sub(ag::slice_rows(pj, 1, n - 1), ag::slice_rows(pj, 0, n - 1));
        ag::Tensor gate = ag::slice_rows(ag::slice_cols(x_pred, c, 1), 0, n - 1);  // b_hat at i
        ag::Tensor gated = ag::mul_rowwise(disp, gate);
        ag::Tensor term = ag::row_sum(ag::square(gated));  // [N-1,1]
        loss = loss.defined() ? ag::add(loss, term) : term;
    }
    return ag::mean(loss);
}

// Weighted sum of the reconstruction term and the kinematic auxiliaries.
inline ag::Tensor l_ac(const ag::Tensor& x_true, const ag::Tensor& x_pred,
                       const SkeletonModel& skel, const LossWeights& w) {
    ag::Tensor total = l_basic(x_true, x_pred);
    if (w.lambda_pos != 0.0)
        total = ag::add(total, ag::affine(l_joint(x_true, x_pred, skel), w.lambda_pos, 0.0));
    if (w.lambda_vel != 0.0)
        total = ag::add(total, ag::affine(l_vel(x_true, x_pred), w.lambda_vel, 0.0));
    if (w.lambda_foot != 0.0)
        total = ag::add(total, ag::affine(l_foot(x_pred, skel), w.lambda_foot, 0.0));
    return total;
}

// Symmetric contrastive objective over L2-normalized embedding batches
// em, ed: [N,D]. Minimized negative log-likelihood form, averaged over both
// retrieval directions. tau is a positive scalar tensor (learnable).
inline ag::Tensor contrastive_loss(const ag::Tensor& em, const ag::Tensor& ed,
                                   const ag::Tensor& tau) {
    if (em.rows() == 0 || ed.rows() == 0) throw BadBatch("empty embedding batch");
    ag::detail::check_same_shape(em, ed, "contrastive_loss");
    if (tau.size() != 1) throw ShapeMismatch("tau must be scalar");
    if (tau.item() <= 0.0) throw TauNonPositive("tau=" + std::to_string(tau.item()));
    const int n = em.rows();
    ag::Tensor sim = ag::mul_scalar(ag::matmul(em, ag::transpose(ed)), ag::recip(tau));  // [N,N]
    ag::Tensor eye = ag::Tensor::zeros(n, n);
    for (int i = 0; i < n; ++i) eye.at(i, i) = 1.0;
    auto direction = [&](const ag::Tensor& s) {
        // mean_i [ logsumexp(s_i,:) - s_ii ]
        ag::Tensor diag = ag::row_sum(ag::mul(s, eye));  // [N,1]
        return ag::mean(ag::sub(ag::logsumexp_rows(s), diag));
    };
    return ag::affine(ag::add(direction(sim), direction(ag::transpose(sim))), 0.5, 0.0);
}

inline ag::Tensor contrastive_loss(const ag::Tensor& em, const ag::Tensor& ed, double tau) {
    return contrastive_loss(em, ed, ag::Tensor::scalar(tau));
}

}  // namespace choreo
