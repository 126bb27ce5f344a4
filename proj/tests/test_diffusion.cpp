#include <catch2/catch_amalgamated.hpp>

#include "choreo/diffusion.hpp"

using namespace choreo;
using ag::Tensor;

TEST_CASE("schedules satisfy the invariants") {
    for (int T : {10, 50, 1000}) {
        auto s = DiffusionSchedule::cosine(T);
        CHECK(s.alpha_bar[0] == 1.0);
        for (int t = 1; t <= T; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        CHECK(s.alpha_bar[T] > 0.0);
        CHECK(s.alpha_bar[T] < 0.01);
        // snr monotone decreasing
        for (int t = 2; t <= T; ++t) {
            const double snr_prev = s.alpha_bar[t - 1] / (1 - s.alpha_bar[t - 1]);
            const double snr = s.alpha_bar[t] / (1 - s.alpha_bar[t]);
            CHECK(snr < snr_prev);
        }
    }
    auto lin = DiffusionSchedule::linear(1000);
    CHECK(lin.alpha_bar[1000] < 0.01);
    CHECK(lin.beta[1] == Catch::Approx(1e-4));
    auto lin50 = DiffusionSchedule::linear(50);
    CHECK(lin50.alpha_bar[50] < 0.01);
}

TEST_CASE("forward_noise at t=0 returns z0 exactly") {
    auto sched = DiffusionSchedule::cosine(50);
    Tensor z0 = Tensor::from(2, 3, {1, -2, 3, 0.5, 0, -1});
    Tensor eps = Tensor::from(2, 3, {9, 9, 9, 9, 9, 9});
    Tensor zt = forward_noise(z0, 0, eps, sched);
    CHECK(zt.values() == z0.values());
}

TEST_CASE("forward_noise matches the closed form at alpha_bar=0.25") {
    // build a schedule and pick a t, then verify against a hand evaluation
    auto sched = DiffusionSchedule::cosine(50);
    // force a known alpha_bar for the scalar check
    DiffusionSchedule s = sched;
    s.alpha_bar[7] = 0.25;
    Tensor z0 = Tensor::scalar(2.0);
    Tensor eps = Tensor::scalar(1.0);
    Tensor zt = forward_noise(z0, 7, eps, s);
    CHECK(zt.item() == Catch::Approx(0.5 * 2.0 + std::sqrt(0.75) * 1.0).epsilon(1e-12));
    CHECK(zt.item() == Catch::Approx(1.8660).margin(5e-5));
}

TEST_CASE("forward_noise rejects out-of-range steps") {
    auto sched = DiffusionSchedule::cosine(10);
    PhiloxRng rng(0);
    Tensor z0 = Tensor::scalar(1.0), eps = Tensor::scalar(0.0);
    CHECK_THROWS_AS(forward_noise(z0, -1, eps, sched), StepOutOfRange);
    CHECK_THROWS_AS(forward_noise(z0, 11, eps, sched), StepOutOfRange);
    CHECK_THROWS_AS(reverse_step_xpred(z0, 0, z0, sched, rng), StepOutOfRange);
}

TEST_CASE("forward_noise is linear and norm-scaling") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng(1);
    Tensor z0 = gaussian_like(4, 5, rng);
    Tensor zero = Tensor::zeros(4, 5);
    const int t = 20;
    Tensor noiseless = forward_noise(z0, t, zero, sched);
    double n0 = 0, n1 = 0;
    for (size_t i = 0; i < z0.size(); ++i) {
        n0 += z0.values()[i] * z0.values()[i];
        n1 += noiseless.values()[i] * noiseless.values()[i];
    }
    CHECK(std::sqrt(n1) == Catch::Approx(std::sqrt(sched.alpha_bar[t]) * std::sqrt(n0)));
}

TEST_CASE("variance preservation over 1e5 draws") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng(2);
    const int t = 25;
    const int n = 100000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        Tensor z0 = Tensor::scalar(rng.normal());
        Tensor eps = Tensor::scalar(rng.normal());
        const double v = forward_noise(z0, t, eps, sched).item();
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("reverse step posterior mean is consistent with the forward chain") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng(3);
    Tensor z0 = gaussian_like(3, 4, rng);
    Tensor zero = Tensor::zeros(3, 4);
    for (int t : {1, 10, 30, 50}) {
        Tensor zt = forward_noise(z0, t, zero, sched);
        // with x_hat = z0 and t=1 the step is deterministic; for t>1 only the
        // mean matters, so draw with a zero-noise trick: t=1 case and mean check
        // via large-sample average is overkill -- use the coefficients directly
        const double ab_t = sched.alpha_bar[t];
        const double ab_prev = sched.alpha_bar[t - 1];
        const double beta_t = sched.beta[t];
        const double coef_x0 = std::sqrt(ab_prev) * beta_t / (1 - ab_t);
        const double coef_zt = std::sqrt(1 - beta_t) * (1 - ab_prev) / (1 - ab_t);
        Tensor want = forward_noise(z0, t - 1, zero, sched);
        for (size_t i = 0; i < z0.size(); ++i) {
            const double mu = coef_x0 * z0.values()[i] + coef_zt * zt.values()[i];
            CHECK(mu == Catch::Approx(want.values()[i]).margin(1e-12));
        }
    }
}

TEST_CASE("reverse step at t=1 is deterministic") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng1(5), rng2(77);
    Tensor zt = Tensor::from(1, 2, {0.3, -0.8});
    Tensor xh = Tensor::from(1, 2, {0.1, 0.2});
    Tensor a = reverse_step_xpred(zt, 1, xh, sched, rng1);
    Tensor b = reverse_step_xpred(zt, 1, xh, sched, rng2);
    CHECK(a.values() == b.values());
}

TEST_CASE("oracle denoiser reconstructs z0 through the full reverse chain") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng(6);
    Tensor z0 = gaussian_like(2, 6, rng);
    Denoiser oracle = [&](const Tensor&, int) { return z0; };
    Tensor out = sample_chain(oracle, 2, 6, sched, rng);
    for (size_t i = 0; i < z0.size(); ++i)
        CHECK(out.values()[i] == Catch::Approx(z0.values()[i]).margin(1e-4));
}

TEST_CASE("masked_constrain select semantics") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng(7);
    Tensor x_tm1 = gaussian_like(2, kPoseDim, rng);
    Tensor x_start = gaussian_like(2, kPoseDim, rng);

    SECTION("all-ones mask at t=1 returns x_start exactly") {
        PoseMask mask = PoseMask::zeros(2, kPoseDim);
        mask.set_frames(0, 2);
        Tensor out = masked_constrain(x_tm1, x_start, mask, 1, sched, rng);
        CHECK(out.values() == x_start.values());
    }

    SECTION("all-zeros mask leaves x_tm1 unchanged") {
        PoseMask mask = PoseMask::zeros(2, kPoseDim);
        Tensor out = masked_constrain(x_tm1, x_start, mask, 30, sched, rng);
        CHECK(out.values() == x_tm1.values());
    }

    SECTION("masked coordinates follow the forward marginal at t-1") {
        // Monte Carlo moment check on one masked coordinate
        PoseMask mask = PoseMask::zeros(1, kPoseDim);
        mask.m[0] = 1;
        const int t = 20;
        const double ab = sched.alpha_bar[t - 1];
        Tensor xs = Tensor::zeros(1, kPoseDim);
        xs.values()[0] = 1.7;
        Tensor xt = Tensor::zeros(1, kPoseDim);
        const int n = 20000;
        double sum = 0, sum2 = 0;
        for (int i = 0; i < n; ++i) {
            Tensor out = masked_constrain(xt, xs, mask, t, sched, rng);
            sum += out.values()[0];
            sum2 += out.values()[0] * out.values()[0];
        }
        const double mean = sum / n;
        const double var = sum2 / n - mean * mean;
        CHECK(mean == Catch::Approx(std::sqrt(ab) * 1.7).margin(0.02));
        CHECK(var == Catch::Approx(1.0 - ab).margin(0.03));
    }
}

TEST_CASE("constrained chain ends with masked coordinates equal to x_start") {
    auto sched = DiffusionSchedule::cosine(50);
    PhiloxRng rng(8);
    Tensor x_start = gaussian_like(4, kPoseDim, rng);
    PoseMask mask = PoseMask::zeros(4, kPoseDim);
    mask.set_frames(0, 1);
    Denoiser noisy = [&](const Tensor& z, int) { return z.detach(); };
    Tensor out = sample_chain(noisy, 4, kPoseDim, sched, rng, &x_start, &mask);
    for (int j = 0; j < kPoseDim; ++j) CHECK(out.at(0, j) == x_start.at(0, j));
}

TEST_CASE("stitch_generate overlap contracts") {
    auto sched = DiffusionSchedule::cosine(8);
    PhiloxRng seq_rng(9);
    // denoiser that produces deterministic per-frame values so we can see
    // where windows land; constrained regions must win bit-exactly
    Denoiser toy = [&](const Tensor& z, int) {
        Tensor out = Tensor::zeros(z.rows(), z.cols());
        for (int i = 0; i < z.rows(); ++i)
            for (int j = 0; j < z.cols(); ++j) out.at(i, j) = 0.01 * i - 0.001 * j;
        return out;
    };

    SECTION("single clip with empty tail is plain sampling") {
        MotionSequence empty;
        auto seq = stitch_generate(toy, empty, 150, sched, seq_rng);
        CHECK(seq.frame_count() == 150);
    }

    SECTION("225-frame request enforces the 75-frame overlap exactly") {
        MotionSequence empty;
        PhiloxRng r1(10);
        auto seq = stitch_generate(toy, empty, 225, sched, r1);
        REQUIRE(seq.frame_count() == 225);
        // the second window [75,225) was constrained on frames [75,150):
        // those frames came out of the first window and must be unchanged.
        // regenerate with the same rng to fetch the first window alone
        PhiloxRng r2(10);
        auto first = stitch_generate(toy, empty, 150, sched, r2);
        for (int i = 75; i < 150; ++i) {
            auto a = pose_pack(seq.frames[i]);
            auto b = pose_pack(first.frames[i]);
            CHECK(a == b);
        }
    }

    SECTION("three-clip chain keeps every constrained overlap") {
        MotionSequence empty;
        PhiloxRng r1(11);
        auto seq = stitch_generate(toy, empty, 300, sched, r1);
        CHECK(seq.frame_count() == 300);
    }

    SECTION("prev_tail is reproduced verbatim and validated") {
        PhiloxRng r(12);
        MotionSequence tail;
        tail.frames.resize(30);
        for (auto& f : tail.frames) {
            std::vector<double> v(kPoseDim);
            for (auto& x : v) x = r.normal();
            f = pose_unpack(v);
        }
        auto seq = stitch_generate(toy, tail, 200, sched, r);
        REQUIRE(seq.frame_count() == 200);
        for (int i = 0; i < 30; ++i) CHECK(pose_pack(seq.frames[i]) == pose_pack(tail.frames[i]));

        MotionSequence too_long;
        too_long.frames.resize(151);
        CHECK_THROWS_AS(stitch_generate(toy, too_long, 300, sched, r), BadOverlap);
    }
}
