#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "choreo/audio.hpp"
#include "grad_check.hpp"

using namespace choreo;
using ag::Tensor;

namespace {

AudioClip silence(double seconds, double rate = 48000.0) {
    AudioClip c;
    c.sample_rate = rate;
    c.samples.assign(static_cast<size_t>(seconds * rate), 0.0);
    return c;
}

void add_click(AudioClip& c, double t, double freq = 2000.0, double amp = 0.7) {
    const size_t start = static_cast<size_t>(t * c.sample_rate);
    const size_t len = static_cast<size_t>(0.03 * c.sample_rate);
    for (size_t i = 0; i < len && start + i < c.samples.size(); ++i) {
        const double tau = i / c.sample_rate;
        c.samples[start + i] += amp * std::sin(2.0 * std::numbers::pi * freq * tau) *
                                std::exp(-tau / 0.008);
    }
}

AudioClip click_track(double seconds, double hz, double phase = 0.25) {
    AudioClip c = silence(seconds);
    for (double t = phase; t < seconds; t += 1.0 / hz) add_click(c, t);
    return c;
}

}  // namespace

TEST_CASE("fft matches a naive dft oracle") {
    PhiloxRng rng(1);
    const int n = 256;
    std::vector<std::complex<double>> a(n);
    for (auto& v : a) v = {rng.normal(), rng.normal()};
    auto b = a;
    fft_pow2(b);
    for (int k = 0; k < n; k += 17) {  // spot-check bins
        std::complex<double> want{0, 0};
        for (int j = 0; j < n; ++j) {
            const double ang = -2.0 * std::numbers::pi * k * j / n;
            want += a[j] * std::complex<double>{std::cos(ang), std::sin(ang)};
        }
        CHECK(std::abs(b[k] - want) < 1e-8);
    }
    std::vector<std::complex<double>> bad(3);
    CHECK_THROWS_AS(fft_pow2(bad), ShapeMismatch);
}

TEST_CASE("wav round-trip pcm16 and float32") {
    namespace fs = std::filesystem;
    PhiloxRng rng(2);
    AudioClip c = silence(0.1);
    for (auto& v : c.samples) v = 0.8 * rng.uniform(-1.0, 1.0);
    const auto dir = fs::temp_directory_path() / "choreo_audio_test";
    fs::create_directories(dir);

    write_wav(dir / "a.wav", c, true);
    AudioClip back = read_wav(dir / "a.wav");
    REQUIRE(back.samples.size() == c.samples.size());
    CHECK(back.sample_rate == c.sample_rate);
    for (size_t i = 0; i < c.samples.size(); i += 97)
        CHECK(back.samples[i] == Catch::Approx(c.samples[i]).margin(1.0 / 32767));

    write_wav(dir / "b.wav", c, false);
    AudioClip backf = read_wav(dir / "b.wav");
    for (size_t i = 0; i < c.samples.size(); i += 97)
        CHECK(backf.samples[i] == Catch::Approx(c.samples[i]).margin(1e-7));

    CHECK_THROWS_AS(read_wav(dir / "missing.wav"), IoError);
}

TEST_CASE("onset envelope basics") {
    SECTION("silence gives all zeros") {
        auto env = onset_envelope(silence(2.0));
        for (double v : env) CHECK(v == 0.0);
    }

    SECTION("a single click yields one dominant peak at its frame") {
        AudioClip c = silence(2.0);
        add_click(c, 1.0);
        auto env = onset_envelope(c);
        int argmax = 0;
        for (int i = 1; i < static_cast<int>(env.size()); ++i)
            if (env[i] > env[argmax]) argmax = i;
        // flux index i is the transition into frame i+1; frame rate 100 fps
        const double t = (argmax + 1) / 100.0;
        CHECK(std::abs(t - 1.0) <= 0.011);
    }

    SECTION("scaling the audio does not move the argmax") {
        AudioClip c = silence(2.0);
        add_click(c, 0.7);
        auto env1 = onset_envelope(c);
        for (auto& v : c.samples) v *= 0.5;
        auto env2 = onset_envelope(c);
        const auto am = [](const std::vector<double>& e) {
            return std::max_element(e.begin(), e.end()) - e.begin();
        };
        CHECK(am(env1) == am(env2));
    }
}

TEST_CASE("detect_beats on synthetic click tracks") {
    SECTION("2 Hz clicks for 5 s give 10 beats within 15 ms") {
        auto beats = detect_beats(click_track(5.0, 2.0));
        REQUIRE(beats.size() == 10);
        for (int i = 0; i < 10; ++i) CHECK(std::abs(beats[i] - (0.25 + 0.5 * i)) <= 0.015);
    }

    SECTION("silence gives no beats") {
        CHECK(detect_beats(silence(3.0)).empty());
    }

    SECTION("1 Hz clicks give unit inter-beat intervals") {
        auto beats = detect_beats(click_track(6.0, 1.0));
        REQUIRE(beats.size() >= 5);
        for (size_t i = 1; i < beats.size(); ++i)
            CHECK(beats[i] - beats[i - 1] == Catch::Approx(1.0).margin(0.02));
    }

    SECTION("beat times are strictly increasing within the clip") {
        auto c = click_track(5.0, 2.7);
        auto beats = detect_beats(c);
        for (size_t i = 1; i < beats.size(); ++i) CHECK(beats[i] > beats[i - 1]);
        for (double b : beats) {
            CHECK(b >= 0.0);
            CHECK(b <= c.duration());
        }
    }

    SECTION("too-short clip throws") {
        CHECK_THROWS_AS(detect_beats(silence(0.5)), TooShort);
    }
}

TEST_CASE("chunk_for_fusion branch behavior") {
    SECTION("T = d is a pass-through with no padding") {
        auto c = click_track(5.0, 2.0);
        auto chunks = chunk_for_fusion(c, 5.0, 1);
        auto direct = log_mel(c);
        REQUIRE(chunks.global.frames == direct.frames);
        CHECK(chunks.global.data == direct.data);
        for (const auto& l : chunks.locals) CHECK(l.data == chunks.global.data);
    }

    SECTION("T=2, d=5 repeats twice and zero-pads one second") {
        AudioClip c = silence(2.0);
        add_click(c, 0.5);
        auto chunks = chunk_for_fusion(c, 5.0, 1);
        CHECK(chunks.global.frames == 500);
        // [4,5) is zero padding, so its energy sits at the silence floor
        double tail = 0.0, head = 0.0;
        for (int t = 420; t < 490; ++t)
            for (int b = 0; b < chunks.global.bands; ++b) tail += chunks.global.at(t, b);
        for (int t = 10; t < 80; ++t)
            for (int b = 0; b < chunks.global.bands; ++b) head += chunks.global.at(t, b);
        CHECK(tail < head);
    }

    SECTION("T=15 draws one deterministic slice from each third") {
        AudioClip c = click_track(15.0, 1.0);
        auto a = chunk_for_fusion(c, 5.0, 42);
        auto b = chunk_for_fusion(c, 5.0, 42);
        CHECK(a.local_starts == b.local_starts);
        auto d = chunk_for_fusion(c, 5.0, 43);
        CHECK(a.local_starts != d.local_starts);
        for (int i = 0; i < 3; ++i) {
            CHECK(a.local_starts[i] >= std::max(0.0, 15.0 * i / 3.0 - 1e-9));
            CHECK(a.local_starts[i] <= 15.0 - 5.0 + 1e-9);
        }
        // every block spans exactly d seconds of frames
        CHECK(a.global.frames == 500);
        for (const auto& l : a.locals) CHECK(l.frames == 500);
    }
}

TEST_CASE("fuse_features convexity") {
    PhiloxRng rng(3);
    Tensor g = gradcheck::random_tensor(6, 4, rng);
    Tensor l = gradcheck::random_tensor(6, 4, rng);

    Tensor ones = Tensor::full(6, 4, 1.0);
    Tensor zeros = Tensor::zeros(6, 4);
    CHECK(fuse_features(g, l, ones).values() == g.values());
    CHECK(fuse_features(g, l, zeros).values() == l.values());

    Tensor mid = Tensor::full(6, 4, 0.37);
    Tensor fused = fuse_features(g, g, mid);
    for (size_t i = 0; i < fused.size(); ++i)
        CHECK(fused.values()[i] == Catch::Approx(g.values()[i]));

    // output lies between the inputs elementwise for alpha in [0,1]
    Tensor alpha = Tensor::zeros(6, 4);
    for (auto& v : alpha.values()) v = rng.uniform();
    Tensor out = fuse_features(g, l, alpha);
    for (size_t i = 0; i < out.size(); ++i) {
        const double lo = std::min(g.values()[i], l.values()[i]);
        const double hi = std::max(g.values()[i], l.values()[i]);
        CHECK(out.values()[i] >= lo - 1e-12);
        CHECK(out.values()[i] <= hi + 1e-12);
    }
}

TEST_CASE("merge_locals with an averaging kernel reproduces identical blocks") {
    PhiloxRng rng(4);
    nn::ParamStore store;
    LocalMerger merger(store, "m");
    Tensor block = gradcheck::random_tensor(10, 8, rng);
    Tensor out = merger(block, block, block);
    REQUIRE(out.rows() == block.rows());  // time length preserved
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out.values()[i] == Catch::Approx(block.values()[i]).margin(1e-12));
}

TEST_CASE("gradients flow through merger and gate") {
    PhiloxRng rng(5);
    nn::ParamStore store;
    LocalMerger merger(store, "m");
    FusionGate gate(store, "g", 6, 8, rng);
    Tensor l0 = gradcheck::random_tensor(4, 6, rng);
    Tensor l1 = gradcheck::random_tensor(4, 6, rng);
    Tensor l2 = gradcheck::random_tensor(4, 6, rng);
    Tensor g = gradcheck::random_tensor(4, 6, rng);

    auto loss = [&] {
        return ag::mean(ag::square(fuse_features(g, merger(l0, l1, l2), gate)));
    };
    auto res = gradcheck::check(loss, {l0, g, merger.kernel, merger.bias, gate.l1.w, gate.l2.w},
                                1e-4, 30, 6);
    INFO("fusion grad max rel err " << res.max_rel_err);
    CHECK(res.max_rel_err < 1e-4);
}
