#include <catch2/catch_amalgamated.hpp>

#include "choreo/corpus.hpp"
#include "choreo/encoders.hpp"
#include "grad_check.hpp"

using namespace choreo;
using ag::Tensor;

namespace {

double norm(const Tensor& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

double cosine(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s / (norm(a) * norm(b));
}

std::vector<MotionTuneItem> build_items(int genres, int per_genre, uint64_t seed,
                                        const SkeletonModel& skel) {
    std::vector<MotionTuneItem> items;
    int idx = 0;
    for (int g = 0; g < genres; ++g)
        for (int i = 0; i < per_genre; ++i, ++idx) {
            SynthItem s = synth_item(g, i % 3, item_seed(seed, g, idx));
            items.push_back({music_features(s.clip), pose_features(s.dance, skel),
                             text_features(s.text)});
        }
    return items;
}

}  // namespace

TEST_CASE("text features are order-free and reject empty styles") {
    Tensor a = text_features("House: side kick");
    Tensor b = text_features("kick side House");
    CHECK(a.values() == b.values());
    CHECK_THROWS_AS(text_features("  :!  "), EmptyStyle);
    Tensor c = text_features("House: lose legs");
    CHECK(a.values() != c.values());
}

TEST_CASE("music and dance embeddings are unit norm and deterministic") {
    auto skel = SkeletonModel::standard();
    SynthItem item = synth_item(3, 1, 5);
    MotionTune model(7);
    Tensor e1 = model.encode_music(item.clip);
    Tensor e2 = model.encode_music(item.clip);
    CHECK(e1.values() == e2.values());
    CHECK(norm(e1) == Catch::Approx(1.0).margin(1e-6));
    REQUIRE(e1.cols() == kEmbedDim);

    Tensor d1 = model.encode_dance(item.dance, skel, item.text);
    CHECK(norm(d1) == Catch::Approx(1.0).margin(1e-6));

    MotionTune other(8);
    Tensor e3 = other.encode_music(item.clip);
    CHECK(e1.values() != e3.values());

    AudioClip tiny;
    tiny.sample_rate = 48000;
    tiny.samples.assign(100, 0.0);
    CHECK_THROWS_AS(model.encode_music(tiny), TooShort);
}

TEST_CASE("motiontune training converges on a 64-pair synthetic corpus") {
    auto skel = SkeletonModel::standard();
    // 10 genres; 64 items total: 6 per genre for the first 4, 7 for the rest
    std::vector<MotionTuneItem> items;
    int idx = 0;
    for (int g = 0; g < 10; ++g) {
        const int n = g < 6 ? 6 : 7;
        for (int i = 0; i < n; ++i, ++idx) {
            SynthItem s = synth_item(g, i % 3, item_seed(2024, g, idx));
            items.push_back({music_features(s.clip), pose_features(s.dance, skel),
                             text_features(s.text)});
        }
    }
    REQUIRE(items.size() == 64);

    MotionTune model(11);
    auto report = train_motiontune(model, items, 300);

    // loss falls below its starting value within one epoch and keeps falling
    REQUIRE(report.loss_history.size() == 300);
    CHECK(report.loss_history[1] < report.loss_history[0]);
    CHECK(report.loss_history.back() < 0.5 * report.loss_history.front());

    INFO("retrieval r@1 " << report.retrieval_r1);
    CHECK(report.retrieval_r1 >= 0.9);

    // tau stays within its clamp bounds
    const double tau = model.tau().item();
    CHECK(tau >= MotionTune::kTauMin);
    CHECK(tau <= MotionTune::kTauMax);

    std::vector<MotionTuneItem> small(items.begin(), items.begin() + 4);
    CHECK_THROWS_AS(train_motiontune(model, small, 1), BadCorpus);
}

TEST_CASE("trained encoders separate matched from mismatched pairs") {
    auto skel = SkeletonModel::standard();
    auto items = build_items(4, 4, 77, skel);
    MotionTune model(13);
    train_motiontune(model, items, 250);

    double matched = 0, mismatched = 0;
    int mm = 0;
    std::vector<Tensor> ems, eds;
    for (const auto& it : items) {
        ems.push_back(model.music(it.music));
        eds.push_back(model.dance(it.pose_feats, it.text_feats));
    }
    for (size_t i = 0; i < items.size(); ++i) {
        matched += cosine(ems[i], eds[i]);
        for (size_t j = 0; j < items.size(); ++j)
            if (i != j) {
                mismatched += cosine(ems[i], eds[j]);
                ++mm;
            }
    }
    matched /= items.size();
    mismatched /= mm;
    INFO("matched " << matched << " mismatched " << mismatched);
    CHECK(matched - mismatched >= 0.2);
}

TEST_CASE("dance embeddings depend on the style text after training") {
    auto skel = SkeletonModel::standard();
    auto items = build_items(4, 4, 55, skel);
    MotionTune model(17);
    train_motiontune(model, items, 250);

    SynthItem s = synth_item(1, 0, 123);
    Tensor a = model.encode_dance(s.dance, skel, "Pop: hand wave");
    Tensor b = model.encode_dance(s.dance, skel, "House: side kick");
    CHECK(cosine(a, b) < 0.999);
}

TEST_CASE("genre classifier") {
    SECTION("zero final layer gives uniform probabilities; ties break low") {
        GenreModel model({"a", "b", "c", "d"}, 3);
        for (auto& v : model.f3.w.values()) v = 0.0;
        for (auto& v : model.f3.b.values()) v = 0.0;
        SynthItem s = synth_item(0, 0, 9);
        auto res = classify_genre(model, s.clip);
        for (double p : res.probs) CHECK(p == Catch::Approx(0.25).margin(1e-9));
        CHECK(res.caption == "a");
        REQUIRE(res.e_c.cols() == kGenreFeatDim);
    }

    SECTION("trained model separates two tempo/timbre genres at >= 95%") {
        // genres 0 (1 Hz) and 4 (2 Hz): distinct tempo and noise bands
        std::vector<GenreTrainItem> corpus;
        std::vector<AudioClip> clips;
        std::vector<int> labels;
        int idx = 0;
        for (int g : {0, 4})
            for (int i = 0; i < 8; ++i, ++idx) {
                SynthItem s = synth_item(g, i % 3, item_seed(300, g, idx));
                corpus.push_back({GenreChunks::from(chunk_for_fusion(s.clip, 5.0, idx)),
                                  g == 0 ? 0 : 1});
                clips.push_back(s.clip);
                labels.push_back(g == 0 ? 0 : 1);
            }
        GenreModel model({"break", "house"}, 21);
        auto history = train_genre_model(model, corpus, 60, 3e-3);
        CHECK(history.back() < history.front());

        int correct = 0;
        for (size_t i = 0; i < clips.size(); ++i) {
            auto res = classify_genre(model, clips[i], i);
            double sum = 0;
            for (double p : res.probs) sum += p;
            CHECK(sum == Catch::Approx(1.0).margin(1e-6));
            correct += (res.caption == model.classes[labels[i]]);
        }
        INFO("accuracy " << correct << "/" << clips.size());
        CHECK(correct >= static_cast<int>(clips.size() * 95 / 100));
    }
}

TEST_CASE("style controller") {
    StyleController ctrl(31);

    SECTION("deterministic given weights and inputs") {
        PhiloxRng rng(1);
        Tensor e_c = gradcheck::random_tensor(1, kGenreFeatDim, rng);
        Tensor a = ctrl(e_c, "House: side kick");
        Tensor b = ctrl(e_c, "House: side kick");
        CHECK(a.values() == b.values());
        REQUIRE(a.cols() == kEmbedDim);
    }

    SECTION("zero inputs with zero biases give zero output") {
        Tensor e_c = Tensor::zeros(1, kGenreFeatDim);
        Tensor text = Tensor::zeros(1, kTextDim);
        Tensor out = ctrl.apply(e_c, text);
        for (double v : out.values()) CHECK(v == Catch::Approx(0.0).margin(1e-12));
    }

    SECTION("empty style throws") {
        Tensor e_c = Tensor::zeros(1, kGenreFeatDim);
        CHECK_THROWS_AS(ctrl(e_c, ""), EmptyStyle);
    }

    SECTION("gradient check through the attention fusion") {
        PhiloxRng rng(3);
        Tensor e_c = gradcheck::random_tensor(1, kGenreFeatDim, rng);
        Tensor text = gradcheck::random_tensor(1, kTextDim, rng, 0.5);
        auto res = gradcheck::check(
            [&] { return ag::mean(ag::square(ctrl.apply(e_c, text))); },
            {e_c, text, ctrl.self_attn.wq.w, ctrl.cross_attn.wq.w, ctrl.text_mlp.w}, 1e-4, 25, 9);
        INFO("style grad max rel err " << res.max_rel_err);
        CHECK(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("build_condition concatenates music and style parts") {
    PhiloxRng rng(4);
    Tensor e_m = gradcheck::random_tensor(1, kEmbedDim, rng);
    Tensor s = gradcheck::random_tensor(1, kEmbedDim, rng);
    Tensor e = build_condition(e_m, s);
    REQUIRE(e.cols() == kConditionDim);
    for (int k = 0; k < kEmbedDim; ++k) {
        CHECK(e.at(0, k) == e_m.at(0, k));
        CHECK(e.at(0, kEmbedDim + k) == s.at(0, k));
    }
    Tensor zero = Tensor::zeros(1, kEmbedDim);
    Tensor ez = build_condition(zero, zero);
    for (double v : ez.values()) CHECK(v == 0.0);
    Tensor bad = Tensor::zeros(1, 32);
    CHECK_THROWS_AS(build_condition(bad, s), ShapeMismatch);
}
