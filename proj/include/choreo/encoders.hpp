#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "choreo/audio.hpp"
#include "choreo/losses.hpp"
#include "choreo/metrics.hpp"
#include "choreo/nn.hpp"
#include "choreo/posemath.hpp"

namespace choreo {

constexpr int kEmbedDim = 64;
constexpr int kConditionDim = 2 * kEmbedDim;
constexpr int kMelStatsDim = 128;   // per-band mean and std
constexpr int kSpecStatsDim = 20;   // envelope autocorrelation + scalar stats
constexpr int kPoseFeatDim = kFeatureDim + 10;  // motion features + root/contact stats
constexpr int kTextDim = 64;
constexpr int kGenreFeatDim = 96;   // concatenated last two classifier layers

// ---- plain input featurizers (no gradients flow into these) ----

struct MusicFeatures {
    ag::Tensor mel_stats;   // [1,128]
    ag::Tensor spec_stats;  // [1,20]
};

inline MusicFeatures music_features(const AudioClip& clip) {
    if (clip.duration() < 1.0) throw TooShort("music clip shorter than 1 s");
    SpectralFeatures mel = log_mel(clip);
    ag::Tensor stats = ag::Tensor::zeros(1, kMelStatsDim);
    for (int b = 0; b < mel.bands; ++b) {
        double m = 0, s2 = 0;
        for (int t = 0; t < mel.frames; ++t) m += mel.at(t, b);
        m /= mel.frames;
        for (int t = 0; t < mel.frames; ++t) s2 += (mel.at(t, b) - m) * (mel.at(t, b) - m);
        stats.at(0, b) = m;
        stats.at(0, 64 + b) = std::sqrt(s2 / mel.frames);
    }

    // rhythm and timbre summary: normalized autocorrelation of the onset
    // envelope at 16 lags spanning 0.05..1.6 s, plus centroid/flux stats
    auto env = onset_envelope(clip);
    double em = 0;
    for (double v : env) em += v;
    em /= env.size();
    std::vector<double> centered(env.size());
    double var = 0;
    for (size_t i = 0; i < env.size(); ++i) {
        centered[i] = env[i] - em;
        var += centered[i] * centered[i];
    }
    ag::Tensor spec = ag::Tensor::zeros(1, kSpecStatsDim);
    for (int k = 0; k < 16; ++k) {
        const int lag = 5 + 10 * k;  // frames at 100 fps
        double acc = 0;
        for (size_t i = 0; i + lag < centered.size(); ++i) acc += centered[i] * centered[i + lag];
        spec.at(0, k) = var > 1e-12 ? acc / var : 0.0;
    }
    double env_std = std::sqrt(var / env.size());
    // spectral centroid over mel bands, frame-averaged
    double cent_m = 0, cent_s = 0;
    std::vector<double> cents(mel.frames);
    for (int t = 0; t < mel.frames; ++t) {
        double w = 0, c = 0;
        for (int b = 0; b < mel.bands; ++b) {
            const double e = std::exp(mel.at(t, b));
            w += e;
            c += e * b;
        }
        cents[t] = w > 0 ? c / w / mel.bands : 0.0;
        cent_m += cents[t];
    }
    cent_m /= mel.frames;
    for (double c : cents) cent_s += (c - cent_m) * (c - cent_m);
    spec.at(0, 16) = em;
    spec.at(0, 17) = env_std;
    spec.at(0, 18) = cent_m;
    spec.at(0, 19) = std::sqrt(cent_s / mel.frames);
    return {stats, spec};
}

inline ag::Tensor pose_features(const MotionSequence& seq, const SkeletonModel& skel) {
    if (seq.frame_count() < 30) throw TooShort("pose encoder needs >= 30 frames");
    const FeatureVector f = motion_features(seq, skel);
    ag::Tensor out = ag::Tensor::zeros(1, kPoseFeatDim);
    for (int k = 0; k < kFeatureDim; ++k) out.at(0, k) = f.v[k];
    // root translation mean/std and mean contacts
    double rm[3] = {0, 0, 0}, rs[3] = {0, 0, 0}, cm[4] = {0, 0, 0, 0};
    for (const auto& fr : seq.frames) {
        rm[0] += fr.root_t.x;
        rm[1] += fr.root_t.y;
        rm[2] += fr.root_t.z;
        for (int c = 0; c < 4; ++c) cm[c] += fr.contacts[c];
    }
    const int n = seq.frame_count();
    for (double& v : rm) v /= n;
    for (double& v : cm) v /= n;
    for (const auto& fr : seq.frames) {
        rs[0] += (fr.root_t.x - rm[0]) * (fr.root_t.x - rm[0]);
        rs[1] += (fr.root_t.y - rm[1]) * (fr.root_t.y - rm[1]);
        rs[2] += (fr.root_t.z - rm[2]) * (fr.root_t.z - rm[2]);
    }
    for (int k = 0; k < 3; ++k) {
        out.at(0, kFeatureDim + k) = rm[k];
        out.at(0, kFeatureDim + 3 + k) = std::sqrt(rs[k] / n);
    }
    for (int c = 0; c < 4; ++c) out.at(0, kFeatureDim + 6 + c) = cm[c];
    return out;
}

// Vocabulary-free text embedding: hashed bag of lowercase tokens, scaled by
// the token count. Word order does not matter.
inline ag::Tensor text_features(const std::string& text) {
    ag::Tensor out = ag::Tensor::zeros(1, kTextDim);
    std::string token;
    int count = 0;
    auto flush = [&] {
        if (token.empty()) return;
        out.at(0, fnv1a64(token) % kTextDim) += 1.0;
        ++count;
        token.clear();
    };
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch)))
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        else
            flush();
    }
    flush();
    if (count == 0) throw EmptyStyle("no tokens in style text");
    for (auto& v : out.values()) v /= count;
    return out;
}

inline ag::Tensor l2_normalize_rows(const ag::Tensor& x) {
    using namespace ag;
    return mul_rowwise(x, recip(sqrt(rowdot(x, x))));
}

// ---- MotionTune-lite ----

// Music branch: a log-mel statistics MLP fused with a spectral-statistics
// branch standing in for a pretrained audio model, concatenated and
// projected to the shared embedding space.
struct MusicEncoder {
    nn::Linear mel_branch, spec_branch, project;

    MusicEncoder() = default;
    MusicEncoder(nn::ParamStore& store, const std::string& name, PhiloxRng& rng)
        : mel_branch(store, name + ".mel", kMelStatsDim, 96, rng),
          spec_branch(store, name + ".spec", kSpecStatsDim, 32, rng),
          project(store, name + ".proj", 128, kEmbedDim, rng) {}

    ag::Tensor operator()(const MusicFeatures& f) const {
        using namespace ag;
        Tensor h = concat_cols(gelu(mel_branch(f.mel_stats)), gelu(spec_branch(f.spec_stats)));
        return l2_normalize_rows(project(h));
    }
};

// Dance branch: pooled kinematics through a small MLP, concatenated with the
// hashed-token text embedding and projected.
struct DanceEncoder {
    nn::Mlp pose_mlp;
    nn::Linear text_proj, project;

    DanceEncoder() = default;
    DanceEncoder(nn::ParamStore& store, const std::string& name, PhiloxRng& rng)
        : pose_mlp(store, name + ".pose", kPoseFeatDim, 128, kEmbedDim, rng),
          text_proj(store, name + ".text", kTextDim, kEmbedDim, rng),
          project(store, name + ".proj", 2 * kEmbedDim, kEmbedDim, rng) {}

    ag::Tensor operator()(const ag::Tensor& pose_feats, const ag::Tensor& text_feats) const {
        using namespace ag;
        Tensor h = concat_cols(pose_mlp(pose_feats), text_proj(text_feats));
        return l2_normalize_rows(project(h));
    }
};

struct MotionTune {
    nn::ParamStore store;
    MusicEncoder music;
    DanceEncoder dance;
    ag::Tensor log_tau;

    static constexpr double kTauMin = 0.01;
    static constexpr double kTauMax = 1.0;

    explicit MotionTune(uint64_t seed, double tau0 = 0.07) {
        PhiloxRng rng(seed, 0x301);
        music = MusicEncoder(store, "music", rng);
        dance = DanceEncoder(store, "dance", rng);
        log_tau = store.add("log_tau", ag::Tensor::scalar(std::log(tau0)));
    }

    ag::Tensor tau() const { return ag::clamp(ag::exp(log_tau), kTauMin, kTauMax); }

    ag::Tensor encode_music(const AudioClip& clip) const { return music(music_features(clip)); }

    ag::Tensor encode_dance(const MotionSequence& seq, const SkeletonModel& skel,
                            const std::string& text) const {
        return dance(pose_features(seq, skel), text_features(text));
    }
};

struct MotionTuneItem {
    MusicFeatures music;
    ag::Tensor pose_feats;
    ag::Tensor text_feats;
};

struct TrainReport {
    std::vector<double> loss_history;
    double retrieval_r1 = 0.0;  // mean of both retrieval directions
};

inline double retrieval_r1(const ag::Tensor& em, const ag::Tensor& ed) {
    const int n = em.rows();
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        int best_m = 0, best_d = 0;
        double bm = -1e300, bd = -1e300;
        for (int j = 0; j < n; ++j) {
            double sm = 0, sd = 0;
            for (int k = 0; k < em.cols(); ++k) {
                sm += em.at(i, k) * ed.at(j, k);
                sd += ed.at(i, k) * em.at(j, k);
            }
            if (sm > bm) {
                bm = sm;
                best_m = j;
            }
            if (sd > bd) {
                bd = sd;
                best_d = j;
            }
        }
        hits += (best_m == i) + (best_d == i);
    }
    return hits / (2.0 * n);
}

// Full-batch contrastive training of the paired encoders with a learnable
// clamped temperature.
inline TrainReport train_motiontune(MotionTune& model, const std::vector<MotionTuneItem>& corpus,
                                    int epochs, double lr = 5e-4) {
    if (corpus.size() < 8) throw BadCorpus("need at least 8 paired triples");
    nn::Adam opt(lr);
    auto params = model.store.tensors();
    TrainReport report;

    auto embed_all = [&] {
        ag::Tensor em, ed;
        for (const auto& item : corpus) {
            ag::Tensor m = model.music(item.music);
            ag::Tensor d = model.dance(item.pose_feats, item.text_feats);
            em = em.defined() ? ag::concat_rows(em, m) : m;
            ed = ed.defined() ? ag::concat_rows(ed, d) : d;
        }
        return std::pair{em, ed};
    };

    for (int e = 0; e < epochs; ++e) {
        ag::Graph g;
        auto [em, ed] = embed_all();
        ag::Tensor loss = contrastive_loss(em, ed, model.tau());
        report.loss_history.push_back(loss.item());
        g.backward(loss);
        opt.step(params);
    }
    auto [em, ed] = embed_all();
    report.retrieval_r1 = retrieval_r1(em, ed);
    return report;
}

// ---- genre classifier (music style head of the style controller) ----

struct GenreChunks {
    ag::Tensor global, l0, l1, l2;  // [frames, bands]

    static GenreChunks from(const ChunkSet& c) {
        return {features_to_tensor(c.global), features_to_tensor(c.locals[0]),
                features_to_tensor(c.locals[1]), features_to_tensor(c.locals[2])};
    }
};

struct GenreOutput {
    ag::Tensor probs;   // [1,C]
    ag::Tensor e_c;     // [1,96], last two hidden layers
    ag::Tensor logits;  // [1,C]
};

struct GenreModel {
    nn::ParamStore store;
    LocalMerger merger;
    FusionGate gate;
    nn::Linear f1, f2, f3;
    std::vector<std::string> classes;

    GenreModel() = default;
    GenreModel(std::vector<std::string> class_names, uint64_t seed) : classes(std::move(class_names)) {
        PhiloxRng rng(seed, 0x6e2);
        merger = LocalMerger(store, "merger");
        gate = FusionGate(store, "gate", 64, 16, rng);
        f1 = nn::Linear(store, "f1", 128, 64, rng);
        f2 = nn::Linear(store, "f2", 64, 32, rng);
        f3 = nn::Linear(store, "f3", 32, static_cast<int>(classes.size()), rng);
    }

    GenreOutput forward(const GenreChunks& chunks) const {
        using namespace ag;
        Tensor local = merger(chunks.l0, chunks.l1, chunks.l2);
        Tensor fused = fuse_features(chunks.global, local, gate);
        // time pooling: per-band mean and std
        const int frames = fused.rows();
        Tensor mu = affine(row_sum(transpose(fused)), 1.0 / frames, 0.0);       // [bands,1]
        Tensor cent = sub(fused, mul_rowvec(Tensor::full(frames, fused.cols(), 1.0),
                                            transpose(mu)));
        Tensor var = affine(row_sum(transpose(square(cent))), 1.0 / frames, 0.0);
        Tensor pooled = concat_cols(transpose(mu), sqrt(add(transpose(var),
                                                            Tensor::full(1, fused.cols(), 1e-12))));
        Tensor h1 = gelu(f1(pooled));
        Tensor h2 = gelu(f2(h1));
        Tensor logits = f3(h2);
        return {softmax_rows(logits), concat_cols(h1, h2), logits};
    }
};

struct ClassifyResult {
    std::string caption;
    std::vector<double> probs;
    ag::Tensor e_c;  // [1,96]
};

inline ClassifyResult classify_genre(const GenreModel& model, const AudioClip& clip,
                                     uint64_t chunk_seed = 0) {
    if (clip.duration() < 1.0) throw TooShort("classifier needs >= 1 s of audio");
    auto chunks = GenreChunks::from(chunk_for_fusion(clip, 5.0, chunk_seed));
    GenreOutput out = model.forward(chunks);
    ClassifyResult res;
    res.probs = out.probs.values();
    res.e_c = out.e_c;
    int best = 0;
    for (int c = 1; c < static_cast<int>(res.probs.size()); ++c)
        if (res.probs[c] > res.probs[best]) best = c;  // ties keep the lowest index
    res.caption = model.classes.at(best);
    return res;
}

struct GenreTrainItem {
    GenreChunks chunks;
    int label = 0;
};

inline std::vector<double> train_genre_model(GenreModel& model,
                                             const std::vector<GenreTrainItem>& corpus,
                                             int epochs, double lr = 2e-3) {
    if (corpus.size() < 2) throw BadCorpus("need at least 2 labeled clips");
    nn::Adam opt(lr);
    auto params = model.store.tensors();
    std::vector<double> history;
    const int c = static_cast<int>(model.classes.size());
    for (int e = 0; e < epochs; ++e) {
        ag::Graph g;
        ag::Tensor loss;
        for (const auto& item : corpus) {
            GenreOutput out = model.forward(item.chunks);
            ag::Tensor eye = ag::Tensor::zeros(1, c);
            eye.at(0, item.label) = 1.0;
            ag::Tensor nll = ag::sub(ag::logsumexp_rows(out.logits),
                                     ag::row_sum(ag::mul(out.logits, eye)));
            loss = loss.defined() ? ag::add(loss, nll) : nll;
        }
        loss = ag::affine(loss, 1.0 / corpus.size(), 0.0);
        history.push_back(loss.item());
        g.backward(loss);
        opt.step(params);
    }
    return history;
}

// ---- choreography style controller ----

// Embeds the textual choreography style, lets it interact with the
// classifier features through one self-attention and one cross-attention
// block, and emits the style half of the condition embedding.
struct StyleController {
    nn::ParamStore store;
    nn::Linear text_mlp, c1_proj, c2_proj, out_proj;
    nn::LayerNorm ln1, ln2;
    nn::MultiheadAttention self_attn, cross_attn;

    StyleController() = default;
    explicit StyleController(uint64_t seed) {
        PhiloxRng rng(seed, 0x57c);
        text_mlp = nn::Linear(store, "text_mlp", kTextDim, kEmbedDim, rng);
        c1_proj = nn::Linear(store, "c1_proj", 64, kEmbedDim, rng);
        c2_proj = nn::Linear(store, "c2_proj", 32, kEmbedDim, rng);
        out_proj = nn::Linear(store, "out_proj", kEmbedDim, kEmbedDim, rng);
        ln1 = nn::LayerNorm(store, "ln1", kEmbedDim);
        ln2 = nn::LayerNorm(store, "ln2", kEmbedDim);
        self_attn = nn::MultiheadAttention(store, "self", kEmbedDim, 4, rng);
        cross_attn = nn::MultiheadAttention(store, "cross", kEmbedDim, 4, rng);
    }

    // e_c: [1,96] classifier features; returns [1,64]
    ag::Tensor operator()(const ag::Tensor& e_c, const std::string& style) const {
        return apply(e_c, text_features(style));
    }

    ag::Tensor apply(const ag::Tensor& e_c, const ag::Tensor& text_feats) const {
        using namespace ag;
        if (e_c.cols() != kGenreFeatDim) throw ShapeMismatch("style controller expects [1,96] e_c");
        Tensor tok_t = text_mlp(text_feats);
        Tensor tok_c = concat_rows(c1_proj(slice_cols(e_c, 0, 64)),
                                   c2_proj(slice_cols(e_c, 64, 32)));
        Tensor tokens = concat_rows(tok_t, tok_c);          // [3,64]
        Tensor sa = add(tokens, self_attn(ln1(tokens), ln1(tokens)));
        Tensor query = slice_rows(sa, 0, 1);
        Tensor memory = slice_rows(sa, 1, 2);
        Tensor fused = add(query, cross_attn(ln2(query), ln2(memory)));
        return out_proj(fused);
    }
};

// e = [music embedding | style embedding], dim 128
inline ag::Tensor build_condition(const ag::Tensor& e_m, const ag::Tensor& style) {
    if (e_m.rows() != 1 || e_m.cols() != kEmbedDim || style.rows() != 1 ||
        style.cols() != kEmbedDim)
        throw ShapeMismatch("build_condition expects two [1,64] embeddings");
    return ag::concat_cols(e_m, style);
}

}  // namespace choreo
