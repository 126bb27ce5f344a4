#pragma once

#include <array>
#include <cctype>
#include <string>
#include <vector>

#include "choreo/audio.hpp"
#include "choreo/posemath.hpp"
#include "choreo/rng.hpp"

namespace choreo {

// Synthetic paired corpus: per genre, a click track at a genre-specific
// tempo over a narrowband noise bed, and a dance whose per-joint sinusoids
// are phase-locked to the beats. An 8-dim coupling vector drawn per item
// modulates both the noise-band gains and the joint-group amplitudes, so the
// two modalities share instance-level structure.

struct GenreSpec {
    std::string name;
    double tempo_hz;
    double click_freq;
    std::array<std::string, 3> styles;
};

inline const std::vector<GenreSpec>& genre_table() {
    static const std::vector<GenreSpec> table = {
        {"break", 1.00, 800, {"footwork", "freeze", "spin"}},
        {"pop", 1.25, 1050, {"hand wave", "body wave", "chest pop"}},
        {"lock", 1.50, 1300, {"wrist roll", "point", "knee drop"}},
        {"hiphop", 1.75, 1550, {"bounce", "arm swing", "slide"}},
        {"house", 2.00, 1800, {"lose legs", "side kick", "jack"}},
        {"waack", 2.25, 2050, {"arm whirl", "pose snap", "strut"}},
        {"krump", 2.50, 2300, {"chest bump", "stomp", "jab"}},
        {"jazz", 2.75, 2550, {"kick line", "pirouette", "reach"}},
        {"street", 3.00, 2800, {"shuffle", "glide", "head nod"}},
        {"middle", 3.25, 3050, {"sway", "step touch", "turn"}},
    };
    return table;
}

inline std::string style_text(int genre, int style) {
    const auto& g = genre_table().at(genre);
    std::string name = g.name;
    name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
    return name + ": " + g.styles.at(style);
}

namespace corpus_detail {

// joint-group index for the 8-dim coupling vector
inline int joint_group(int j) {
    switch (j) {
        case 0: case 3: case 6: case 9: return 0;            // torso
        case 12: case 15: return 1;                          // head
        case 13: case 16: case 18: case 20: return 2;        // left arm
        case 14: case 17: case 19: case 21: return 3;        // right arm
        case 1: case 4: case 7: return 4;                    // left leg
        case 2: case 5: case 8: return 5;                    // right leg
        case 22: case 23: return 6;                          // hands
        default: return 7;                                   // feet (10, 11)
    }
}

inline double style_gain(int style, int group) {
    // style 0 leads with the arms, 1 with the legs, 2 with torso and head
    static const double gains[3][8] = {
        {0.6, 0.7, 1.8, 1.8, 0.5, 0.5, 1.6, 0.5},
        {0.5, 0.6, 0.5, 0.5, 1.8, 1.8, 0.5, 1.6},
        {1.8, 1.7, 0.7, 0.7, 0.6, 0.6, 0.6, 0.6},
    };
    return gains[style][group];
}

}  // namespace corpus_detail

struct SynthItem {
    AudioClip clip;
    MotionSequence dance;
    int genre = 0;
    int style = 0;
    std::string genre_name;
    std::string style_name;
    std::string text;  // "Genre: style"
    double tempo = 0.0;
    std::vector<double> beat_times;
};

inline SynthItem synth_item(int genre, int style, uint64_t seed, double seconds = 5.0,
                            double fps = 30.0, double sample_rate = 48000.0) {
    const auto& spec = genre_table().at(genre);
    SynthItem item;
    item.genre = genre;
    item.style = style;
    item.genre_name = spec.name;
    item.style_name = spec.styles.at(style);
    item.text = style_text(genre, style);

    PhiloxRng rng(seed, 0xda7a);
    item.tempo = spec.tempo_hz * rng.uniform(0.98, 1.02);
    const double phase = 0.25;
    for (double t = phase; t < seconds - 1e-9; t += 1.0 / item.tempo)
        item.beat_times.push_back(t);

    std::array<double, 8> coupling;
    for (auto& v : coupling) v = rng.uniform(0.6, 1.4);

    // ---- audio ----
    AudioClip& clip = item.clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(static_cast<size_t>(seconds * sample_rate), 0.0);
    for (double tb : item.beat_times) {
        const size_t start = static_cast<size_t>(tb * sample_rate);
        const size_t len = static_cast<size_t>(0.03 * sample_rate);
        for (size_t i = 0; i < len && start + i < clip.samples.size(); ++i) {
            const double tau = i / sample_rate;
            clip.samples[start + i] += 0.7 * std::sin(2.0 * std::numbers::pi * spec.click_freq * tau) *
                                       std::exp(-tau / 0.008);
        }
    }
    // narrowband noise bed: 8 drifting tones, genre-weighted, item-modulated
    for (int k = 0; k < 8; ++k) {
        const double f_k = 400.0 + 550.0 * k;
        const bool hot = k == genre % 8 || k == (genre + 3) % 8;
        const double amp = 0.04 * coupling[k] * (hot ? 2.5 : 1.0);
        double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dphi = 2.0 * std::numbers::pi * f_k / sample_rate;
        for (auto& s : clip.samples) {
            phi += dphi + 0.002 * rng.normal();
            s += amp * std::sin(phi);
        }
    }
    double peak = 0.0;
    for (double s : clip.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.95)
        for (auto& s : clip.samples) s *= 0.95 / peak;

    // ---- dance ----
    MotionSequence& dance = item.dance;
    dance.fps = fps;
    const int frames = static_cast<int>(seconds * fps);
    std::array<double, kNumJoints> amp{};
    std::array<double, kNumJoints> sign{};
    std::array<Vec3, kNumJoints> axis{};
    for (int j = 0; j < kNumJoints; ++j) {
        const int group = corpus_detail::joint_group(j);
        const double base = 0.20 + 0.08 * ((genre * 7 + j) % 5);
        amp[j] = base * corpus_detail::style_gain(style, group) * coupling[group] *
                 rng.uniform(0.9, 1.1);
        sign[j] = ((genre + style + j) % 2 == 0) ? 1.0 : -1.0;
        axis[j] = j % 3 == 0 ? Vec3{0, 0, 1} : (j % 3 == 1 ? Vec3{1, 0, 0} : Vec3{0, 1, 0});
    }
    for (int i = 0; i < frames; ++i) {
        const double t = i / fps;
        const double osc = std::cos(std::numbers::pi * item.tempo * (t - phase));
        const double swing = std::sin(std::numbers::pi * item.tempo * (t - phase));
        PoseVector p;
        for (int j = 0; j < kNumJoints; ++j)
            p.rots[j] = matrix_to_rot6d(axis_angle_to_matrix(axis[j], sign[j] * amp[j] * osc));
        p.root_t = {0.04 * coupling[0] * osc, 0.0, 0.02 * osc};
        const double contact = std::abs(swing) < 0.35 ? 1.0 : 0.0;
        for (int c = 0; c < 4; ++c) p.contacts[c] = contact;
        dance.frames.push_back(p);
    }
    return item;
}

// Item seed derived from the corpus seed and the item's position, so any
// item can be regenerated in isolation.
inline uint64_t item_seed(uint64_t corpus_seed, int genre, int index) {
    return fnv1a64(&genre, sizeof(genre), fnv1a64(&index, sizeof(index), corpus_seed ^ 0x9e3779b9));
}

}  // namespace choreo
