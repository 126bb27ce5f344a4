#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "choreo/common.hpp"
#include "choreo/nn.hpp"
#include "choreo/rng.hpp"
#include "choreo/tensor.hpp"

namespace choreo {

struct AudioClip {
    std::vector<double> samples;  // mono, [-1, 1]
    double sample_rate = 48000.0;

    double duration() const { return samples.size() / sample_rate; }
};

// ---- WAV I/O (PCM16 and float32, mono or downmixed) ----

namespace wav_detail {

inline uint32_t rd_u32(const unsigned char* p) {
    return p[0] | p[1] << 8 | p[2] << 16 | static_cast<uint32_t>(p[3]) << 24;
}
inline uint16_t rd_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | p[1] << 8); }

inline void wr_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8 & 0xff);
    out.push_back(v >> 16 & 0xff);
    out.push_back(v >> 24 & 0xff);
}
inline void wr_u16(std::vector<unsigned char>& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8 & 0xff);
}

}  // namespace wav_detail

inline AudioClip read_wav(const std::filesystem::path& path) {
    using namespace wav_detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw BadMagic("not a RIFF/WAVE file: " + path.string());

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t p = 12;
    while (p + 8 <= bytes.size()) {
        const uint32_t len = rd_u32(bytes.data() + p + 4);
        if (std::memcmp(bytes.data() + p, "fmt ", 4) == 0) {
            if (p + 8 + 16 > bytes.size()) throw Truncated("fmt chunk");
            format = rd_u16(bytes.data() + p + 8);
            channels = rd_u16(bytes.data() + p + 10);
            rate = rd_u32(bytes.data() + p + 12);
            bits = rd_u16(bytes.data() + p + 22);
        } else if (std::memcmp(bytes.data() + p, "data", 4) == 0) {
            data_off = p + 8;
            data_len = len;
        }
        p += 8 + len + (len & 1);
    }
    if (!rate || !channels || !data_off) throw Truncated("missing fmt or data chunk");
    if (data_off + data_len > bytes.size()) throw Truncated("data chunk exceeds file");

    AudioClip clip;
    clip.sample_rate = rate;
    const size_t frame_bytes = channels * bits / 8;
    const size_t frames = frame_bytes ? data_len / frame_bytes : 0;
    if (!frames) throw Truncated("empty audio payload");
    clip.samples.resize(frames);
    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* s = bytes.data() + data_off + i * frame_bytes + c * bits / 8;
            if (format == 1 && bits == 16) {
                const int16_t v = static_cast<int16_t>(rd_u16(s));
                acc += v / 32768.0;
            } else if (format == 3 && bits == 32) {
                float f;
                std::memcpy(&f, s, 4);
                acc += f;
            } else {
                throw IoError("unsupported wav encoding (want PCM16 or float32)");
            }
        }
        clip.samples[i] = acc / channels;
    }
    return clip;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip,
                      bool pcm16 = true) {
    using namespace wav_detail;
    std::vector<unsigned char> out;
    const uint16_t bits = pcm16 ? 16 : 32;
    const uint32_t rate = static_cast<uint32_t>(clip.sample_rate);
    const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * bits / 8);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    wr_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    wr_u32(out, 16);
    wr_u16(out, pcm16 ? 1 : 3);
    wr_u16(out, 1);  // mono
    wr_u32(out, rate);
    wr_u32(out, rate * bits / 8);
    wr_u16(out, bits / 8);
    wr_u16(out, bits);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    wr_u32(out, data_len);
    for (double v : clip.samples) {
        const double c = std::clamp(v, -1.0, 1.0);
        if (pcm16) {
            const long q = std::clamp(std::lround(c * 32768.0), -32768L, 32767L);
            wr_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
        } else {
            float f = static_cast<float>(c);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            out.insert(out.end(), b, b + 4);
        }
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot write " + tmp);
        os.write(reinterpret_cast<const char*>(out.data()),
                 static_cast<std::streamsize>(out.size()));
    }
    std::filesystem::rename(tmp, path);
}

inline AudioClip resample_linear(const AudioClip& in, double target_rate) {
    if (in.sample_rate == target_rate) return in;
    AudioClip out;
    out.sample_rate = target_rate;
    const size_t n = static_cast<size_t>(in.samples.size() * target_rate / in.sample_rate);
    out.samples.resize(std::max<size_t>(n, 1));
    for (size_t i = 0; i < out.samples.size(); ++i) {
        const double t = i * in.sample_rate / target_rate;
        const size_t k = std::min(static_cast<size_t>(t), in.samples.size() - 1);
        const size_t k1 = std::min(k + 1, in.samples.size() - 1);
        const double f = t - k;
        out.samples[i] = (1.0 - f) * in.samples[k] + f * in.samples[k1];
    }
    return out;
}

// ---- spectral features ----

// iterative radix-2 FFT, in place; size must be a power of two
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ShapeMismatch("fft size must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

struct SpectralFeatures {
    int frames = 0;
    int bands = 0;
    int hop = 0;
    double frame_rate = 0.0;
    std::vector<double> data;  // frames x bands, row-major

    double at(int t, int b) const { return data[static_cast<size_t>(t) * bands + b]; }
    double& at(int t, int b) { return data[static_cast<size_t>(t) * bands + b]; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Log-mel energies over centered frames. Window and hop are samples; frames
// are centered at k*hop with zero padding at the edges.
inline SpectralFeatures log_mel(const AudioClip& clip, int bands = 64, int window = 2048,
                                int hop = 480) {
    if (clip.samples.size() < 2) throw TooShort("audio too short for spectral analysis");
    const int n = static_cast<int>(clip.samples.size());
    const int frames = (n + hop - 1) / hop;
    const int nbins = window / 2 + 1;

    // triangular mel filterbank
    const double fmax = clip.sample_rate / 2.0;
    std::vector<double> centers(bands + 2);
    for (int b = 0; b < bands + 2; ++b)
        centers[b] = mel_to_hz(hz_to_mel(fmax) * b / (bands + 1));
    auto bin_freq = [&](int k) { return k * clip.sample_rate / window; };

    std::vector<double> win(window);
    for (int i = 0; i < window; ++i)
        win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (window - 1));

    SpectralFeatures feats;
    feats.frames = frames;
    feats.bands = bands;
    feats.hop = hop;
    feats.frame_rate = clip.sample_rate / hop;
    feats.data.assign(static_cast<size_t>(frames) * bands, 0.0);

    std::vector<std::complex<double>> buf(window);
    std::vector<double> power(nbins);
    for (int t = 0; t < frames; ++t) {
        const int center = t * hop;
        for (int i = 0; i < window; ++i) {
            const int s = center - window / 2 + i;
            const double x = (s >= 0 && s < n) ? clip.samples[s] : 0.0;
            buf[i] = {x * win[i], 0.0};
        }
        fft_pow2(buf);
        for (int k = 0; k < nbins; ++k) power[k] = std::norm(buf[k]);
        for (int b = 0; b < bands; ++b) {
            const double lo = centers[b], mid = centers[b + 1], hi = centers[b + 2];
            double e = 0.0;
            for (int k = 0; k < nbins; ++k) {
                const double f = bin_freq(k);
                if (f <= lo || f >= hi) continue;
                const double w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
                e += w * power[k];
            }
            feats.at(t, b) = std::log(1e-10 + e);
        }
    }
    return feats;
}

// Half-wave-rectified spectral flux of log-mel frames. A short 512-sample
// analysis window keeps onset timing within one hop of the true event; the
// encoder-facing features use the larger default window.
inline std::vector<double> onset_envelope(const AudioClip& clip, int hop = 480) {
    SpectralFeatures mel = log_mel(clip, 64, 512, hop);
    if (mel.frames < 2) throw TooShort("need at least 2 feature frames");
    std::vector<double> env(mel.frames - 1, 0.0);
    for (int t = 0; t + 1 < mel.frames; ++t) {
        double flux = 0.0;
        for (int b = 0; b < mel.bands; ++b) flux += std::max(0.0, mel.at(t + 1, b) - mel.at(t, b));
        env[t] = flux;
    }
    return env;
}

// Peak-picked onset envelope. Returns beat times in seconds, sorted, with a
// minimum inter-beat gap of 0.25 s.
inline std::vector<double> detect_beats(const AudioClip& clip) {
    if (clip.duration() < 1.0) throw TooShort("need at least 1 s of audio");
    const int hop = 480;
    const double frame_rate = clip.sample_rate / hop;
    auto env = onset_envelope(clip, hop);

    double mx = 0.0, mean = 0.0;
    for (double v : env) {
        mx = std::max(mx, v);
        mean += v;
    }
    mean /= env.size();
    if (mx <= 1e-9) return {};  // silence
    const double thresh = mean + 0.3 * (mx - mean);

    const int min_gap = std::max(1, static_cast<int>(0.25 * frame_rate));
    std::vector<double> beats;
    int last = -min_gap;
    for (int i = 0; i < static_cast<int>(env.size()); ++i) {
        if (env[i] < thresh) continue;
        const bool left_ok = i == 0 || env[i] > env[i - 1];
        const bool right_ok = i + 1 == static_cast<int>(env.size()) || env[i] >= env[i + 1];
        if (!left_ok || !right_ok) continue;
        if (i - last < min_gap) continue;
        // flux index i is the transition into frame i+1
        beats.push_back((i + 1) / frame_rate);
        last = i;
    }
    return beats;
}

// ---- variable-length chunking for the style controller ----

struct ChunkSet {
    SpectralFeatures global;
    std::array<SpectralFeatures, 3> locals;
    std::array<double, 3> local_starts{0, 0, 0};  // seconds, for reproducibility checks
};

// resample features along time to an exact frame count
inline SpectralFeatures resample_features(const SpectralFeatures& in, int frames) {
    SpectralFeatures out = in;
    out.frames = frames;
    out.data.assign(static_cast<size_t>(frames) * in.bands, 0.0);
    for (int t = 0; t < frames; ++t) {
        const double src = in.frames == 1 ? 0.0
                                          : static_cast<double>(t) * (in.frames - 1) / std::max(1, frames - 1);
        const int k = std::min(static_cast<int>(src), in.frames - 1);
        const int k1 = std::min(k + 1, in.frames - 1);
        const double f = src - k;
        for (int b = 0; b < in.bands; ++b)
            out.at(t, b) = (1.0 - f) * in.at(k, b) + f * in.at(k1, b);
    }
    return out;
}

// Fixed-budget view of a variable-length clip: a d-second global view plus
// three d-second local slices, one drawn from each third of the clip
// (slices clamp so they fit, so for d < T < 3d they may cross thirds).
// Short clips are repeated whole, then zero-padded to d.
inline ChunkSet chunk_for_fusion(const AudioClip& clip, double d = 5.0, uint64_t seed = 0) {
    if (clip.samples.empty()) throw TooShort("empty clip");
    const double T = clip.duration();
    const int d_samples = static_cast<int>(d * clip.sample_rate);
    ChunkSet out;
    if (T <= d) {
        AudioClip padded;
        padded.sample_rate = clip.sample_rate;
        padded.samples.reserve(d_samples);
        const int repeats = std::max(1, static_cast<int>(d / T));
        for (int r = 0; r < repeats; ++r)
            padded.samples.insert(padded.samples.end(), clip.samples.begin(), clip.samples.end());
        if (static_cast<int>(padded.samples.size()) > d_samples) padded.samples.resize(d_samples);
        padded.samples.resize(d_samples, 0.0);
        out.global = log_mel(padded);
        for (int i = 0; i < 3; ++i) out.locals[i] = out.global;
        return out;
    }
    // global view: features of the whole clip resampled to span d seconds
    SpectralFeatures whole = log_mel(clip);
    const int d_frames = static_cast<int>(d * whole.frame_rate);
    out.global = resample_features(whole, d_frames);
    out.global.frame_rate = whole.frame_rate;

    PhiloxRng rng(seed, 0xc5c);
    for (int i = 0; i < 3; ++i) {
        const double third_lo = T * i / 3.0;
        const double third_hi = T * (i + 1) / 3.0;
        double start = rng.uniform(third_lo, third_hi);
        start = std::min(start, T - d);  // clamp so the slice fits
        start = std::max(start, 0.0);
        out.local_starts[i] = start;
        AudioClip slice;
        slice.sample_rate = clip.sample_rate;
        const size_t s0 = static_cast<size_t>(start * clip.sample_rate);
        slice.samples.assign(clip.samples.begin() + s0,
                             clip.samples.begin() + std::min(s0 + d_samples, clip.samples.size()));
        slice.samples.resize(d_samples, 0.0);
        out.locals[i] = log_mel(slice);
    }
    return out;
}

inline ag::Tensor features_to_tensor(const SpectralFeatures& f) {
    return ag::Tensor::from(f.frames, f.bands, f.data);
}

// ---- learned fusion pieces ----

// Merges the three local feature blocks: stacked along time (interleaved)
// and reduced back to one block by a stride-3 width-3 temporal convolution
// with a single learned kernel shared across bands.
struct LocalMerger {
    ag::Tensor kernel;  // [1,3]
    ag::Tensor bias;    // [1,1]

    LocalMerger() = default;
    explicit LocalMerger(nn::ParamStore& store, const std::string& name) {
        kernel = store.add(name + ".kernel", ag::Tensor::from(1, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3}));
        bias = store.add(name + ".bias", ag::Tensor::zeros(1, 1));
    }

    ag::Tensor operator()(const ag::Tensor& l0, const ag::Tensor& l1,
                          const ag::Tensor& l2) const {
        ag::detail::check_same_shape(l0, l1, "merge_locals");
        ag::detail::check_same_shape(l0, l2, "merge_locals");
        using namespace ag;
        // interleaved stack: frame t contributes (l0[t], l1[t], l2[t]);
        // stride-3 conv over that axis is a per-frame weighted sum
        Tensor s = add(add(mul_scalar(l0, slice_cols(kernel, 0, 1)),
                           mul_scalar(l1, slice_cols(kernel, 1, 1))),
                       mul_scalar(l2, slice_cols(kernel, 2, 1)));
        return add(s, mul_scalar(Tensor::full(l0.rows(), l0.cols(), 1.0), bias));
    }
};

// Attention-style fusion gate producing an elementwise alpha in [0,1].
struct FusionGate {
    nn::Linear l1, l2;

    FusionGate() = default;
    FusionGate(nn::ParamStore& store, const std::string& name, int bands, int hidden,
               PhiloxRng& rng)
        : l1(store, name + ".l1", 2 * bands, hidden, rng), l2(store, name + ".l2", hidden, bands, rng) {}

    ag::Tensor alpha(const ag::Tensor& global, const ag::Tensor& local) const {
        using namespace ag;
        return sigmoid(l2(relu(l1(concat_cols(global, local)))));
    }
};

// F_fusion = alpha * F_global + (1 - alpha) * F_local, elementwise.
inline ag::Tensor fuse_features(const ag::Tensor& global, const ag::Tensor& local,
                                const ag::Tensor& alpha) {
    ag::detail::check_same_shape(global, local, "fuse_features");
    ag::detail::check_same_shape(global, alpha, "fuse_features alpha");
    using namespace ag;
    Tensor one_minus = affine(alpha, -1.0, 1.0);
    return add(mul(alpha, global), mul(one_minus, local));
}

inline ag::Tensor fuse_features(const ag::Tensor& global, const ag::Tensor& local,
                                const FusionGate& gate) {
    return fuse_features(global, local, gate.alpha(global, local));
}

}  // namespace choreo
