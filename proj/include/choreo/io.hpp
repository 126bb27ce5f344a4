#pragma once

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "choreo/common.hpp"
#include "choreo/corpus.hpp"
#include "choreo/posemath.hpp"
#include "choreo/rng.hpp"

namespace choreo {

using nlohmann::json;

namespace io_detail {

inline void put_u16(std::vector<unsigned char>& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8 & 0xff);
}
inline void put_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back(v & 0xff);
    out.push_back(v >> 8 & 0xff);
    out.push_back(v >> 16 & 0xff);
    out.push_back(v >> 24 & 0xff);
}
inline uint16_t get_u16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | p[1] << 8); }
inline uint32_t get_u32(const unsigned char* p) {
    return p[0] | p[1] << 8 | p[2] << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace io_detail

inline void write_file_atomic(const std::filesystem::path& path,
                              const void* data, size_t size) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot write " + tmp);
        os.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!os) throw IoError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text.data(), text.size());
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline uint64_t file_hash(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---- .chor motion files ----
// magic "CHOR" | u16 version | u16 fps | u16 joints | u32 frames |
// frame-major float32 little-endian 151-vectors

inline std::vector<unsigned char> motion_file_bytes(const MotionSequence& seq) {
    using namespace io_detail;
    if (seq.frames.empty()) throw BadLength("refusing to write an empty sequence");
    std::vector<unsigned char> out;
    out.reserve(14 + seq.frames.size() * kPoseDim * 4);
    out.insert(out.end(), {'C', 'H', 'O', 'R'});
    put_u16(out, 1);
    put_u16(out, static_cast<uint16_t>(seq.fps));
    put_u16(out, kNumJoints);
    put_u32(out, static_cast<uint32_t>(seq.frames.size()));
    for (const auto& frame : seq.frames) {
        for (double v : pose_pack(frame)) {
            const float f = static_cast<float>(v);
            unsigned char b[4];
            std::memcpy(b, &f, 4);
            out.insert(out.end(), b, b + 4);
        }
    }
    return out;
}

inline void write_motion_file(const std::filesystem::path& path, const MotionSequence& seq) {
    const auto bytes = motion_file_bytes(seq);
    write_file_atomic(path, bytes.data(), bytes.size());
}

inline MotionSequence read_motion_file(const std::filesystem::path& path) {
    using namespace io_detail;
    const auto bytes = read_file(path);
    if (bytes.size() < 14) throw Truncated("motion file header incomplete");
    if (std::memcmp(bytes.data(), "CHOR", 4) != 0) throw BadMagic("not a CHOR file: " + path.string());
    const uint16_t version = get_u16(bytes.data() + 4);
    if (version != 1) throw BadMagic("unsupported CHOR version " + std::to_string(version));
    const uint16_t fps = get_u16(bytes.data() + 6);
    const uint16_t joints = get_u16(bytes.data() + 8);
    const uint32_t frames = get_u32(bytes.data() + 10);
    if (joints != kNumJoints) throw BadMagic("unexpected joint count");
    if (frames == 0) throw Truncated("empty payload");
    const size_t want = 14 + static_cast<size_t>(frames) * kPoseDim * 4;
    if (bytes.size() != want)
        throw Truncated("declared " + std::to_string(frames) + " frames but file has " +
                        std::to_string(bytes.size()) + " bytes");
    MotionSequence seq;
    seq.fps = fps;
    seq.frames.reserve(frames);
    std::vector<double> row(kPoseDim);
    for (uint32_t i = 0; i < frames; ++i) {
        for (int k = 0; k < kPoseDim; ++k) {
            float f;
            std::memcpy(&f, bytes.data() + 14 + (static_cast<size_t>(i) * kPoseDim + k) * 4, 4);
            row[k] = f;
        }
        seq.frames.push_back(pose_unpack(row));
    }
    return seq;
}

// ---- PGM (P5) silhouettes ----

struct Raster {
    int width = 0, height = 0;
    std::vector<uint8_t> pixels;  // 0 or 1

    uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
};

inline void write_pgm(const std::filesystem::path& path, const Raster& r) {
    std::string header = "P5\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    for (uint8_t p : r.pixels) out.push_back(p ? 255 : 0);
    write_file_atomic(path, out.data(), out.size());
}

inline Raster read_pgm(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        if (pos < bytes.size() && bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(bytes[pos++]);
        return t;
    };
    if (token() != "P5") throw BadMagic("not a P5 pgm: " + path.string());
    Raster r;
    r.width = std::stoi(token());
    r.height = std::stoi(token());
    const int maxval = std::stoi(token());
    ++pos;  // single whitespace after maxval
    const size_t want = static_cast<size_t>(r.width) * r.height;
    if (bytes.size() - pos < want) throw Truncated("pgm payload short");
    r.pixels.resize(want);
    for (size_t i = 0; i < want; ++i) r.pixels[i] = bytes[pos + i] >= (maxval + 1) / 2 ? 1 : 0;
    return r;
}

// ---- keypoints ----

struct Keypoints2D {
    std::array<double, kNumJoints> x{};
    std::array<double, kNumJoints> y{};
    std::array<bool, kNumJoints> valid{};

    int valid_count() const {
        int n = 0;
        for (bool v : valid) n += v;
        return n;
    }
};

inline json keypoints_to_json(const Keypoints2D& k) {
    json arr = json::array();
    for (int j = 0; j < kNumJoints; ++j)
        arr.push_back({{"x", k.x[j]}, {"y", k.y[j]}, {"valid", k.valid[j]}});
    return json{{"keypoints", arr}};
}

inline Keypoints2D keypoints_from_json(const json& j) {
    Keypoints2D k;
    const auto& arr = j.at("keypoints");
    if (arr.size() != kNumJoints)
        throw BadLength("expected 24 keypoints, got " + std::to_string(arr.size()));
    for (int i = 0; i < kNumJoints; ++i) {
        k.x[i] = arr[i].at("x").get<double>();
        k.y[i] = arr[i].at("y").get<double>();
        k.valid[i] = arr[i].value("valid", true);
    }
    return k;
}

inline void write_keypoints(const std::filesystem::path& path, const Keypoints2D& k) {
    write_text_atomic(path, keypoints_to_json(k).dump(2) + "\n");
}

inline Keypoints2D read_keypoints(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return keypoints_from_json(json::parse(bytes.begin(), bytes.end()));
}

// ---- run manifests ----

// Every CLI command drops one of these next to its outputs. args + seed are
// sufficient to reproduce the run bit-exactly.
struct RunManifest {
    std::string command;
    json args = json::object();
    uint64_t seed = 0;
    std::string created;
    json inputs = json::object();   // path -> fnv1a64 hex
    json outputs = json::array();   // paths
    json metrics = json::object();

    json to_json() const {
        return json{{"command", command}, {"args", args},       {"seed", seed},
                    {"created", created}, {"inputs", inputs},   {"outputs", outputs},
                    {"metrics", metrics}, {"format_version", 1}};
    }

    static RunManifest from_json(const json& j) {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.args = j.at("args");
        m.seed = j.at("seed").get<uint64_t>();
        m.created = j.value("created", "");
        m.inputs = j.value("inputs", json::object());
        m.outputs = j.value("outputs", json::array());
        m.metrics = j.value("metrics", json::object());
        return m;
    }
};

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    write_text_atomic(path, m.to_json().dump(2) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return RunManifest::from_json(json::parse(bytes.begin(), bytes.end()));
}

// ---- corpus on disk ----

struct CorpusSpec {
    int genres = 10;
    int per_genre = 4;
    uint64_t seed = 0;
    double seconds = 5.0;
    double fps = 30.0;
};

struct CorpusItemFiles {
    std::filesystem::path wav, chor, label;
    int genre = 0;
    int style = 0;
    std::string style_text;
    double tempo = 0.0;
};

inline std::vector<CorpusItemFiles> gen_corpus(const CorpusSpec& spec,
                                               const std::filesystem::path& out_dir) {
    if (spec.genres < 2 || spec.genres > static_cast<int>(genre_table().size()))
        throw BadCorpus("genres must be in [2, " + std::to_string(genre_table().size()) + "]");
    if (spec.per_genre < 2) throw BadCorpus("per_genre must be >= 2");
    std::filesystem::create_directories(out_dir);

    std::vector<CorpusItemFiles> items;
    json index_items = json::array();
    int idx = 0;
    for (int g = 0; g < spec.genres; ++g) {
        for (int i = 0; i < spec.per_genre; ++i, ++idx) {
            const int style = i % 3;
            const uint64_t iseed = item_seed(spec.seed, g, idx);
            SynthItem item = synth_item(g, style, iseed, spec.seconds, spec.fps);

            char stem[32];
            std::snprintf(stem, sizeof(stem), "item_%04d", idx);
            CorpusItemFiles files;
            files.wav = out_dir / (std::string(stem) + ".wav");
            files.chor = out_dir / (std::string(stem) + ".chor");
            files.label = out_dir / (std::string(stem) + ".json");
            files.genre = g;
            files.style = style;
            files.style_text = item.text;
            files.tempo = item.tempo;

            write_wav(files.wav, item.clip, true);
            write_motion_file(files.chor, item.dance);
            json label{{"genre", item.genre_name},     {"genre_index", g},
                       {"choreo_style", item.style_name}, {"style_index", style},
                       {"style_text", item.text},      {"tempo", item.tempo},
                       {"seed", iseed},                {"beats", item.beat_times}};
            write_text_atomic(files.label, label.dump(2) + "\n");
            index_items.push_back({{"stem", stem}, {"genre_index", g}, {"style_index", style}});
            items.push_back(files);
        }
    }
    std::vector<std::string> genre_names;
    for (int g = 0; g < spec.genres; ++g) genre_names.push_back(genre_table()[g].name);
    json index{{"genres", spec.genres},   {"per_genre", spec.per_genre},
               {"seed", spec.seed},       {"seconds", spec.seconds},
               {"fps", spec.fps},         {"genre_names", genre_names},
               {"items", index_items},    {"format_version", 1}};
    write_text_atomic(out_dir / "corpus.json", index.dump(2) + "\n");
    return items;
}

}  // namespace choreo
