#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sdvc/common.hpp"

namespace sdvc {

inline constexpr int kSampleRate = 16000;

struct WavData {
    int sample_rate = kSampleRate;
    std::vector<double> samples;  // mono, in [-1, 1]

    double duration_s() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
           std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16(const unsigned char* p) {
    return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
}

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 24) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

}  // namespace detail

// Reads RIFF/WAVE PCM16. Multi-channel input is averaged down to mono.
inline WavData read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot open wav file: " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
        std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
        throw IngestError("not a RIFF/WAVE file: " + path.string());

    std::size_t pos = 12;
    int channels = 0, rate = 0, bits = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;
    while (pos + 8 <= raw.size()) {
        const std::uint32_t chunk_len = detail::read_u32(&raw[pos + 4]);
        if (std::memcmp(&raw[pos], "fmt ", 4) == 0 && pos + 8 + 16 <= raw.size()) {
            const unsigned char* f = &raw[pos + 8];
            const int fmt = detail::read_u16(f);
            channels = detail::read_u16(f + 2);
            rate = static_cast<int>(detail::read_u32(f + 4));
            bits = detail::read_u16(f + 14);
            if (fmt != 1 || bits != 16)
                throw IngestError("unsupported wav encoding (want PCM16): " +
                                  path.string());
        } else if (std::memcmp(&raw[pos], "data", 4) == 0) {
            data = &raw[pos + 8];
            data_len = std::min<std::size_t>(chunk_len, raw.size() - pos - 8);
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }
    if (channels <= 0 || rate <= 0 || data == nullptr)
        throw IngestError("malformed wav file: " + path.string());

    const std::size_t n_frames = data_len / (2 * channels);
    WavData wav;
    wav.sample_rate = rate;
    wav.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = data + 2 * (i * channels + c);
            const std::int16_t s =
                static_cast<std::int16_t>(detail::read_u16(p));
            acc += s / 32768.0;
        }
        wav.samples[i] = acc / channels;
    }
    return wav;
}

inline void write_wav_pcm16(const std::filesystem::path& path,
                            const std::vector<double>& samples,
                            int sample_rate = kSampleRate) {
    std::string out;
    out.reserve(44 + samples.size() * 2);
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    out += "RIFF";
    detail::put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);  // PCM
    detail::put_u16(out, 1);  // mono
    detail::put_u32(out, static_cast<std::uint32_t>(sample_rate));
    detail::put_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
    detail::put_u16(out, 2);
    detail::put_u16(out, 16);
    out += "data";
    detail::put_u32(out, data_bytes);
    for (double v : samples) {
        const double clamped = std::clamp(v, -1.0, 1.0);
        const auto s = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
        detail::put_u16(out, static_cast<std::uint16_t>(s));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestError("cannot write wav file: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// Linear-interpolation resample to 16 kHz mono.
inline std::vector<double> to_16k_mono(const WavData& wav) {
    if (wav.sample_rate == kSampleRate) return wav.samples;
    if (wav.samples.empty()) return {};
    const double ratio = static_cast<double>(wav.sample_rate) / kSampleRate;
    const auto n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(wav.samples.size()) / ratio));
    std::vector<double> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double t = i * ratio;
        const auto i0 = static_cast<std::size_t>(t);
        const std::size_t i1 = std::min(i0 + 1, wav.samples.size() - 1);
        const double frac = t - static_cast<double>(i0);
        out[i] = wav.samples[i0] * (1.0 - frac) + wav.samples[i1] * frac;
    }
    return out;
}

}  // namespace sdvc
