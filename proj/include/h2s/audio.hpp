#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "h2s/errors.hpp"

namespace h2s {

// Mono audio, peak-bounded float samples.
struct AudioClip {
    std::vector<float> samples;
    std::uint32_t sample_rate = 0;
    std::string source_id;

    double duration() const {
        return sample_rate == 0 ? 0.0
                                : static_cast<double>(samples.size()) / sample_rate;
    }
};

struct IngestConfig {
    std::uint32_t target_sample_rate = 16000;
    double max_wav_value = 32768.0;  // full-scale divisor for integer PCM
    double min_duration = 1.0;       // seconds

    void validate() const;
};

// Decodes a RIFF/WAVE buffer (PCM16 or IEEE float32, any channel count
// averaged to mono). Integer samples are divided by cfg.max_wav_value.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, const IngestConfig& cfg,
                     const std::string& source_id = "");

AudioClip load_wav(const std::filesystem::path& path, const IngestConfig& cfg);

// Serializes a clip as mono IEEE float32 or PCM16 WAV.
std::vector<std::uint8_t> encode_wav_float32(const AudioClip& clip);
std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip, double max_wav_value = 32768.0);
void save_wav_float32(const AudioClip& clip, const std::filesystem::path& path);

// Divides by the largest absolute sample so the output peak is exactly 1.
// Throws SilentClip when every sample is zero.
AudioClip normalize_peak(const AudioClip& clip);

// Linear-interpolation resampler. Identity (bit-exact) when rates match.
AudioClip resample_linear(const AudioClip& clip, std::uint32_t target_rate);

}  // namespace h2s
