#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "h2s/audio.hpp"
#include "h2s/matrix.hpp"

namespace h2s {

struct SpectrogramConfig {
    std::uint32_t filter_length = 1024;  // FFT size
    std::uint32_t hop_length = 256;
    std::uint32_t win_length = 1024;
    std::uint32_t n_mels = 80;
    double fmin = 0.0;   // Hz
    double fmax = 0.0;   // Hz; 0 means sample_rate / 2
    double log_floor = 1e-5;

    void validate(std::uint32_t sample_rate) const;  // throws ConfigError
    double resolved_fmax(std::uint32_t sample_rate) const {
        return fmax > 0.0 ? fmax : sample_rate / 2.0;
    }
};

struct MelFilterbank {
    MatD weights;                 // n_mels x (filter_length/2 + 1)
    std::vector<double> centers;  // Hz, one per mel band
};

struct MelSpectrogram {
    MatF values;  // n_frames x n_mels, natural-log energies
    std::string source_id;
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Centered STFT with reflect padding of filter_length/2 on both ends and a
// periodic Hann window. Returns n_frames x (filter_length/2+1) magnitudes
// with n_frames = floor(len / hop_length) + 1.
MatD stft_magnitude(const AudioClip& clip, const SpectrogramConfig& cfg);

// Peak-1 triangular filters at n_mels+2 equally mel-spaced points between
// fmin and fmax, sampled at the FFT bin frequencies.
MelFilterbank build_mel_filterbank(const SpectrogramConfig& cfg, std::uint32_t sample_rate);

// ln(max(filterbank . magnitude_frame, log_floor)); expects a normalized clip.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& cfg);

// Binary array format: magic "H2SARR1\0", u32 rows, u32 cols, float32
// row-major payload, little-endian throughout.
void save_array(const MatF& m, const std::filesystem::path& path);
MatF load_array(const std::filesystem::path& path);

}  // namespace h2s
