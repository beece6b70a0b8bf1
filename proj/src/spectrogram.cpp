#include "h2s/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>

#include "h2s/io_util.hpp"

namespace h2s {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr char kArrayMagic[8] = {'H', '2', 'S', 'A', 'R', 'R', '1', '\0'};

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// O(n^2) fallback for non-power-of-two sizes.
void dft_naive(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(t) /
                               static_cast<double>(n);
            acc += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    a = std::move(out);
}

}  // namespace

void SpectrogramConfig::validate(std::uint32_t sample_rate) const {
    if (sample_rate == 0) throw ConfigError("sample_rate must be > 0");
    if (filter_length < 2 || filter_length % 2 != 0)
        throw ConfigError("filter_length must be even and >= 2");
    if (hop_length < 1) throw ConfigError("hop_length must be >= 1");
    if (win_length < 1 || win_length > filter_length)
        throw ConfigError("win_length must lie in [1, filter_length]");
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (!(log_floor > 0)) throw ConfigError("log_floor must be > 0");
    const double fm = resolved_fmax(sample_rate);
    if (!(fmin >= 0) || !(fmin < fm) || !(fm <= sample_rate / 2.0))
        throw ConfigError("need 0 <= fmin < fmax <= sample_rate/2");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MatD stft_magnitude(const AudioClip& clip, const SpectrogramConfig& cfg) {
    cfg.validate(clip.sample_rate);
    const std::size_t len = clip.samples.size();
    const std::size_t fl = cfg.filter_length;
    const std::size_t pad = fl / 2;
    if (len < pad + 1) {
        throw ClipTooShortForReflect("clip of " + std::to_string(len) +
                                     " samples cannot be reflect-padded by " +
                                     std::to_string(pad));
    }

    std::vector<double> padded(len + 2 * pad);
    for (std::size_t j = 0; j < pad; ++j) padded[j] = clip.samples[pad - j];
    for (std::size_t i = 0; i < len; ++i) padded[pad + i] = clip.samples[i];
    for (std::size_t j = 0; j < pad; ++j) padded[pad + len + j] = clip.samples[len - 2 - j];

    // Periodic Hann over win_length, centered in the FFT frame.
    std::vector<double> window(fl, 0.0);
    const std::size_t off = (fl - cfg.win_length) / 2;
    for (std::size_t k = 0; k < cfg.win_length; ++k) {
        window[off + k] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(k) /
                                               static_cast<double>(cfg.win_length));
    }

    const std::size_t n_frames = len / cfg.hop_length + 1;
    const std::size_t n_bins = fl / 2 + 1;
    MatD mag(n_frames, n_bins);

    std::vector<std::complex<double>> buf(fl);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const double* src = padded.data() + t * cfg.hop_length;
        for (std::size_t k = 0; k < fl; ++k) buf[k] = {src[k] * window[k], 0.0};
        if (is_pow2(fl)) {
            fft_radix2(buf);
        } else {
            dft_naive(buf);
        }
        for (std::size_t k = 0; k < n_bins; ++k) mag.at(t, k) = std::abs(buf[k]);
    }
    return mag;
}

MelFilterbank build_mel_filterbank(const SpectrogramConfig& cfg, std::uint32_t sample_rate) {
    cfg.validate(sample_rate);
    const std::size_t n_bins = cfg.filter_length / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.resolved_fmax(sample_rate));

    std::vector<double> hz(cfg.n_mels + 2);
    for (std::size_t p = 0; p < hz.size(); ++p) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(p) /
                                        static_cast<double>(cfg.n_mels + 1);
        hz[p] = mel_to_hz(mel);
    }

    MelFilterbank fb;
    fb.weights = MatD(cfg.n_mels, n_bins);
    fb.centers.resize(cfg.n_mels);

    for (std::size_t i = 0; i < cfg.n_mels; ++i) {
        const double lo = hz[i], mid = hz[i + 1], hi = hz[i + 2];
        fb.centers[i] = mid;
        bool any = false;
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate /
                             static_cast<double>(cfg.filter_length);
            const double up = (f - lo) / (mid - lo);
            const double down = (hi - f) / (hi - mid);
            const double w = std::max(0.0, std::min(up, down));
            fb.weights.at(i, k) = w;
            any = any || w > 0.0;
        }
        if (!any) {
            throw DegenerateFilter("mel band " + std::to_string(i) +
                                   " has no support at this FFT resolution");
        }
    }
    return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& cfg) {
    const MatD mag = stft_magnitude(clip, cfg);
    const MelFilterbank fb = build_mel_filterbank(cfg, clip.sample_rate);

    MelSpectrogram out;
    out.source_id = clip.source_id;
    out.values = MatF(mag.rows, cfg.n_mels);
    for (std::size_t t = 0; t < mag.rows; ++t) {
        const double* frame = mag.row(t);
        for (std::size_t i = 0; i < cfg.n_mels; ++i) {
            const double* w = fb.weights.row(i);
            double e = 0.0;
            for (std::size_t k = 0; k < mag.cols; ++k) e += w[k] * frame[k];
            out.values.at(t, i) = static_cast<float>(std::log(std::max(e, cfg.log_floor)));
        }
    }
    return out;
}

void save_array(const MatF& m, const std::filesystem::path& path) {
    if (m.rows == 0 || m.cols == 0) throw ShapeMismatch("refusing to save an empty matrix");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    write_bytes(f, kArrayMagic, 8);
    write_u32(f, static_cast<std::uint32_t>(m.rows));
    write_u32(f, static_cast<std::uint32_t>(m.cols));
    write_f32_array(f, m.data.data(), m.size());
    f.flush();
    if (!f) throw IoError("write failed for " + path.string());
}

MatF load_array(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    expect_magic(f, kArrayMagic, path.string());
    const std::uint32_t rows = read_u32(f);
    const std::uint32_t cols = read_u32(f);
    if (rows == 0 || cols == 0)
        throw ShapeMismatch("empty matrix in " + path.string());
    MatF m(rows, cols);
    read_f32_array(f, m.data.data(), m.size());
    return m;
}

}  // namespace h2s
