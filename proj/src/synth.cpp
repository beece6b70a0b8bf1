#include "h2s/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "h2s/errors.hpp"
#include "h2s/io_util.hpp"
#include "h2s/rng.hpp"

namespace h2s {

namespace {

constexpr double kAmp = 0.25;
constexpr double kRampSeconds = 0.010;
constexpr double kPi = 3.14159265358979323846;

// One sine note with raised-cosine fade in/out, appended to `out` in double
// precision. Phase restarts at each note; the envelope hits zero at both
// boundaries so the restart is inaudible and click-free.
void render_note(std::vector<double>& out, double freq, double duration, std::uint32_t sr) {
    const auto n = static_cast<std::size_t>(std::llround(duration * sr));
    const std::size_t ramp =
        std::min(static_cast<std::size_t>(std::llround(kRampSeconds * sr)), n / 2);
    const double w = 2.0 * kPi * freq / sr;
    for (std::size_t k = 0; k < n; ++k) {
        double env = 1.0;
        if (ramp > 0) {
            if (k < ramp) {
                env = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(k) / ramp));
            } else if (k >= n - ramp) {
                env = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(n - k) / ramp));
            }
        }
        out.push_back(kAmp * env * std::sin(w * static_cast<double>(k)));
    }
}

AudioClip to_clip(const std::vector<double>& samples, std::uint32_t sr, std::string id) {
    AudioClip clip;
    clip.sample_rate = sr;
    clip.source_id = std::move(id);
    clip.samples.reserve(samples.size());
    for (double s : samples) clip.samples.push_back(static_cast<float>(s));
    return clip;
}

std::string song_name(std::uint32_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "song_%04u", i);
    return buf;
}

std::string hum_name(std::uint32_t i, std::uint32_t j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "hum_%04u_%u", i, j);
    return buf;
}

}  // namespace

void SynthCorpusConfig::validate() const {
    if (n_songs < 1) throw ConfigError("n_songs must be >= 1");
    if (notes_per_song < 1) throw ConfigError("notes_per_song must be >= 1");
    if (hums_per_song < 1) throw ConfigError("hums_per_song must be >= 1");
    if (!(note_duration > 0)) throw ConfigError("note_duration must be > 0");
    if (sample_rate == 0) throw ConfigError("sample_rate must be > 0");
    if (note_pool.empty()) throw ConfigError("note_pool must be nonempty");
    for (double f : note_pool) {
        if (!(f > 0) || !(f < sample_rate / 2.0))
            throw ConfigError("note_pool frequencies must lie in (0, sample_rate/2)");
    }
    if (!(pitch_jitter_cents >= 0)) throw ConfigError("pitch_jitter_cents must be >= 0");
    if (!(tempo_jitter >= 0) || tempo_jitter >= 1)
        throw ConfigError("tempo_jitter must lie in [0, 1)");
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
        throw ConfigError("snr_db must be finite or +infinity (noise disabled)");
}

SynthCorpus synth_corpus(const SynthCorpusConfig& cfg) {
    cfg.validate();
    SynthCorpus corpus;
    corpus.songs.reserve(cfg.n_songs);
    corpus.hums.reserve(static_cast<std::size_t>(cfg.n_songs) * cfg.hums_per_song);

    const bool noise = cfg.snr_db != std::numeric_limits<double>::infinity();

    for (std::uint32_t i = 0; i < cfg.n_songs; ++i) {
        // Per-song stream: the note sequence depends only on (seed, i), so
        // songs can be synthesized in any order or in parallel.
        Rng song_rng(derive_seed(cfg.rng_seed, 1, i));
        std::vector<double> freqs(cfg.notes_per_song);
        for (double& f : freqs) f = cfg.note_pool[song_rng.uniform_index(cfg.note_pool.size())];

        std::vector<double> buf;
        buf.reserve(static_cast<std::size_t>(
            std::llround(cfg.notes_per_song * cfg.note_duration * cfg.sample_rate)));
        for (double f : freqs) render_note(buf, f, cfg.note_duration, cfg.sample_rate);
        const std::string sid = song_name(i);
        corpus.songs.push_back(to_clip(buf, cfg.sample_rate, sid));

        for (std::uint32_t j = 0; j < cfg.hums_per_song; ++j) {
            Rng hum_rng(derive_seed(cfg.rng_seed, 2, i, j));
            std::vector<double> hbuf;
            for (double f : freqs) {
                const double cents =
                    hum_rng.uniform(-cfg.pitch_jitter_cents, cfg.pitch_jitter_cents);
                const double scale = 1.0 + hum_rng.uniform(-cfg.tempo_jitter, cfg.tempo_jitter);
                render_note(hbuf, f * std::exp2(cents / 1200.0), cfg.note_duration * scale,
                            cfg.sample_rate);
            }
            if (noise) {
                double power = 0.0;
                for (double s : hbuf) power += s * s;
                power /= static_cast<double>(hbuf.size());
                const double sigma = std::sqrt(power / std::pow(10.0, cfg.snr_db / 10.0));
                if (sigma > 0) {
                    for (double& s : hbuf) s += sigma * hum_rng.normal();
                }
            }
            corpus.hums.emplace_back(to_clip(hbuf, cfg.sample_rate, hum_name(i, j)), sid);
        }
    }
    return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "songs");
    std::filesystem::create_directories(out_dir / "hums");

    for (const AudioClip& song : corpus.songs) {
        save_wav_float32(song, out_dir / "songs" / (song.source_id + ".wav"));
    }
    std::string labels;
    for (const auto& [hum, sid] : corpus.hums) {
        save_wav_float32(hum, out_dir / "hums" / (hum.source_id + ".wav"));
        labels += hum.source_id + ".wav\t" + sid + "\n";
    }
    const auto labels_path = out_dir / "labels.tsv";
    write_file_bytes(labels_path, reinterpret_cast<const std::uint8_t*>(labels.data()),
                     labels.size());
}

}  // namespace h2s
