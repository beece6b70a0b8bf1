#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "h2s/audio.hpp"

namespace h2s {

// Deterministic synthetic song/hum corpus: songs are sequences of enveloped
// sine notes; hums re-render the same note sequence with pitch/tempo jitter
// and additive noise.
struct SynthCorpusConfig {
    std::uint32_t n_songs = 200;
    std::vector<double> note_pool = {196.00, 220.00, 246.94, 277.18, 311.13, 349.23,
                                     392.00, 440.00, 493.88, 554.37, 622.25, 698.46};
    std::uint32_t notes_per_song = 8;
    double note_duration = 0.25;   // seconds
    std::uint32_t hums_per_song = 1;
    double pitch_jitter_cents = 20.0;
    double tempo_jitter = 0.10;    // fraction, per-note duration scale in [1-t, 1+t]
    double snr_db = 20.0;          // +infinity disables noise
    std::uint64_t rng_seed = 2024;
    std::uint32_t sample_rate = 16000;

    void validate() const;  // throws ConfigError
};

struct SynthCorpus {
    std::vector<AudioClip> songs;                          // source_id = song id
    std::vector<std::pair<AudioClip, std::string>> hums;   // (clip, song_id)
};

SynthCorpus synth_corpus(const SynthCorpusConfig& cfg);

// Layout: out_dir/songs/<id>.wav, out_dir/hums/<id>.wav, out_dir/labels.tsv
// with lines "<hum filename>\t<song id>\n".
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& out_dir);

}  // namespace h2s
