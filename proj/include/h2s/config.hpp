#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "h2s/audio.hpp"
#include "h2s/embedder.hpp"
#include "h2s/spectrogram.hpp"
#include "h2s/synth.hpp"

namespace h2s {

struct IndexConfig {
    std::string kind = "flat";  // flat | ivf | pq
    std::uint32_t nlist = 16;   // ivf partitions
    std::uint32_t nprobe = 0;   // ivf probes; 0 means nlist (exhaustive)
    std::uint32_t M = 8;        // pq subspaces
    std::uint32_t ksub = 16;    // pq centroids per subspace
    std::uint64_t rng_seed = 42;

    void validate() const;  // throws ConfigError
};

// Whole-pipeline configuration, loaded from JSON. Unknown keys are rejected
// so a typo cannot silently fall back to a default.
struct RunConfig {
    IngestConfig ingest;
    SynthCorpusConfig synth;
    SpectrogramConfig spectrogram;
    EmbedderConfig embedder;
    ArcFaceConfig arcface;  // n_classes 0 = derive from the label file
    TrainConfig train;
    IndexConfig index;
    // Optional default locations: corpus_dir, wav_dir, mel_dir, labels,
    // checkpoint, embeddings, index, report.
    std::map<std::string, std::string> paths;
};

RunConfig parse_run_config(const std::string& json_text);           // throws ConfigError
RunConfig load_run_config(const std::filesystem::path& path);       // throws ConfigError
void apply_seed_override(RunConfig& cfg, std::uint64_t seed);       // all module seeds

}  // namespace h2s
