#include "h2s/config.hpp"

#include <fstream>
#include <initializer_list>
#include <limits>

#include <json.hpp>

#include "h2s/errors.hpp"

namespace h2s {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(ctx + " must be a JSON object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
void read_field(const json& obj, const std::string& ctx, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(ctx + "." + key + " has the wrong type");
    }
}

void parse_ingest(const json& j, IngestConfig& c) {
    check_keys(j, "ingest", {"target_sample_rate", "max_wav_value", "min_duration"});
    read_field(j, "ingest", "target_sample_rate", c.target_sample_rate);
    read_field(j, "ingest", "max_wav_value", c.max_wav_value);
    read_field(j, "ingest", "min_duration", c.min_duration);
}

void parse_synth(const json& j, SynthCorpusConfig& c) {
    check_keys(j, "synth",
               {"n_songs", "note_pool", "notes_per_song", "note_duration", "hums_per_song",
                "pitch_jitter_cents", "tempo_jitter", "snr_db", "rng_seed", "sample_rate"});
    read_field(j, "synth", "n_songs", c.n_songs);
    read_field(j, "synth", "note_pool", c.note_pool);
    read_field(j, "synth", "notes_per_song", c.notes_per_song);
    read_field(j, "synth", "note_duration", c.note_duration);
    read_field(j, "synth", "hums_per_song", c.hums_per_song);
    read_field(j, "synth", "pitch_jitter_cents", c.pitch_jitter_cents);
    read_field(j, "synth", "tempo_jitter", c.tempo_jitter);
    read_field(j, "synth", "rng_seed", c.rng_seed);
    read_field(j, "synth", "sample_rate", c.sample_rate);
    if (j.contains("snr_db")) {
        if (j.at("snr_db").is_null()) {
            c.snr_db = std::numeric_limits<double>::infinity();  // noise disabled
        } else {
            read_field(j, "synth", "snr_db", c.snr_db);
        }
    }
}

void parse_spectrogram(const json& j, SpectrogramConfig& c) {
    check_keys(j, "spectrogram",
               {"filter_length", "hop_length", "win_length", "n_mels", "fmin", "fmax",
                "log_floor"});
    read_field(j, "spectrogram", "filter_length", c.filter_length);
    read_field(j, "spectrogram", "hop_length", c.hop_length);
    read_field(j, "spectrogram", "win_length", c.win_length);
    read_field(j, "spectrogram", "n_mels", c.n_mels);
    read_field(j, "spectrogram", "fmin", c.fmin);
    read_field(j, "spectrogram", "log_floor", c.log_floor);
    if (j.contains("fmax") && !j.at("fmax").is_null()) {
        read_field(j, "spectrogram", "fmax", c.fmax);
    }
}

void parse_embedder(const json& j, EmbedderConfig& c) {
    check_keys(j, "embedder",
               {"input_frames", "n_mels", "blocks", "embed_dim", "rng_seed"});
    read_field(j, "embedder", "input_frames", c.input_frames);
    read_field(j, "embedder", "n_mels", c.n_mels);
    read_field(j, "embedder", "embed_dim", c.embed_dim);
    read_field(j, "embedder", "rng_seed", c.rng_seed);
    if (j.contains("blocks")) {
        const json& arr = j.at("blocks");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("embedder.blocks must be a nonempty array");
        c.blocks.clear();
        for (const json& b : arr) {
            BlockSpec spec;
            if (b.is_number_unsigned() || b.is_number_integer()) {
                spec.channels = b.get<std::uint32_t>();  // shorthand: residual block
            } else if (b.is_object()) {
                check_keys(b, "embedder.blocks[]", {"channels", "use_residual"});
                if (!b.contains("channels"))
                    throw ConfigError("embedder.blocks[] entry needs 'channels'");
                read_field(b, "embedder.blocks[]", "channels", spec.channels);
                read_field(b, "embedder.blocks[]", "use_residual", spec.use_residual);
            } else {
                throw ConfigError("embedder.blocks[] entries must be ints or objects");
            }
            c.blocks.push_back(spec);
        }
    }
}

void parse_arcface(const json& j, ArcFaceConfig& c) {
    check_keys(j, "arcface", {"scale", "margin", "n_classes"});
    read_field(j, "arcface", "scale", c.scale);
    read_field(j, "arcface", "margin", c.margin);
    read_field(j, "arcface", "n_classes", c.n_classes);
}

void parse_train(const json& j, TrainConfig& c) {
    check_keys(j, "train",
               {"epochs", "batch_size", "lr", "lr_decay", "lr_decay_every", "weight_decay",
                "rng_seed"});
    read_field(j, "train", "epochs", c.epochs);
    read_field(j, "train", "batch_size", c.batch_size);
    read_field(j, "train", "lr", c.lr);
    read_field(j, "train", "lr_decay", c.lr_decay);
    read_field(j, "train", "lr_decay_every", c.lr_decay_every);
    read_field(j, "train", "weight_decay", c.weight_decay);
    read_field(j, "train", "rng_seed", c.rng_seed);
}

void parse_index(const json& j, IndexConfig& c) {
    check_keys(j, "index", {"kind", "nlist", "nprobe", "M", "ksub", "rng_seed"});
    read_field(j, "index", "kind", c.kind);
    read_field(j, "index", "nlist", c.nlist);
    read_field(j, "index", "nprobe", c.nprobe);
    read_field(j, "index", "M", c.M);
    read_field(j, "index", "ksub", c.ksub);
    read_field(j, "index", "rng_seed", c.rng_seed);
}

void parse_paths(const json& j, std::map<std::string, std::string>& paths) {
    check_keys(j, "paths",
               {"corpus_dir", "wav_dir", "mel_dir", "labels", "checkpoint", "embeddings",
                "index", "report"});
    for (const auto& item : j.items()) {
        if (!item.value().is_string())
            throw ConfigError("paths." + item.key() + " must be a string");
        paths[item.key()] = item.value().get<std::string>();
    }
}

}  // namespace

void IndexConfig::validate() const {
    if (kind != "flat" && kind != "ivf" && kind != "pq")
        throw ConfigError("index.kind must be flat, ivf, or pq");
    if (nlist < 1) throw ConfigError("index.nlist must be >= 1");
    if (nprobe != 0 && nprobe > nlist)
        throw ConfigError("index.nprobe must lie in [1, nlist]");
    if (M < 1) throw ConfigError("index.M must be >= 1");
    if (ksub < 1 || ksub > 256) throw ConfigError("index.ksub must lie in [1, 256]");
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config",
               {"ingest", "synth", "spectrogram", "embedder", "arcface", "train", "index",
                "paths"});

    RunConfig cfg;
    if (j.contains("ingest")) parse_ingest(j.at("ingest"), cfg.ingest);
    if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
    if (j.contains("spectrogram")) parse_spectrogram(j.at("spectrogram"), cfg.spectrogram);
    if (j.contains("embedder")) parse_embedder(j.at("embedder"), cfg.embedder);
    if (j.contains("arcface")) parse_arcface(j.at("arcface"), cfg.arcface);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("index")) parse_index(j.at("index"), cfg.index);
    if (j.contains("paths")) parse_paths(j.at("paths"), cfg.paths);

    cfg.ingest.validate();
    cfg.index.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

void apply_seed_override(RunConfig& cfg, std::uint64_t seed) {
    cfg.synth.rng_seed = seed;
    cfg.embedder.rng_seed = seed;
    cfg.train.rng_seed = seed;
    cfg.index.rng_seed = seed;
}

}  // namespace h2s
