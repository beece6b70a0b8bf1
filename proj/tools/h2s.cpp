// Query-by-humming pipeline driver: synth -> preprocess -> train -> embed ->
// build-index -> query/eval. Exit codes: 0 success, 1 partial data failure,
// 2 configuration or usage error. stdout carries machine-readable results
// only; diagnostics go to stderr.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "h2s/audio.hpp"
#include "h2s/config.hpp"
#include "h2s/embedder.hpp"
#include "h2s/errors.hpp"
#include "h2s/evaluation.hpp"
#include "h2s/io_util.hpp"
#include "h2s/spectrogram.hpp"
#include "h2s/synth.hpp"
#include "h2s/vector_index.hpp"

namespace fs = std::filesystem;
using namespace h2s;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Resolve a CLI argument, falling back to config paths, else usage error.
std::string resolve_path(const std::string& arg, const RunConfig& cfg, const char* key,
                         const char* what) {
    if (!arg.empty()) return arg;
    const auto it = cfg.paths.find(key);
    if (it != cfg.paths.end()) return it->second;
    throw ConfigError(std::string(what) + " not given and paths." + key + " not in config");
}

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " does not exist: " + p.string());
}

std::vector<fs::path> collect_files(const fs::path& dir, const std::string& ext) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end(),
              [](const fs::path& a, const fs::path& b) {
                  return a.generic_string() < b.generic_string();
              });
    return out;
}

struct LabelRow {
    std::string stem;     // filename without extension
    std::string song_id;  // ground truth
};

std::vector<LabelRow> read_labels(const fs::path& path) {
    require_exists(path, "labels file");
    const auto bytes = read_file_bytes(path);
    std::string text(bytes.begin(), bytes.end());
    std::vector<LabelRow> rows;
    std::set<std::string> seen;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ConfigError("labels line " + std::to_string(line_no) + " has no tab");
        }
        LabelRow row;
        row.stem = fs::path(line.substr(0, tab)).stem().string();
        row.song_id = line.substr(tab + 1);
        if (row.stem.empty() || row.song_id.empty()) {
            throw ConfigError("labels line " + std::to_string(line_no) + " is incomplete");
        }
        if (!seen.insert(row.stem).second) {
            throw ConfigError("labels file lists " + row.stem + " twice");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

MelSpectrogram wav_to_mel(const fs::path& wav, const RunConfig& cfg) {
    AudioClip clip = load_wav(wav, cfg.ingest);
    clip = resample_linear(clip, cfg.ingest.target_sample_rate);
    clip = normalize_peak(clip);
    return mel_spectrogram(clip, cfg.spectrogram);
}

std::vector<float> embed_mel(const MatF& mel, const EmbedderParams& params,
                             const RunConfig& cfg) {
    const float pad = static_cast<float>(std::log(cfg.spectrogram.log_floor));
    const MatF patch = fix_length(mel, cfg.embedder.input_frames, FixMode::infer, nullptr, pad);
    const std::vector<double> v = forward_embed(params, cfg.embedder, patch);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

const std::vector<std::string>& index_ids(const AnyIndex& index) {
    switch (index.kind) {
        case IndexKind::flat: return index.flat.ids;
        case IndexKind::ivf: return index.ivf.ids;
        case IndexKind::pq: return index.pq.ids;
    }
    throw ConfigError("unknown index kind");
}

int cmd_synth(const RunConfig& cfg, const std::string& out_arg) {
    const fs::path out_dir = resolve_path(out_arg, cfg, "corpus_dir", "output directory");
    const fs::path parent = out_dir.has_parent_path() ? out_dir.parent_path() : fs::path(".");
    if (!fs::exists(parent)) {
        throw ConfigError("parent of output directory does not exist: " + parent.string());
    }
    const SynthCorpus corpus = synth_corpus(cfg.synth);
    write_corpus(corpus, out_dir);
    std::cerr << "wrote " << corpus.songs.size() << " songs and " << corpus.hums.size()
              << " hums to " << out_dir.string() << "\n";
    return 0;
}

int cmd_preprocess(const RunConfig& cfg, const std::string& in_arg, const std::string& out_arg,
                   bool force) {
    const fs::path wav_dir = resolve_path(in_arg, cfg, "wav_dir", "input directory");
    const fs::path out_dir = resolve_path(out_arg, cfg, "mel_dir", "output directory");
    require_exists(wav_dir, "input directory");
    fs::create_directories(out_dir);

    std::size_t failures = 0, written = 0, skipped = 0;
    for (const fs::path& wav : collect_files(wav_dir, ".wav")) {
        const fs::path rel = fs::relative(wav, wav_dir);
        fs::path out = out_dir / rel;
        out.replace_extension(".mel");
        if (!force && fs::exists(out)) {
            ++skipped;
            continue;
        }
        try {
            const MelSpectrogram mel = wav_to_mel(wav, cfg);
            fs::create_directories(out.parent_path());
            save_array(mel.values, out);
            ++written;
        } catch (const Error& e) {
            std::cerr << wav.string() << ": " << e.what() << "\n";
            ++failures;
        }
    }
    std::cerr << "preprocess: " << written << " written, " << skipped << " skipped, "
              << failures << " failed\n";
    return failures == 0 ? 0 : 1;
}

int cmd_train(RunConfig cfg, const std::string& mel_arg, const std::string& labels_arg,
              const std::string& ckpt_arg) {
    const fs::path mel_dir = resolve_path(mel_arg, cfg, "mel_dir", "mel directory");
    const fs::path labels_path = resolve_path(labels_arg, cfg, "labels", "labels file");
    const fs::path ckpt_out = resolve_path(ckpt_arg, cfg, "checkpoint", "checkpoint output");
    require_exists(mel_dir, "mel directory");

    const std::vector<LabelRow> rows = read_labels(labels_path);
    std::map<std::string, std::string> hum_label;  // stem -> song id
    std::set<std::string> known_songs;
    for (const LabelRow& r : rows) {
        hum_label[r.stem] = r.song_id;
        known_songs.insert(r.song_id);
    }

    // Hums take their labeled song id; song files are their own class;
    // anything else cannot be labeled and is left out of training.
    std::vector<MatF> mels;
    std::vector<std::string> mel_label;
    for (const fs::path& mel : collect_files(mel_dir, ".mel")) {
        const std::string stem = mel.stem().string();
        std::string label;
        if (const auto it = hum_label.find(stem); it != hum_label.end()) {
            label = it->second;
        } else if (known_songs.count(stem)) {
            label = stem;
        } else {
            std::cerr << "warning: " << mel.string() << " is not in the labels file; skipped\n";
            continue;
        }
        mels.push_back(load_array(mel));
        mel_label.push_back(label);
    }

    std::set<std::string> classes(mel_label.begin(), mel_label.end());
    if (classes.size() < 2) {
        throw InsufficientData("found " + std::to_string(classes.size()) +
                               " classes; need at least 2");
    }
    std::map<std::string, std::uint32_t> class_of;
    std::uint32_t next = 0;
    for (const std::string& c : classes) class_of[c] = next++;
    std::vector<std::uint32_t> labels;
    labels.reserve(mel_label.size());
    for (const std::string& s : mel_label) labels.push_back(class_of[s]);

    ArcFaceConfig acfg = cfg.arcface;
    if (acfg.n_classes != 0 && acfg.n_classes != classes.size()) {
        throw ConfigError("arcface.n_classes=" + std::to_string(acfg.n_classes) +
                          " but the labels define " + std::to_string(classes.size()));
    }
    acfg.n_classes = static_cast<std::uint32_t>(classes.size());

    const float pad = static_cast<float>(std::log(cfg.spectrogram.log_floor));
    const TrainResult result = train(mels, labels, cfg.embedder, acfg, cfg.train, pad);

    save_checkpoint(result.params, ckpt_out);
    fs::path history = ckpt_out;
    history.replace_extension(".history.csv");
    std::string csv = "epoch,loss,accuracy\n";
    for (std::size_t i = 0; i < result.history.loss.size(); ++i) {
        csv += std::to_string(i) + "," + fmt(result.history.loss[i]) + "," +
               fmt(result.history.accuracy[i]) + "\n";
    }
    write_file_bytes(history, csv.data(), csv.size());
    std::cerr << "trained " << mels.size() << " samples over " << classes.size()
              << " classes; final loss " << fmt(result.history.loss.back()) << ", accuracy "
              << fmt(result.history.accuracy.back()) << "\n";
    return 0;
}

int cmd_embed(const RunConfig& cfg, const std::string& ckpt_arg, const std::string& mel_arg,
              const std::string& out_arg) {
    const fs::path ckpt = resolve_path(ckpt_arg, cfg, "checkpoint", "checkpoint");
    const fs::path mel_dir = resolve_path(mel_arg, cfg, "mel_dir", "mel directory");
    const fs::path out = resolve_path(out_arg, cfg, "embeddings", "embedding output");
    require_exists(ckpt, "checkpoint");
    require_exists(mel_dir, "mel directory");

    const EmbedderParams params = load_checkpoint(ckpt, cfg.embedder);
    EmbeddingTable table;
    table.dim = cfg.embedder.embed_dim;
    std::set<std::string> seen;
    for (const fs::path& mel : collect_files(mel_dir, ".mel")) {
        Embedding e;
        e.song_id = mel.stem().string();
        if (!seen.insert(e.song_id).second) {
            throw DuplicateId("two mel files share the stem " + e.song_id);
        }
        e.vector = embed_mel(load_array(mel), params, cfg);
        table.records.push_back(std::move(e));
    }
    if (table.records.empty()) throw ConfigError("no .mel files under " + mel_dir.string());
    save_embeddings(table, out);
    std::cerr << "embedded " << table.records.size() << " files -> " << out.string() << "\n";
    return 0;
}

int cmd_build_index(const RunConfig& cfg, const std::string& emb_arg,
                    const std::string& out_arg) {
    const fs::path emb_path = resolve_path(emb_arg, cfg, "embeddings", "embedding table");
    const fs::path out = resolve_path(out_arg, cfg, "index", "index output");
    require_exists(emb_path, "embedding table");

    const EmbeddingTable table = load_embeddings(emb_path);
    if (table.records.empty()) throw EmptyIndex("embedding table is empty");

    MatF vectors(table.records.size(), table.dim);
    std::vector<std::string> ids;
    ids.reserve(table.records.size());
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        std::copy(table.records[i].vector.begin(), table.records[i].vector.end(),
                  vectors.row(i));
        ids.push_back(table.records[i].song_id);
    }

    AnyIndex index;
    if (cfg.index.kind == "flat") {
        index.kind = IndexKind::flat;
        index.flat = FlatIndex(table.dim);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            flat_add(index.flat, ids[i], std::span<const float>(vectors.row(i), table.dim));
        }
    } else if (cfg.index.kind == "ivf") {
        index.kind = IndexKind::ivf;
        index.ivf = ivf_build(vectors, ids, cfg.index.nlist, cfg.index.rng_seed);
        if (cfg.index.nprobe != 0) index.ivf.nprobe = cfg.index.nprobe;
    } else {
        index.kind = IndexKind::pq;
        index.pq = pq_train(vectors, ids, cfg.index.M, cfg.index.ksub, cfg.index.rng_seed);
    }
    save_index(index, out);
    std::cerr << "indexed " << index.size() << " vectors (" << cfg.index.kind << ") -> "
              << out.string() << "\n";
    return 0;
}

int cmd_query(const RunConfig& cfg, const std::string& idx_arg, const std::string& ckpt_arg,
              const std::string& input_arg, std::size_t k) {
    const fs::path idx_path = resolve_path(idx_arg, cfg, "index", "index file");
    const fs::path ckpt = resolve_path(ckpt_arg, cfg, "checkpoint", "checkpoint");
    require_exists(idx_path, "index file");
    require_exists(ckpt, "checkpoint");
    if (input_arg.empty()) throw ConfigError("query needs an input WAV or mel file");
    const fs::path input = input_arg;
    require_exists(input, "query input");

    const AnyIndex index = load_index(idx_path);
    const EmbedderParams params = load_checkpoint(ckpt, cfg.embedder);

    // A mel array announces itself by magic; anything else is decoded as WAV.
    MatF mel;
    {
        const auto bytes = read_file_bytes(input);
        static const char kArr[8] = {'H', '2', 'S', 'A', 'R', 'R', '1', '\0'};
        if (bytes.size() >= 8 && std::equal(kArr, kArr + 8,
                                            reinterpret_cast<const char*>(bytes.data()))) {
            mel = load_array(input);
        } else {
            mel = wav_to_mel(input, cfg).values;
        }
    }
    const std::vector<float> q = embed_mel(mel, params, cfg);
    if (q.size() != index.dim()) {
        throw DimMismatch("embedder dim " + std::to_string(q.size()) + " != index dim " +
                          std::to_string(index.dim()));
    }
    const SearchResult r = any_search(index, q, k, input.stem().string());
    for (std::size_t i = 0; i < r.hits.size(); ++i) {
        std::cout << (i + 1) << '\t' << r.hits[i].song_id << '\t'
                  << fmt(r.hits[i].squared_distance) << '\n';
    }
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& idx_arg, const std::string& ckpt_arg,
             const std::string& mel_arg, const std::string& labels_arg,
             const std::string& report_arg) {
    const fs::path idx_path = resolve_path(idx_arg, cfg, "index", "index file");
    const fs::path ckpt = resolve_path(ckpt_arg, cfg, "checkpoint", "checkpoint");
    const fs::path hum_dir = resolve_path(mel_arg, cfg, "mel_dir", "hum mel directory");
    const fs::path labels_path = resolve_path(labels_arg, cfg, "labels", "labels file");
    const fs::path report_out = resolve_path(report_arg, cfg, "report", "report output");
    require_exists(idx_path, "index file");
    require_exists(ckpt, "checkpoint");
    require_exists(hum_dir, "hum mel directory");

    const AnyIndex index = load_index(idx_path);
    const EmbedderParams params = load_checkpoint(ckpt, cfg.embedder);
    const std::vector<LabelRow> rows = read_labels(labels_path);
    if (rows.empty()) throw EmptyEval("labels file is empty");

    // Validate every row up front: the report is all-or-nothing.
    const std::vector<std::string>& gallery = index_ids(index);
    const std::set<std::string> gallery_set(gallery.begin(), gallery.end());
    std::size_t bad = 0;
    for (const LabelRow& r : rows) {
        const fs::path mel = hum_dir / (r.stem + ".mel");
        if (!fs::exists(mel)) {
            std::cerr << "missing mel file for " << r.stem << ": " << mel.string() << "\n";
            ++bad;
        }
        if (!gallery_set.count(r.song_id)) {
            std::cerr << "label " << r.stem << " points at unknown song_id " << r.song_id
                      << "\n";
            ++bad;
        }
    }
    if (bad > 0) {
        std::cerr << bad << " label problem(s); no report written\n";
        return 1;
    }

    std::vector<EvalReport::PerQuery> per_query;
    per_query.reserve(rows.size());
    for (const LabelRow& r : rows) {
        const std::vector<float> q = embed_mel(load_array(hum_dir / (r.stem + ".mel")),
                                               params, cfg);
        if (q.size() != index.dim()) {
            throw DimMismatch("embedder dim " + std::to_string(q.size()) + " != index dim " +
                              std::to_string(index.dim()));
        }
        const SearchResult res = any_search(index, q, 10, r.stem);
        per_query.push_back({r.stem, r.song_id, rank_of_truth(res, r.song_id)});
    }

    const EvalReport report = build_report(std::move(per_query));
    fs::path stem = report_out;
    if (stem.extension() == ".tsv" || stem.extension() == ".json") {
        stem.replace_extension();
    }
    write_report_tsv(report, fs::path(stem).concat(".tsv"));
    write_report_json(report, fs::path(stem).concat(".json"));
    std::cout << fmt(report.mrr) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"query-by-humming retrieval pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_flag("--force", force, "overwrite existing outputs");
    app.add_option("--seed", seed, "override every configured RNG seed");

    std::string arg_out, arg_in, arg_mels, arg_labels, arg_ckpt, arg_emb, arg_index, arg_input,
        arg_report;
    std::size_t arg_k = 10;

    CLI::App* synth = app.add_subcommand("synth", "write the synthetic corpus");
    synth->add_option("out_dir", arg_out, "corpus output directory");

    CLI::App* pre = app.add_subcommand("preprocess", "WAVs to mel arrays");
    pre->add_option("wav_dir", arg_in, "directory of WAV files");
    pre->add_option("out_dir", arg_out, "mel output directory");

    CLI::App* tr = app.add_subcommand("train", "train the embedder");
    tr->add_option("mel_dir", arg_mels, "directory of mel arrays");
    tr->add_option("labels", arg_labels, "labels.tsv");
    tr->add_option("ckpt_out", arg_ckpt, "checkpoint output path");

    CLI::App* em = app.add_subcommand("embed", "embed mel arrays to a table");
    em->add_option("ckpt", arg_ckpt, "checkpoint");
    em->add_option("mel_dir", arg_mels, "directory of mel arrays");
    em->add_option("emb_out", arg_emb, "embedding table output");

    CLI::App* bi = app.add_subcommand("build-index", "build a vector index");
    bi->add_option("embeddings", arg_emb, "embedding table");
    bi->add_option("idx_out", arg_index, "index output path");

    CLI::App* qu = app.add_subcommand("query", "search the index with one clip");
    qu->add_option("index", arg_index, "index file");
    qu->add_option("ckpt", arg_ckpt, "checkpoint");
    qu->add_option("input", arg_input, "WAV or mel file");
    qu->add_option("-k,--k", arg_k, "results to return");

    CLI::App* ev = app.add_subcommand("eval", "evaluate labeled hums");
    ev->add_option("index", arg_index, "index file");
    ev->add_option("ckpt", arg_ckpt, "checkpoint");
    ev->add_option("hum_dir", arg_mels, "directory of hum mel arrays");
    ev->add_option("labels", arg_labels, "labels.tsv");
    ev->add_option("report_out", arg_report, "report stem (writes .tsv and .json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_run_config(config_path);
        if (seed) apply_seed_override(cfg, *seed);

        if (synth->parsed()) return cmd_synth(cfg, arg_out);
        if (pre->parsed()) return cmd_preprocess(cfg, arg_in, arg_out, force);
        if (tr->parsed()) return cmd_train(cfg, arg_mels, arg_labels, arg_ckpt);
        if (em->parsed()) return cmd_embed(cfg, arg_ckpt, arg_mels, arg_emb);
        if (bi->parsed()) return cmd_build_index(cfg, arg_emb, arg_index);
        if (qu->parsed()) return cmd_query(cfg, arg_index, arg_ckpt, arg_input, arg_k);
        if (ev->parsed()) return cmd_eval(cfg, arg_index, arg_ckpt, arg_mels, arg_labels,
                                          arg_report);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
