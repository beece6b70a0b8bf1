#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "h2s/embedder.hpp"
#include "h2s/matrix.hpp"

namespace h2s {

struct Hit {
    std::string song_id;
    double squared_distance;
};

struct SearchResult {
    std::vector<Hit> hits;  // squared distance nondecreasing, ties by insertion id
    std::string query_id;
};

// Exhaustive exact squared-L2 search. Vectors are stored float32; distances
// accumulate in float64. Insertion order defines internal ids 0..N-1.
struct FlatIndex {
    std::uint32_t dim = 0;
    MatF vectors;  // N x dim
    std::vector<std::string> ids;
    std::unordered_set<std::string> id_set;  // rebuilt on load, not serialized

    explicit FlatIndex(std::uint32_t d = 0) : dim(d), vectors(0, d) {}
    std::size_t size() const { return ids.size(); }
};

void flat_add(FlatIndex& index, const std::string& id, std::span<const float> v);
SearchResult flat_search(const FlatIndex& index, std::span<const float> q, std::size_t k,
                         const std::string& query_id = "");

// k-means++ seeding followed by `iters` Lloyd iterations; empty clusters are
// re-seeded to the point farthest from its assigned centroid. Deterministic
// for a fixed seed.
MatF kmeans_train(const MatF& data, std::size_t k, std::size_t iters, std::uint64_t seed);

struct IvfIndex {
    std::uint32_t dim = 0;
    std::uint32_t nlist = 0;
    std::uint32_t nprobe = 0;  // default probe count; nlist unless configured
    MatF centroids;            // nlist x dim
    std::vector<std::vector<std::uint32_t>> lists;  // internal ids per centroid
    MatF vectors;              // N x dim, internal-id order
    std::vector<std::string> ids;

    std::size_t size() const { return ids.size(); }
};

IvfIndex ivf_build(const MatF& vectors, const std::vector<std::string>& ids, std::size_t nlist,
                   std::uint64_t seed, std::size_t kmeans_iters = 25);
SearchResult ivf_search(const IvfIndex& index, std::span<const float> q, std::size_t k,
                        std::size_t nprobe, const std::string& query_id = "");

struct PqIndex {
    std::uint32_t dim = 0;
    std::uint32_t M = 0;     // subspace count; dsub = dim / M
    std::uint32_t ksub = 0;  // centroids per subspace, <= 256
    std::vector<MatF> codebooks;     // M matrices of ksub x dsub
    Matrix<std::uint8_t> codes;      // N x M
    std::vector<std::string> ids;

    std::uint32_t dsub() const { return dim / M; }
    std::size_t size() const { return ids.size(); }
};

PqIndex pq_train(const MatF& data, const std::vector<std::string>& ids, std::uint32_t M,
                 std::uint32_t ksub, std::uint64_t seed, std::size_t kmeans_iters = 25);
std::vector<std::uint8_t> pq_encode(const PqIndex& cb, std::span<const float> v);
std::vector<float> pq_decode(const PqIndex& cb, std::span<const std::uint8_t> code);
// Asymmetric distance: per-subspace lookup tables from the query, summed per code.
SearchResult pq_search(const PqIndex& cb, std::span<const float> q, std::size_t k,
                       const std::string& query_id = "");

enum class IndexKind : std::uint8_t { flat = 0, ivf = 1, pq = 2 };

struct AnyIndex {
    IndexKind kind = IndexKind::flat;
    FlatIndex flat;
    IvfIndex ivf;
    PqIndex pq;

    std::uint32_t dim() const;
    std::size_t size() const;
};

// Search with the index's own defaults (IVF probes its stored nprobe).
SearchResult any_search(const AnyIndex& index, std::span<const float> q, std::size_t k,
                        const std::string& query_id = "");

// Index file: magic "H2SIDX1\0", u8 kind, u32 version=1, then a kind-specific
// payload (integers u32, reals float32, PQ codes one byte each).
void save_index(const AnyIndex& index, const std::filesystem::path& path);
AnyIndex load_index(const std::filesystem::path& path);

// Embedding table: magic "H2SEMB1\0", u32 dim, u32 N, then per record
// u16 id length + UTF-8 id + dim float32 values.
struct EmbeddingTable {
    std::uint32_t dim = 0;
    std::vector<Embedding> records;
};

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

}  // namespace h2s
