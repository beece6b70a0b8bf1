#include "h2s/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "h2s/errors.hpp"
#include "h2s/io_util.hpp"
#include "h2s/rng.hpp"

namespace h2s {

namespace {

constexpr char kIndexMagic[8] = {'H', '2', 'S', 'I', 'D', 'X', '1', '\0'};
constexpr char kEmbMagic[8] = {'H', '2', 'S', 'E', 'M', 'B', '1', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

double sqdist(const float* a, const float* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return acc;
}

double sqdist_fd(const float* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        acc += diff * diff;
    }
    return acc;
}

// (distance, internal id) pairs -> ranked hits; ties break to the lower id.
SearchResult make_result(std::vector<std::pair<double, std::uint32_t>>& cand, std::size_t k,
                         const std::vector<std::string>& ids, const std::string& query_id) {
    const std::size_t take = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
    SearchResult r;
    r.query_id = query_id;
    r.hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        r.hits.push_back({ids[cand[i].second], cand[i].first});
    }
    return r;
}

void check_unique_ids(const std::vector<std::string>& ids) {
    std::unordered_set<std::string> seen;
    for (const std::string& id : ids) {
        if (!seen.insert(id).second) throw DuplicateId("duplicate id " + id);
    }
}

void write_id(std::ostream& os, const std::string& id) {
    write_u32(os, static_cast<std::uint32_t>(id.size()));
    write_bytes(os, id.data(), id.size());
}

std::string read_id(std::istream& is) {
    const std::uint32_t len = read_u32(is);
    if (len > 1u << 20) throw IoError("implausible id length");
    std::string id(len, '\0');
    read_bytes(is, id.data(), len);
    return id;
}

}  // namespace

void flat_add(FlatIndex& index, const std::string& id, std::span<const float> v) {
    if (v.size() != index.dim) {
        throw DimMismatch("vector has dim " + std::to_string(v.size()) + ", index has " +
                          std::to_string(index.dim));
    }
    if (!index.id_set.insert(id).second) throw DuplicateId("id " + id + " already indexed");
    index.ids.push_back(id);
    index.vectors.rows += 1;
    index.vectors.data.insert(index.vectors.data.end(), v.begin(), v.end());
}

SearchResult flat_search(const FlatIndex& index, std::span<const float> q, std::size_t k,
                         const std::string& query_id) {
    if (index.size() == 0) throw EmptyIndex("flat index is empty");
    if (q.size() != index.dim) throw DimMismatch("query dim != index dim");
    if (k < 1) throw ConfigError("k must be >= 1");

    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        cand.emplace_back(sqdist(q.data(), index.vectors.row(i), index.dim),
                          static_cast<std::uint32_t>(i));
    }
    return make_result(cand, k, index.ids, query_id);
}

MatF kmeans_train(const MatF& data, std::size_t k, std::size_t iters, std::uint64_t seed) {
    const std::size_t N = data.rows, D = data.cols;
    if (k < 1) throw TooFewPoints("k must be >= 1");
    if (N < k) throw TooFewPoints("need at least " + std::to_string(k) + " points, have " +
                                  std::to_string(N));

    Rng rng(seed);
    MatD cent(k, D);

    // k-means++ seeding.
    const std::size_t first = rng.uniform_index(N);
    for (std::size_t d = 0; d < D; ++d) cent.at(0, d) = data.at(first, d);
    std::vector<double> d2(N);
    for (std::size_t i = 0; i < N; ++i) d2[i] = sqdist_fd(data.row(i), cent.row(0), D);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double cum = 0.0;
            pick = N - 1;
            for (std::size_t i = 0; i < N; ++i) {
                cum += d2[i];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_index(N);
        }
        for (std::size_t d = 0; d < D; ++d) cent.at(c, d) = data.at(pick, d);
        for (std::size_t i = 0; i < N; ++i) {
            d2[i] = std::min(d2[i], sqdist_fd(data.row(i), cent.row(c), D));
        }
    }

    std::vector<std::size_t> assign(N, 0);
    for (std::size_t it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < N; ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t bj = 0;
            for (std::size_t j = 0; j < k; ++j) {
                const double dist = sqdist_fd(data.row(i), cent.row(j), D);
                if (dist < best) {
                    best = dist;
                    bj = j;
                }
            }
            assign[i] = bj;
        }

        MatD sums(k, D);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < N; ++i) {
            ++counts[assign[i]];
            double* s = sums.row(assign[i]);
            const float* x = data.row(i);
            for (std::size_t d = 0; d < D; ++d) s[d] += x[d];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;
            for (std::size_t d = 0; d < D; ++d) {
                cent.at(j, d) = sums.at(j, d) / static_cast<double>(counts[j]);
            }
        }
        // Empty clusters steal the point lying farthest from its own centroid.
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] != 0) continue;
            double far = -1.0;
            std::size_t pick = 0;
            for (std::size_t i = 0; i < N; ++i) {
                const double dist = sqdist_fd(data.row(i), cent.row(assign[i]), D);
                if (dist > far) {
                    far = dist;
                    pick = i;
                }
            }
            for (std::size_t d = 0; d < D; ++d) cent.at(j, d) = data.at(pick, d);
            counts[assign[pick]] -= 1;
            assign[pick] = j;
            counts[j] = 1;
        }
    }

    MatF out(k, D);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<float>(cent.data[i]);
    return out;
}

IvfIndex ivf_build(const MatF& vectors, const std::vector<std::string>& ids, std::size_t nlist,
                   std::uint64_t seed, std::size_t kmeans_iters) {
    if (vectors.rows != ids.size()) throw DimMismatch("one id per vector required");
    check_unique_ids(ids);
    if (nlist < 1 || vectors.rows < nlist) {
        throw TooFewPoints("need at least nlist=" + std::to_string(nlist) + " vectors, have " +
                           std::to_string(vectors.rows));
    }

    IvfIndex index;
    index.dim = static_cast<std::uint32_t>(vectors.cols);
    index.nlist = static_cast<std::uint32_t>(nlist);
    index.nprobe = index.nlist;  // exhaustive by default; config may lower it
    index.centroids = kmeans_train(vectors, nlist, kmeans_iters, seed);
    index.vectors = vectors;
    index.ids = ids;
    index.lists.resize(nlist);

    for (std::size_t i = 0; i < vectors.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bj = 0;
        for (std::size_t j = 0; j < nlist; ++j) {
            const double dist = sqdist(vectors.row(i), index.centroids.row(j), vectors.cols);
            if (dist < best) {
                best = dist;
                bj = j;
            }
        }
        index.lists[bj].push_back(static_cast<std::uint32_t>(i));
    }
    return index;
}

SearchResult ivf_search(const IvfIndex& index, std::span<const float> q, std::size_t k,
                        std::size_t nprobe, const std::string& query_id) {
    if (index.size() == 0) throw EmptyIndex("ivf index is empty");
    if (q.size() != index.dim) throw DimMismatch("query dim != index dim");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (nprobe < 1 || nprobe > index.nlist) {
        throw BadNprobe("nprobe " + std::to_string(nprobe) + " outside [1, " +
                        std::to_string(index.nlist) + "]");
    }

    std::vector<std::pair<double, std::uint32_t>> order;
    order.reserve(index.nlist);
    for (std::size_t j = 0; j < index.nlist; ++j) {
        order.emplace_back(sqdist(q.data(), index.centroids.row(j), index.dim),
                           static_cast<std::uint32_t>(j));
    }
    std::partial_sort(order.begin(), order.begin() + nprobe, order.end());

    std::vector<std::pair<double, std::uint32_t>> cand;
    for (std::size_t p = 0; p < nprobe; ++p) {
        for (std::uint32_t i : index.lists[order[p].second]) {
            cand.emplace_back(sqdist(q.data(), index.vectors.row(i), index.dim), i);
        }
    }
    return make_result(cand, k, index.ids, query_id);
}

PqIndex pq_train(const MatF& data, const std::vector<std::string>& ids, std::uint32_t M,
                 std::uint32_t ksub, std::uint64_t seed, std::size_t kmeans_iters) {
    if (data.rows != ids.size()) throw DimMismatch("one id per vector required");
    check_unique_ids(ids);
    if (M < 1 || data.cols % M != 0) {
        throw BadSubspace("dim " + std::to_string(data.cols) + " not divisible by M=" +
                          std::to_string(M));
    }
    if (ksub < 1 || ksub > 256) throw ConfigError("ksub must lie in [1, 256]");
    if (data.rows < ksub) {
        throw TooFewPoints("need at least ksub=" + std::to_string(ksub) + " vectors, have " +
                           std::to_string(data.rows));
    }

    PqIndex cb;
    cb.dim = static_cast<std::uint32_t>(data.cols);
    cb.M = M;
    cb.ksub = ksub;
    cb.ids = ids;
    const std::size_t dsub = cb.dsub();

    for (std::uint32_t m = 0; m < M; ++m) {
        MatF slice(data.rows, dsub);
        for (std::size_t i = 0; i < data.rows; ++i) {
            const float* src = data.row(i) + m * dsub;
            std::copy(src, src + dsub, slice.row(i));
        }
        cb.codebooks.push_back(kmeans_train(slice, ksub, kmeans_iters, derive_seed(seed, 5, m)));
    }

    cb.codes = Matrix<std::uint8_t>(data.rows, M);
    for (std::size_t i = 0; i < data.rows; ++i) {
        const std::vector<std::uint8_t> code =
            pq_encode(cb, std::span<const float>(data.row(i), data.cols));
        std::copy(code.begin(), code.end(), cb.codes.row(i));
    }
    return cb;
}

std::vector<std::uint8_t> pq_encode(const PqIndex& cb, std::span<const float> v) {
    if (v.size() != cb.dim) throw DimMismatch("vector dim != codebook dim");
    const std::size_t dsub = cb.dsub();
    std::vector<std::uint8_t> code(cb.M);
    for (std::uint32_t m = 0; m < cb.M; ++m) {
        const float* slice = v.data() + m * dsub;
        double best = std::numeric_limits<double>::infinity();
        std::size_t bj = 0;
        for (std::size_t j = 0; j < cb.ksub; ++j) {
            const double dist = sqdist(slice, cb.codebooks[m].row(j), dsub);
            if (dist < best) {
                best = dist;
                bj = j;
            }
        }
        code[m] = static_cast<std::uint8_t>(bj);
    }
    return code;
}

std::vector<float> pq_decode(const PqIndex& cb, std::span<const std::uint8_t> code) {
    if (code.size() != cb.M) throw DimMismatch("code length != M");
    const std::size_t dsub = cb.dsub();
    std::vector<float> v(cb.dim);
    for (std::uint32_t m = 0; m < cb.M; ++m) {
        const float* c = cb.codebooks[m].row(code[m]);
        std::copy(c, c + dsub, v.data() + m * dsub);
    }
    return v;
}

SearchResult pq_search(const PqIndex& cb, std::span<const float> q, std::size_t k,
                       const std::string& query_id) {
    if (cb.size() == 0) throw EmptyIndex("pq index is empty");
    if (q.size() != cb.dim) throw DimMismatch("query dim != index dim");
    if (k < 1) throw ConfigError("k must be >= 1");

    const std::size_t dsub = cb.dsub();
    MatD tables(cb.M, cb.ksub);
    for (std::uint32_t m = 0; m < cb.M; ++m) {
        const float* slice = q.data() + m * dsub;
        for (std::size_t j = 0; j < cb.ksub; ++j) {
            tables.at(m, j) = sqdist(slice, cb.codebooks[m].row(j), dsub);
        }
    }

    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(cb.size());
    for (std::size_t i = 0; i < cb.size(); ++i) {
        const std::uint8_t* code = cb.codes.row(i);
        double acc = 0.0;
        for (std::uint32_t m = 0; m < cb.M; ++m) acc += tables.at(m, code[m]);
        cand.emplace_back(acc, static_cast<std::uint32_t>(i));
    }
    return make_result(cand, k, cb.ids, query_id);
}

std::uint32_t AnyIndex::dim() const {
    switch (kind) {
        case IndexKind::flat: return flat.dim;
        case IndexKind::ivf: return ivf.dim;
        case IndexKind::pq: return pq.dim;
    }
    return 0;
}

std::size_t AnyIndex::size() const {
    switch (kind) {
        case IndexKind::flat: return flat.size();
        case IndexKind::ivf: return ivf.size();
        case IndexKind::pq: return pq.size();
    }
    return 0;
}

SearchResult any_search(const AnyIndex& index, std::span<const float> q, std::size_t k,
                        const std::string& query_id) {
    switch (index.kind) {
        case IndexKind::flat: return flat_search(index.flat, q, k, query_id);
        case IndexKind::ivf: return ivf_search(index.ivf, q, k, index.ivf.nprobe, query_id);
        case IndexKind::pq: return pq_search(index.pq, q, k, query_id);
    }
    throw ConfigError("unknown index kind");
}

void save_index(const AnyIndex& index, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    write_bytes(f, kIndexMagic, 8);
    const std::uint8_t kind = static_cast<std::uint8_t>(index.kind);
    write_bytes(f, &kind, 1);
    write_u32(f, kIndexVersion);

    switch (index.kind) {
        case IndexKind::flat: {
            const FlatIndex& x = index.flat;
            write_u32(f, x.dim);
            write_u32(f, static_cast<std::uint32_t>(x.size()));
            for (std::size_t i = 0; i < x.size(); ++i) {
                write_id(f, x.ids[i]);
                write_f32_array(f, x.vectors.row(i), x.dim);
            }
            break;
        }
        case IndexKind::ivf: {
            const IvfIndex& x = index.ivf;
            write_u32(f, x.dim);
            write_u32(f, x.nlist);
            write_u32(f, x.nprobe);
            write_u32(f, static_cast<std::uint32_t>(x.size()));
            write_f32_array(f, x.centroids.data.data(), x.centroids.size());
            for (const auto& list : x.lists) {
                write_u32(f, static_cast<std::uint32_t>(list.size()));
                for (std::uint32_t id : list) write_u32(f, id);
            }
            for (std::size_t i = 0; i < x.size(); ++i) {
                write_id(f, x.ids[i]);
                write_f32_array(f, x.vectors.row(i), x.dim);
            }
            break;
        }
        case IndexKind::pq: {
            const PqIndex& x = index.pq;
            write_u32(f, x.dim);
            write_u32(f, x.M);
            write_u32(f, x.ksub);
            write_u32(f, static_cast<std::uint32_t>(x.size()));
            for (const MatF& book : x.codebooks) {
                write_f32_array(f, book.data.data(), book.size());
            }
            write_bytes(f, x.codes.data.data(), x.codes.data.size());
            for (const std::string& id : x.ids) write_id(f, id);
            break;
        }
    }
    f.flush();
    if (!f) throw IoError("write failed for " + path.string());
}

AnyIndex load_index(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    expect_magic(f, kIndexMagic, path.string());
    std::uint8_t kind = 0;
    read_bytes(f, &kind, 1);
    if (kind > 2) throw BadMagic("unknown index kind in " + path.string());
    const std::uint32_t version = read_u32(f);
    if (version != kIndexVersion) {
        throw VersionMismatch("index version " + std::to_string(version) + ", expected " +
                              std::to_string(kIndexVersion));
    }

    AnyIndex out;
    out.kind = static_cast<IndexKind>(kind);
    switch (out.kind) {
        case IndexKind::flat: {
            FlatIndex x(read_u32(f));
            const std::uint32_t n = read_u32(f);
            std::vector<float> v(x.dim);
            for (std::uint32_t i = 0; i < n; ++i) {
                const std::string id = read_id(f);
                read_f32_array(f, v.data(), x.dim);
                flat_add(x, id, v);
            }
            out.flat = std::move(x);
            break;
        }
        case IndexKind::ivf: {
            IvfIndex x;
            x.dim = read_u32(f);
            x.nlist = read_u32(f);
            x.nprobe = read_u32(f);
            const std::uint32_t n = read_u32(f);
            if (x.nlist < 1 || x.nprobe < 1 || x.nprobe > x.nlist)
                throw IoError("inconsistent ivf header in " + path.string());
            x.centroids = MatF(x.nlist, x.dim);
            read_f32_array(f, x.centroids.data.data(), x.centroids.size());
            x.lists.resize(x.nlist);
            std::size_t total = 0;
            for (auto& list : x.lists) {
                const std::uint32_t cnt = read_u32(f);
                list.resize(cnt);
                for (std::uint32_t& id : list) {
                    id = read_u32(f);
                    if (id >= n) throw IoError("ivf list entry out of range in " + path.string());
                }
                total += cnt;
            }
            if (total != n) throw IoError("ivf lists do not cover all vectors in " + path.string());
            x.vectors = MatF(n, x.dim);
            x.ids.resize(n);
            for (std::uint32_t i = 0; i < n; ++i) {
                x.ids[i] = read_id(f);
                read_f32_array(f, x.vectors.row(i), x.dim);
            }
            out.ivf = std::move(x);
            break;
        }
        case IndexKind::pq: {
            PqIndex x;
            x.dim = read_u32(f);
            x.M = read_u32(f);
            x.ksub = read_u32(f);
            const std::uint32_t n = read_u32(f);
            if (x.M < 1 || x.dim % x.M != 0 || x.ksub < 1 || x.ksub > 256)
                throw IoError("inconsistent pq header in " + path.string());
            for (std::uint32_t m = 0; m < x.M; ++m) {
                MatF book(x.ksub, x.dsub());
                read_f32_array(f, book.data.data(), book.size());
                x.codebooks.push_back(std::move(book));
            }
            x.codes = Matrix<std::uint8_t>(n, x.M);
            read_bytes(f, x.codes.data.data(), x.codes.data.size());
            x.ids.resize(n);
            for (std::uint32_t i = 0; i < n; ++i) x.ids[i] = read_id(f);
            out.pq = std::move(x);
            break;
        }
    }
    return out;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    write_bytes(f, kEmbMagic, 8);
    write_u32(f, table.dim);
    write_u32(f, static_cast<std::uint32_t>(table.records.size()));
    for (const Embedding& e : table.records) {
        if (e.vector.size() != table.dim)
            throw DimMismatch("embedding " + e.song_id + " has wrong dim");
        if (e.song_id.size() > 0xffff) throw IoError("id too long: " + e.song_id);
        write_u16(f, static_cast<std::uint16_t>(e.song_id.size()));
        write_bytes(f, e.song_id.data(), e.song_id.size());
        write_f32_array(f, e.vector.data(), e.vector.size());
    }
    f.flush();
    if (!f) throw IoError("write failed for " + path.string());
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    expect_magic(f, kEmbMagic, path.string());
    EmbeddingTable table;
    table.dim = read_u32(f);
    const std::uint32_t n = read_u32(f);
    table.records.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Embedding e;
        const std::uint16_t len = read_u16(f);
        e.song_id.resize(len);
        read_bytes(f, e.song_id.data(), len);
        e.vector.resize(table.dim);
        read_f32_array(f, e.vector.data(), table.dim);
        table.records.push_back(std::move(e));
    }
    return table;
}

}  // namespace h2s
