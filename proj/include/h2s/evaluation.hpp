#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "h2s/vector_index.hpp"

namespace h2s {

using Rank = std::optional<std::uint32_t>;  // 1-based position, nullopt when absent

// Position of true_id in the ranked hits. Hits are expected to carry unique
// song ids (gallery deduplicated to one embedding per song).
Rank rank_of_truth(const SearchResult& result, const std::string& true_id);

// Mean reciprocal rank with a cutoff of 10: absent or rank > 10 counts as 0.
double mrr_at_10(const std::vector<Rank>& ranks);  // throws EmptyEval

// Fraction of queries with rank <= k.
double recall_at_k(const std::vector<Rank>& ranks, std::uint32_t k);  // throws EmptyEval

struct EvalReport {
    struct PerQuery {
        std::string query_id;
        std::string true_id;
        Rank rank;
    };
    std::vector<PerQuery> per_query;
    double mrr = 0.0;                         // MRR@10
    std::map<std::uint32_t, double> recall;   // k -> recall@k
    std::size_t n_queries = 0;
};

EvalReport build_report(std::vector<EvalReport::PerQuery> per_query,
                        const std::vector<std::uint32_t>& recall_ks = {1, 5, 10});

// TSV: header then one row per query, "query_id\ttrue_id\trank\treciprocal";
// absent ranks print "-" with reciprocal 0 (the @10 cutoff applies).
void write_report_tsv(const EvalReport& report, const std::filesystem::path& path);
// JSON summary: {"mrr_at_10": ..., "n_queries": ..., "recall": {"k": ...}}.
void write_report_json(const EvalReport& report, const std::filesystem::path& path);

}  // namespace h2s
