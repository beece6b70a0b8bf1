#include "h2s/evaluation.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "h2s/errors.hpp"
#include "h2s/io_util.hpp"

namespace h2s {

Rank rank_of_truth(const SearchResult& result, const std::string& true_id) {
    for (std::size_t i = 0; i < result.hits.size(); ++i) {
        if (result.hits[i].song_id == true_id) return static_cast<std::uint32_t>(i + 1);
    }
    return std::nullopt;
}

double mrr_at_10(const std::vector<Rank>& ranks) {
    if (ranks.empty()) throw EmptyEval("no queries to evaluate");
    double sum = 0.0;
    for (const Rank& r : ranks) {
        if (r && *r <= 10) sum += 1.0 / static_cast<double>(*r);
    }
    return sum / static_cast<double>(ranks.size());
}

double recall_at_k(const std::vector<Rank>& ranks, std::uint32_t k) {
    if (ranks.empty()) throw EmptyEval("no queries to evaluate");
    if (k < 1) throw ConfigError("k must be >= 1");
    std::size_t hit = 0;
    for (const Rank& r : ranks) {
        if (r && *r <= k) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(ranks.size());
}

EvalReport build_report(std::vector<EvalReport::PerQuery> per_query,
                        const std::vector<std::uint32_t>& recall_ks) {
    EvalReport report;
    report.per_query = std::move(per_query);
    report.n_queries = report.per_query.size();
    std::vector<Rank> ranks;
    ranks.reserve(report.n_queries);
    for (const auto& q : report.per_query) ranks.push_back(q.rank);
    report.mrr = mrr_at_10(ranks);
    for (std::uint32_t k : recall_ks) report.recall[k] = recall_at_k(ranks, k);
    return report;
}

void write_report_tsv(const EvalReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "query_id\ttrue_id\trank\treciprocal\n";
    for (const auto& q : report.per_query) {
        out << q.query_id << '\t' << q.true_id << '\t';
        if (q.rank) {
            out << *q.rank;
        } else {
            out << '-';
        }
        const double rec = q.rank && *q.rank <= 10 ? 1.0 / static_cast<double>(*q.rank) : 0.0;
        out << '\t' << rec << '\n';
    }
    const std::string s = out.str();
    write_file_bytes(path, s.data(), s.size());
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["mrr_at_10"] = report.mrr;
    j["n_queries"] = report.n_queries;
    nlohmann::json rec = nlohmann::json::object();
    for (const auto& [k, v] : report.recall) rec[std::to_string(k)] = v;
    j["recall"] = rec;
    const std::string s = j.dump(2) + "\n";
    write_file_bytes(path, s.data(), s.size());
}

}  // namespace h2s
