#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "h2s/errors.hpp"
#include "h2s/evaluation.hpp"
#include "h2s/rng.hpp"
#include "oracles.hpp"

using namespace h2s;

namespace {

SearchResult hits(std::vector<std::string> ids) {
    SearchResult r;
    double d = 0.0;
    for (std::string& id : ids) {
        r.hits.push_back({std::move(id), d});
        d += 0.5;
    }
    return r;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("rank_of_truth") {
    const SearchResult r = hits({"a", "b", "c"});
    CHECK(rank_of_truth(r, "a") == Rank{1});
    CHECK(rank_of_truth(r, "b") == Rank{2});
    CHECK(rank_of_truth(r, "c") == Rank{3});
    CHECK(rank_of_truth(r, "zzz") == std::nullopt);
    CHECK(rank_of_truth(SearchResult{}, "a") == std::nullopt);
}

TEST_CASE("mrr fixtures") {
    CHECK(mrr_at_10({Rank{1}, Rank{2}, std::nullopt}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mrr_at_10({Rank{1}}) == 1.0);
    CHECK(mrr_at_10({std::nullopt}) == 0.0);
    CHECK(mrr_at_10({Rank{10}}) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(mrr_at_10({Rank{11}}) == 0.0);  // the cutoff bites
    CHECK(mrr_at_10({Rank{4}, Rank{4}}) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(mrr_at_10({}), EmptyEval);
}

TEST_CASE("recall fixtures and monotonicity") {
    const std::vector<Rank> ranks = {Rank{1}, Rank{3}, Rank{7}, std::nullopt, Rank{12}};
    CHECK(recall_at_k(ranks, 1) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(recall_at_k(ranks, 3) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(recall_at_k(ranks, 10) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(recall_at_k(ranks, 12) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK_THROWS_AS(recall_at_k(ranks, 0), ConfigError);
    CHECK_THROWS_AS(recall_at_k({}, 5), EmptyEval);

    for (std::uint32_t k = 1; k < 15; ++k) {
        CHECK(recall_at_k(ranks, k) <= recall_at_k(ranks, k + 1));
    }
}

TEST_CASE("mrr is bounded by recall@10 on random rank lists") {
    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Rank> ranks;
        const std::size_t n = 1 + rng.uniform_index(40);
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.2) {
                ranks.push_back(std::nullopt);
            } else {
                ranks.push_back(static_cast<std::uint32_t>(1 + rng.uniform_index(20)));
            }
        }
        const double mrr = mrr_at_10(ranks);
        const double r10 = recall_at_k(ranks, 10);
        CHECK(mrr >= 0.0);
        CHECK(mrr <= r10 + 1e-12);
        CHECK(r10 <= 1.0);
    }
}

TEST_CASE("mrr is permutation invariant") {
    Rng rng(72);
    std::vector<Rank> ranks;
    for (int i = 0; i < 30; ++i) {
        ranks.push_back(i % 4 == 0 ? Rank{} : Rank{static_cast<std::uint32_t>(1 + i % 13)});
    }
    const double before = mrr_at_10(ranks);
    rng.shuffle(ranks);
    CHECK(mrr_at_10(ranks) == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("build_report aggregates per-query ranks") {
    std::vector<EvalReport::PerQuery> rows = {
        {"q0", "s0", Rank{1}},
        {"q1", "s1", Rank{2}},
        {"q2", "s2", std::nullopt},
        {"q3", "s3", Rank{11}},
    };
    const EvalReport report = build_report(rows);
    CHECK(report.n_queries == 4);
    CHECK(report.mrr == doctest::Approx((1.0 + 0.5) / 4.0).epsilon(1e-12));
    CHECK(report.recall.at(1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(report.recall.at(5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(report.recall.at(10) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tsv report format") {
    const auto dir = oracle::scratch_dir("report");
    const EvalReport report = build_report({
        {"hum_0", "song_0", Rank{1}},
        {"hum_1", "song_1", std::nullopt},
        {"hum_2", "song_2", Rank{4}},
        {"hum_3", "song_3", Rank{11}},
    });
    const auto path = dir / "report.tsv";
    write_report_tsv(report, path);
    CHECK(slurp(path) ==
          "query_id\ttrue_id\trank\treciprocal\n"
          "hum_0\tsong_0\t1\t1\n"
          "hum_1\tsong_1\t-\t0\n"
          "hum_2\tsong_2\t4\t0.25\n"
          "hum_3\tsong_3\t11\t0\n");
}

TEST_CASE("json report format") {
    const auto dir = oracle::scratch_dir("report_json");
    const EvalReport report = build_report({
        {"hum_0", "song_0", Rank{1}},
        {"hum_1", "song_1", Rank{2}},
    });
    const auto path = dir / "report.json";
    write_report_json(report, path);
    const nlohmann::json j = nlohmann::json::parse(slurp(path));
    CHECK(j.at("mrr_at_10").get<double>() == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(j.at("n_queries").get<std::size_t>() == 2);
    CHECK(j.at("recall").at("1").get<double>() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(j.at("recall").at("5").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(j.at("recall").at("10").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
}
