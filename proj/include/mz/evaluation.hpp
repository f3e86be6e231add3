#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mz {

// Per query: (doc-id, score) sorted descending by score, ties broken by
// ascending doc-id. Build through add() to keep the invariant.
class RankedRun {
public:
    void add(const std::string& qid, const std::string& docid, double score);

    const std::vector<std::string>& query_ids() const { return query_order_; }
    // sorted ranking for one query
    std::vector<std::pair<std::string, double>> ranking(const std::string& qid) const;
    bool empty() const { return query_order_.empty(); }

private:
    std::vector<std::string> query_order_;  // first-appearance order
    std::map<std::string, std::vector<std::pair<std::string, double>>> docs_;
};

struct QrelSet {
    // (qid, docid) -> grade >= 0; absent pairs read as 0
    std::map<std::string, std::map<std::string, int64_t>> grades;

    int64_t grade(const std::string& qid, const std::string& docid) const;
    // all grades recorded for a query (for IDCG), empty if the query is absent
    std::vector<int64_t> query_grades(const std::string& qid) const;
};

double precision_at_k(const std::vector<int64_t>& ranking_grades, int64_t k);
double average_precision(const std::vector<int64_t>& ranking_grades, int64_t total_relevant);
double ndcg_at_k(const std::vector<int64_t>& ranking_grades,
                 const std::vector<int64_t>& all_grades, int64_t k);
double mrr(const std::vector<int64_t>& ranking_grades);

// metric names: map | mrr | p@K | ndcg@K
struct EvalResult {
    std::vector<std::string> metrics;
    std::map<std::string, double> means;                           // metric -> mean
    std::map<std::string, std::map<std::string, double>> per_query;  // metric -> qid -> value
};

EvalResult evaluate_run(const RankedRun& run, const QrelSet& qrels,
                        const std::vector<std::string>& metrics);

void write_trec_run(const RankedRun& run, const std::string& run_name, const std::string& path);
RankedRun read_trec_run(const std::vector<std::string>& lines);
QrelSet read_trec_qrels(const std::vector<std::string>& lines);

}  // namespace mz
