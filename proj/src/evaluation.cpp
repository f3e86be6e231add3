#include "mz/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mz {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

bool rank_before(const std::pair<std::string, double>& a,
                 const std::pair<std::string, double>& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
}

}  // namespace

void RankedRun::add(const std::string& qid, const std::string& docid, double score) {
    auto it = docs_.find(qid);
    if (it == docs_.end()) {
        query_order_.push_back(qid);
        it = docs_.emplace(qid, std::vector<std::pair<std::string, double>>{}).first;
    }
    for (const auto& d : it->second)
        if (d.first == docid) fail("duplicate doc-id " + docid + " for query " + qid);
    it->second.push_back({docid, score});
}

std::vector<std::pair<std::string, double>> RankedRun::ranking(const std::string& qid) const {
    auto it = docs_.find(qid);
    if (it == docs_.end()) fail("unknown query: " + qid);
    auto sorted = it->second;
    std::sort(sorted.begin(), sorted.end(), rank_before);
    return sorted;
}

int64_t QrelSet::grade(const std::string& qid, const std::string& docid) const {
    auto q = grades.find(qid);
    if (q == grades.end()) return 0;
    auto d = q->second.find(docid);
    return d == q->second.end() ? 0 : d->second;
}

std::vector<int64_t> QrelSet::query_grades(const std::string& qid) const {
    std::vector<int64_t> out;
    auto q = grades.find(qid);
    if (q == grades.end()) return out;
    for (const auto& [doc, g] : q->second) out.push_back(g);
    return out;
}

double precision_at_k(const std::vector<int64_t>& ranking_grades, int64_t k) {
    if (k < 1) fail("precision@k needs k >= 1");
    int64_t hits = 0;
    for (int64_t i = 0; i < k && i < (int64_t)ranking_grades.size(); ++i)
        if (ranking_grades[(size_t)i] > 0) ++hits;
    return (double)hits / (double)k;  // absent tail counts as non-relevant
}

double average_precision(const std::vector<int64_t>& ranking_grades, int64_t total_relevant) {
    if (total_relevant <= 0) return 0.0;
    double sum = 0;
    int64_t seen = 0;
    for (size_t i = 0; i < ranking_grades.size(); ++i) {
        if (ranking_grades[i] > 0) {
            ++seen;
            sum += (double)seen / (double)(i + 1);
        }
    }
    if (seen > total_relevant) fail("average_precision: retrieved more relevant than total");
    return sum / (double)total_relevant;
}

double ndcg_at_k(const std::vector<int64_t>& ranking_grades,
                 const std::vector<int64_t>& all_grades, int64_t k) {
    if (k < 1) fail("ndcg@k needs k >= 1");
    auto dcg = [&](const std::vector<int64_t>& grades) {
        double sum = 0;
        for (int64_t i = 0; i < k && i < (int64_t)grades.size(); ++i)
            sum += (std::pow(2.0, (double)grades[(size_t)i]) - 1.0) /
                   std::log2((double)i + 2.0);
        return sum;
    };
    std::vector<int64_t> ideal = all_grades;
    std::sort(ideal.begin(), ideal.end(), std::greater<int64_t>());
    double idcg = dcg(ideal);
    return idcg == 0.0 ? 0.0 : dcg(ranking_grades) / idcg;
}

double mrr(const std::vector<int64_t>& ranking_grades) {
    for (size_t i = 0; i < ranking_grades.size(); ++i)
        if (ranking_grades[i] > 0) return 1.0 / (double)(i + 1);
    return 0.0;
}

namespace {

struct MetricSpec {
    std::string name;  // as written by the caller
    enum class Kind { Map, Mrr, PAtK, NdcgAtK } kind;
    int64_t k = 0;
};

MetricSpec parse_metric(const std::string& name) {
    MetricSpec m;
    m.name = name;
    if (name == "map") {
        m.kind = MetricSpec::Kind::Map;
    } else if (name == "mrr") {
        m.kind = MetricSpec::Kind::Mrr;
    } else if (name.rfind("p@", 0) == 0 || name.rfind("ndcg@", 0) == 0) {
        m.kind = name[0] == 'p' ? MetricSpec::Kind::PAtK : MetricSpec::Kind::NdcgAtK;
        std::string num = name.substr(name.find('@') + 1);
        try {
            size_t used = 0;
            m.k = std::stoll(num, &used);
            if (used != num.size() || m.k < 1) throw std::invalid_argument(num);
        } catch (const std::exception&) {
            fail("bad metric cutoff in: " + name);
        }
    } else {
        fail("unknown metric: " + name);
    }
    return m;
}

}  // namespace

EvalResult evaluate_run(const RankedRun& run, const QrelSet& qrels,
                        const std::vector<std::string>& metrics) {
    if (run.empty()) fail("evaluate_run: empty run");
    std::vector<MetricSpec> specs;
    for (const std::string& name : metrics) specs.push_back(parse_metric(name));

    EvalResult result;
    result.metrics = metrics;
    for (const std::string& qid : run.query_ids()) {
        std::vector<int64_t> grades;
        for (const auto& [doc, score] : run.ranking(qid))
            grades.push_back(qrels.grade(qid, doc));
        std::vector<int64_t> all = qrels.query_grades(qid);
        int64_t total_relevant = 0;
        for (int64_t g : all)
            if (g > 0) ++total_relevant;

        for (const MetricSpec& m : specs) {
            double v = 0;
            switch (m.kind) {
                case MetricSpec::Kind::Map: v = average_precision(grades, total_relevant); break;
                case MetricSpec::Kind::Mrr: v = mrr(grades); break;
                case MetricSpec::Kind::PAtK: v = precision_at_k(grades, m.k); break;
                case MetricSpec::Kind::NdcgAtK: v = ndcg_at_k(grades, all, m.k); break;
            }
            result.per_query[m.name][qid] = v;
        }
    }
    for (const MetricSpec& m : specs) {
        double sum = 0;
        for (const std::string& qid : run.query_ids()) sum += result.per_query[m.name][qid];
        result.means[m.name] = sum / (double)run.query_ids().size();
    }
    return result;
}

void write_trec_run(const RankedRun& run, const std::string& run_name, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open trec run for writing: " + path);
    for (const std::string& qid : run.query_ids()) {
        int64_t rank = 0;
        for (const auto& [doc, score] : run.ranking(qid)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", score);
            out << qid << " Q0 " << doc << " " << ++rank << " " << buf << " " << run_name
                << "\n";
        }
    }
}

RankedRun read_trec_run(const std::vector<std::string>& lines) {
    RankedRun run;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::istringstream in(lines[i]);
        std::string qid, q0, doc, rank, score, name, extra;
        if (!(in >> qid >> q0 >> doc >> rank >> score >> name) || (in >> extra) || q0 != "Q0")
            fail("malformed trec run line " + std::to_string(i + 1));
        try {
            run.add(qid, doc, std::stod(score));
        } catch (const std::invalid_argument&) {
            fail("malformed trec run line " + std::to_string(i + 1));
        }
    }
    return run;
}

QrelSet read_trec_qrels(const std::vector<std::string>& lines) {
    QrelSet qrels;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::istringstream in(lines[i]);
        std::string qid, zero, doc, grade, extra;
        if (!(in >> qid >> zero >> doc >> grade) || (in >> extra))
            fail("malformed qrels line " + std::to_string(i + 1));
        int64_t g;
        try {
            size_t used = 0;
            g = std::stoll(grade, &used);
            if (used != grade.size()) throw std::invalid_argument(grade);
        } catch (const std::exception&) {
            fail("malformed qrels line " + std::to_string(i + 1));
        }
        if (g < 0) fail("negative grade on qrels line " + std::to_string(i + 1));
        qrels.grades[qid][doc] = g;
    }
    return qrels;
}

}  // namespace mz
