#include "mz/dataprep.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mz/rng.hpp"

namespace mz {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

int64_t parse_nonneg(const std::string& s, const std::string& what) {
    if (s.empty()) fail(what + ": empty integer field");
    size_t pos = 0;
    long long v;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        fail(what + ": '" + s + "' is not an integer");
    }
    if (pos != s.size()) fail(what + ": '" + s + "' is not an integer");
    if (v < 0) fail(what + ": negative value " + s);
    return v;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("cannot open file: " + path);
    return f;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) fail("cannot write file: " + path);
    return f;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += static_cast<char>(std::tolower(c));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, int64_t min_count,
                            double max_doc_fraction, const std::set<std::string>& stopwords) {
    if (docs.empty()) fail("build_vocabulary: no input documents");
    if (min_count < 1) fail("build_vocabulary: min_count must be >= 1");
    if (max_doc_fraction <= 0 || max_doc_fraction > 1)
        fail("build_vocabulary: max_doc_fraction must be in (0, 1]");

    std::map<std::string, int64_t> freq;
    std::map<std::string, int64_t> doc_count;
    for (const auto& doc : docs) {
        std::set<std::string> seen;
        for (const auto& w : doc) {
            ++freq[w];
            seen.insert(w);
        }
        for (const auto& w : seen) ++doc_count[w];
    }

    std::vector<std::pair<std::string, int64_t>> kept;
    double ndocs = static_cast<double>(docs.size());
    for (const auto& [w, f] : freq) {
        if (f < min_count) continue;
        if (static_cast<double>(doc_count[w]) / ndocs > max_doc_fraction) continue;
        if (stopwords.count(w)) continue;
        kept.emplace_back(w, f);
    }
    if (kept.empty()) fail("build_vocabulary: every word was filtered out");

    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.wid_to_word = {"", ""};
    v.frequency = {0, 0};
    for (const auto& [w, f] : kept) {
        v.word_to_wid[w] = v.size();
        v.wid_to_word.push_back(w);
        v.frequency.push_back(f);
    }
    return v;
}

std::vector<CorpusEntry> encode_corpus(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& texts,
    const Vocabulary& vocab, int64_t fixed_length) {
    if (fixed_length < 1) fail("encode_corpus: fixed_length must be >= 1");
    std::vector<CorpusEntry> out;
    out.reserve(texts.size());
    for (const auto& [tid, tokens] : texts) {
        CorpusEntry e;
        e.tid = tid;
        e.original_length = std::min<int64_t>(static_cast<int64_t>(tokens.size()), fixed_length);
        e.wids.assign(static_cast<size_t>(fixed_length), kPadId);
        for (int64_t i = 0; i < e.original_length; ++i)
            e.wids[static_cast<size_t>(i)] = vocab.wid(tokens[static_cast<size_t>(i)]);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<RelationRecord> load_relations(const std::vector<std::string>& lines) {
    std::vector<RelationRecord> out;
    for (size_t i = 0; i < lines.size(); ++i) {
        auto fields = split(lines[i], '\t');
        if (fields.size() != 3)
            fail("relation line " + std::to_string(i + 1) + ": expected 3 tab-separated fields, got " +
                 std::to_string(fields.size()));
        RelationRecord r;
        try {
            r.label = parse_nonneg(fields[0], "label");
        } catch (const std::exception& e) {
            fail("relation line " + std::to_string(i + 1) + ": " + e.what());
        }
        r.tid_left = fields[1];
        r.tid_right = fields[2];
        out.push_back(std::move(r));
    }
    return out;
}

Tensor random_embeddings(const Vocabulary& vocab, int64_t dim, uint64_t seed) {
    Rng rng(seed);
    Tensor table = Tensor::zeros({vocab.size(), dim});
    for (int64_t w = 1; w < vocab.size(); ++w)  // PAD row stays zero
        for (int64_t j = 0; j < dim; ++j)
            table.data[static_cast<size_t>(w * dim + j)] = rng.uniform(-0.2, 0.2);
    return table;
}

Tensor load_embeddings(const std::string& path, const Vocabulary& vocab, int64_t dim,
                       uint64_t seed) {
    auto f = open_in(path);
    std::unordered_map<std::string, std::vector<double>> file_vecs;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<std::string> tokens;
        std::string t;
        while (ss >> t) tokens.push_back(t);
        if (first) {
            first = false;
            // optional "count dim" header
            if (tokens.size() == 2) {
                try {
                    size_t p1 = 0, p2 = 0;
                    (void)std::stoll(tokens[0], &p1);
                    (void)std::stoll(tokens[1], &p2);
                    if (p1 == tokens[0].size() && p2 == tokens[1].size()) continue;
                } catch (const std::exception&) {
                }
            }
        }
        if (static_cast<int64_t>(tokens.size()) != dim + 1)
            fail("embedding file: word '" + (tokens.empty() ? "" : tokens[0]) + "' has " +
                 std::to_string(tokens.size() - 1) + " values, expected " + std::to_string(dim));
        std::vector<double> vec(static_cast<size_t>(dim));
        for (int64_t j = 0; j < dim; ++j) vec[static_cast<size_t>(j)] = std::stod(tokens[static_cast<size_t>(j + 1)]);
        file_vecs[tokens[0]] = std::move(vec);
    }

    Rng rng(seed);
    Tensor table = Tensor::zeros({vocab.size(), dim});
    for (int64_t w = 1; w < vocab.size(); ++w) {
        const std::string& word = vocab.wid_to_word[static_cast<size_t>(w)];
        auto it = file_vecs.find(word);
        if (it != file_vecs.end() && w >= 2) {
            std::copy(it->second.begin(), it->second.end(), table.data.begin() + w * dim);
        } else {
            for (int64_t j = 0; j < dim; ++j)
                table.data[static_cast<size_t>(w * dim + j)] = rng.uniform(-0.2, 0.2);
        }
    }
    // PAD row zeroed last
    std::fill(table.data.begin(), table.data.begin() + dim, 0.0);
    return table;
}

namespace {

const CorpusEntry& lookup(const Corpus& corpus, const std::string& tid) {
    auto it = corpus.find(tid);
    if (it == corpus.end()) fail("unknown tid '" + tid + "'");
    return it->second;
}

Tensor wid_matrix(const Corpus& corpus, const std::vector<const std::string*>& tids) {
    int64_t n = static_cast<int64_t>(tids.size());
    int64_t len = static_cast<int64_t>(lookup(corpus, *tids[0]).wids.size());
    Tensor m = Tensor::zeros({n, len});
    for (int64_t i = 0; i < n; ++i) {
        const CorpusEntry& e = lookup(corpus, *tids[static_cast<size_t>(i)]);
        if (static_cast<int64_t>(e.wids.size()) != len)
            fail("corpus entry '" + e.tid + "' has inconsistent length");
        for (int64_t j = 0; j < len; ++j)
            m.data[static_cast<size_t>(i * len + j)] = static_cast<double>(e.wids[static_cast<size_t>(j)]);
    }
    return m;
}

}  // namespace

std::vector<Batch> batches_pointwise(const std::vector<RelationRecord>& relations,
                                     const Corpus& corpus, int64_t batch_size, uint64_t seed) {
    if (batch_size < 1) fail("batches_pointwise: batch_size must be >= 1");
    Rng rng(seed);
    auto perm = rng.permutation(relations.size());
    std::vector<Batch> out;
    for (size_t start = 0; start < perm.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(perm.size(), start + static_cast<size_t>(batch_size));
        Batch b;
        b.mode = BatchMode::Pointwise;
        std::vector<const std::string*> lt, rt;
        for (size_t i = start; i < end; ++i) {
            const RelationRecord& r = relations[perm[i]];
            lt.push_back(&r.tid_left);
            rt.push_back(&r.tid_right);
            b.labels.push_back(r.label);
        }
        b.left = wid_matrix(corpus, lt);
        b.right = wid_matrix(corpus, rt);
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Batch> batches_pairwise(const std::vector<RelationRecord>& relations,
                                    const Corpus& corpus, int64_t batch_size, int64_t num_neg,
                                    uint64_t seed) {
    if (batch_size < 1) fail("batches_pairwise: batch_size must be >= 1");
    if (num_neg < 1) fail("batches_pairwise: num_neg must be >= 1");
    Rng rng(seed);

    // groups by tid_left in first-appearance order
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<const RelationRecord*>> groups;
    for (const auto& r : relations) {
        auto [it, inserted] = groups.try_emplace(r.tid_left);
        if (inserted) group_order.push_back(r.tid_left);
        it->second.push_back(&r);
    }

    struct Pair {
        const std::string* left;
        const std::string* pos;
        const std::string* neg;
    };
    std::vector<Pair> pairs;
    for (const auto& q : group_order) {
        const auto& recs = groups[q];
        for (const auto* pos : recs) {
            if (pos->label <= 0) continue;
            std::vector<const RelationRecord*> lower;
            for (const auto* cand : recs)
                if (cand->label < pos->label) lower.push_back(cand);
            if (lower.empty()) continue;
            rng.shuffle(lower);
            size_t take = std::min<size_t>(lower.size(), static_cast<size_t>(num_neg));
            for (size_t k = 0; k < take; ++k)
                pairs.push_back({&pos->tid_left, &pos->tid_right, &lower[k]->tid_right});
        }
    }
    if (pairs.empty()) fail("batches_pairwise: no orderable pairs in the relation set");
    rng.shuffle(pairs);

    std::vector<Batch> out;
    for (size_t start = 0; start < pairs.size(); start += static_cast<size_t>(batch_size)) {
        size_t end = std::min(pairs.size(), start + static_cast<size_t>(batch_size));
        Batch b;
        b.mode = BatchMode::Pairwise;
        std::vector<const std::string*> lt, pt, nt;
        for (size_t i = start; i < end; ++i) {
            lt.push_back(pairs[i].left);
            pt.push_back(pairs[i].pos);
            nt.push_back(pairs[i].neg);
        }
        b.left = wid_matrix(corpus, lt);
        b.right = wid_matrix(corpus, pt);
        b.right_neg = wid_matrix(corpus, nt);
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<Batch> batches_listwise(const std::vector<RelationRecord>& relations,
                                    const Corpus& corpus, uint64_t seed) {
    std::vector<std::string> group_order;
    std::map<std::string, std::vector<const RelationRecord*>> groups;
    for (const auto& r : relations) {
        auto [it, inserted] = groups.try_emplace(r.tid_left);
        if (inserted) group_order.push_back(r.tid_left);
        it->second.push_back(&r);
    }
    Rng rng(seed);
    rng.shuffle(group_order);

    std::vector<Batch> out;
    for (const auto& q : group_order) {
        const auto& recs = groups[q];
        Batch b;
        b.mode = BatchMode::Listwise;
        std::vector<const std::string*> lt, rt;
        for (const auto* r : recs) {
            lt.push_back(&r->tid_left);
            rt.push_back(&r->tid_right);
            b.labels.push_back(r->label);
        }
        b.left = wid_matrix(corpus, lt);
        b.right = wid_matrix(corpus, rt);
        b.group_bounds = {0, recs.size()};
        out.push_back(std::move(b));
    }
    return out;
}

void write_vocabulary(const Vocabulary& vocab, const std::string& path) {
    auto f = open_out(path);
    for (int64_t w = 2; w < vocab.size(); ++w)
        f << vocab.wid_to_word[static_cast<size_t>(w)] << '\t' << w << '\t'
          << vocab.frequency[static_cast<size_t>(w)] << '\n';
}

Vocabulary read_vocabulary(const std::string& path) {
    auto f = open_in(path);
    Vocabulary v;
    v.wid_to_word = {"", ""};
    v.frequency = {0, 0};
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 3) fail("dictionary line " + std::to_string(lineno) + ": expected 3 fields");
        int64_t wid = parse_nonneg(fields[1], "wid");
        if (wid != v.size()) fail("dictionary line " + std::to_string(lineno) + ": wids not contiguous");
        v.word_to_wid[fields[0]] = wid;
        v.wid_to_word.push_back(fields[0]);
        v.frequency.push_back(parse_nonneg(fields[2], "frequency"));
    }
    return v;
}

void write_corpus(const std::vector<CorpusEntry>& entries, const std::string& path) {
    auto f = open_out(path);
    for (const auto& e : entries) {
        f << e.tid << '\t' << e.original_length << '\t';
        for (size_t i = 0; i < e.wids.size(); ++i) {
            if (i) f << ' ';
            f << e.wids[i];
        }
        f << '\n';
    }
}

std::vector<CorpusEntry> read_corpus(const std::string& path) {
    auto f = open_in(path);
    std::vector<CorpusEntry> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 3) fail("corpus line " + std::to_string(lineno) + ": expected 3 fields");
        CorpusEntry e;
        e.tid = fields[0];
        e.original_length = parse_nonneg(fields[1], "original_length");
        std::istringstream ss(fields[2]);
        std::string w;
        while (ss >> w) e.wids.push_back(parse_nonneg(w, "wid"));
        out.push_back(std::move(e));
    }
    return out;
}

void write_relations(const std::vector<RelationRecord>& records, const std::string& path) {
    auto f = open_out(path);
    for (const auto& r : records)
        f << r.label << '\t' << r.tid_left << '\t' << r.tid_right << '\n';
}

std::vector<RelationRecord> read_relations(const std::string& path) {
    auto f = open_in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) lines.push_back(line);
    return load_relations(lines);
}

}  // namespace mz
