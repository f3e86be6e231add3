#include "mz/toydata.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mz/rng.hpp"

namespace mz {

namespace {

std::string word(int64_t i) {
    std::ostringstream s;
    s << "w";
    if (i < 10) s << "0";
    s << i;
    return s.str();
}

std::string join(const std::vector<int64_t>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += " ";
        out += word(ids[i]);
    }
    return out;
}

}  // namespace

ToyDataset make_toy_dataset(int64_t num_queries, int64_t num_candidates, int64_t vocab_words,
                            uint64_t seed) {
    if (num_queries < 1 || num_candidates < 2 || vocab_words < 12)
        throw std::runtime_error("toy dataset: need >=1 query, >=2 candidates, >=12 words");
    Rng rng(seed);
    ToyDataset data;

    for (int64_t q = 0; q < num_queries; ++q) {
        // split the vocabulary per query: 6 query words, relevant docs reuse
        // them, irrelevant docs draw from the complement
        std::vector<uint64_t> perm = rng.permutation((uint64_t)vocab_words);
        std::vector<int64_t> query(perm.begin(), perm.begin() + 6);
        std::vector<int64_t> rest(perm.begin() + 6, perm.end());
        std::string left = join(query);

        // relevant: first 3 query tokens plus 3 complement tokens
        std::vector<int64_t> rel(query.begin(), query.begin() + 3);
        for (int64_t j = 0; j < 3; ++j) rel.push_back(rest[(size_t)j]);
        data.raw_lines.push_back("1\t" + left + "\t" + join(rel));

        for (int64_t d = 1; d < num_candidates; ++d) {
            std::vector<int64_t> doc;
            for (int64_t j = 0; j < 6; ++j)
                doc.push_back(rest[3 + (int64_t)rng.next_below(
                                        (uint64_t)(rest.size() - 3))]);
            data.raw_lines.push_back("0\t" + left + "\t" + join(doc));
        }
    }
    return data;
}

void write_toy_dataset(const ToyDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open toy dataset for writing: " + path);
    for (const std::string& line : data.raw_lines) out << line << '\n';
}

PreparedToy prepare_toy(const ToyDataset& data, int64_t left_length, int64_t right_length) {
    PreparedToy out;
    std::map<std::string, std::string> left_tid, right_tid;
    std::vector<std::pair<std::string, std::vector<std::string>>> left_texts, right_texts;
    std::vector<std::vector<std::string>> docs;

    for (const std::string& line : data.raw_lines) {
        size_t t1 = line.find('\t');
        size_t t2 = line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos)
            throw std::runtime_error("toy dataset: malformed line");
        int64_t label = std::stoll(line.substr(0, t1));
        std::string lt = line.substr(t1 + 1, t2 - t1 - 1);
        std::string rt = line.substr(t2 + 1);

        if (!left_tid.count(lt)) {
            left_tid[lt] = "L" + std::to_string(left_texts.size());
            left_texts.push_back({left_tid[lt], tokenize(lt)});
            docs.push_back(tokenize(lt));
        }
        if (!right_tid.count(rt)) {
            right_tid[rt] = "R" + std::to_string(right_texts.size());
            right_texts.push_back({right_tid[rt], tokenize(rt)});
            docs.push_back(tokenize(rt));
        }
        out.relations.push_back({label, left_tid[lt], right_tid[rt]});
    }

    out.vocab = build_vocabulary(docs, 1, 1.0, {});
    for (const auto& e : encode_corpus(left_texts, out.vocab, left_length))
        out.corpus[e.tid] = e;
    for (const auto& e : encode_corpus(right_texts, out.vocab, right_length))
        out.corpus[e.tid] = e;
    return out;
}

}  // namespace mz
