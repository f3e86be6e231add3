#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mz/tensor.hpp"

namespace mz {

// Reserved word ids. Real words start at 2, assigned by descending corpus
// frequency with lexicographic tie-break.
constexpr int64_t kPadId = 0;
constexpr int64_t kOovId = 1;

struct Vocabulary {
    std::unordered_map<std::string, int64_t> word_to_wid;
    std::vector<std::string> wid_to_word;  // indexed by wid; reserved slots empty
    std::vector<int64_t> frequency;        // corpus frequency, aligned with wid_to_word

    int64_t size() const { return static_cast<int64_t>(wid_to_word.size()); }
    int64_t wid(const std::string& word) const {
        auto it = word_to_wid.find(word);
        return it == word_to_wid.end() ? kOovId : it->second;
    }
};

struct CorpusEntry {
    std::string tid;
    std::vector<int64_t> wids;  // exactly the configured fixed length
    int64_t original_length = 0;
};

struct RelationRecord {
    int64_t label = 0;
    std::string tid_left;
    std::string tid_right;
};

using Corpus = std::map<std::string, CorpusEntry>;

enum class BatchMode { Pointwise, Pairwise, Listwise };

struct Batch {
    BatchMode mode = BatchMode::Pointwise;
    Tensor left;       // [n, L] wid matrix
    Tensor right;      // [n, R]; pairwise: positive side
    Tensor right_neg;  // pairwise only
    std::vector<int64_t> labels;
    std::vector<size_t> group_bounds;  // listwise: row offsets, group g = [b[g], b[g+1])

    int64_t rows() const { return left.ndim() ? left.shape[0] : 0; }
};

std::vector<std::string> tokenize(const std::string& text);

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs, int64_t min_count,
                            double max_doc_fraction, const std::set<std::string>& stopwords);

std::vector<CorpusEntry> encode_corpus(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& texts,
    const Vocabulary& vocab, int64_t fixed_length);

std::vector<RelationRecord> load_relations(const std::vector<std::string>& lines);

// word2vec-style text file; vocabulary words missing from the file are
// seeded uniform in [-0.2, 0.2], the PAD row is zeroed last.
Tensor load_embeddings(const std::string& path, const Vocabulary& vocab, int64_t dim,
                       uint64_t seed);
Tensor random_embeddings(const Vocabulary& vocab, int64_t dim, uint64_t seed);

std::vector<Batch> batches_pointwise(const std::vector<RelationRecord>& relations,
                                     const Corpus& corpus, int64_t batch_size, uint64_t seed);
std::vector<Batch> batches_pairwise(const std::vector<RelationRecord>& relations,
                                    const Corpus& corpus, int64_t batch_size, int64_t num_neg,
                                    uint64_t seed);
std::vector<Batch> batches_listwise(const std::vector<RelationRecord>& relations,
                                    const Corpus& corpus, uint64_t seed);

// unified-format files (UTF-8, \n endings)
void write_vocabulary(const Vocabulary& vocab, const std::string& path);
Vocabulary read_vocabulary(const std::string& path);
void write_corpus(const std::vector<CorpusEntry>& entries, const std::string& path);
std::vector<CorpusEntry> read_corpus(const std::string& path);
void write_relations(const std::vector<RelationRecord>& records, const std::string& path);
std::vector<RelationRecord> read_relations(const std::string& path);

}  // namespace mz
