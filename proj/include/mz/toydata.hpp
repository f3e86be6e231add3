#pragma once

#include <string>
#include <vector>

#include "mz/dataprep.hpp"

namespace mz {

// Synthetic separable ranking set: per query one relevant candidate sharing
// at least 3 tokens with the query, the rest drawn from disjoint words.
struct ToyDataset {
    std::vector<std::string> raw_lines;  // label<TAB>text_left<TAB>text_right
};

ToyDataset make_toy_dataset(int64_t num_queries, int64_t num_candidates, int64_t vocab_words,
                            uint64_t seed);

void write_toy_dataset(const ToyDataset& data, const std::string& path);

// In-memory equivalent of the prepare step, for tests that skip the CLI.
struct PreparedToy {
    Vocabulary vocab;
    Corpus corpus;
    std::vector<RelationRecord> relations;
};

PreparedToy prepare_toy(const ToyDataset& data, int64_t left_length, int64_t right_length);

}  // namespace mz
