#pragma once

#include <string>
#include <vector>

#include "mz/graph.hpp"
#include "mz/tensor.hpp"

namespace mz {

// Declarative model description. Kind-specific fields are ignored by the
// other kinds; validation happens in build_model.
struct ModelConfig {
    std::string kind;  // arci | matchpyramid | drmm | matchsrnn
    int64_t vocab_size = 0;
    int64_t embedding_dim = 16;
    int64_t left_length = 8;
    int64_t right_length = 16;
    uint64_t seed = 1;
    std::string embedding_file;  // empty = seeded random
    bool trainable_embeddings = true;
    std::vector<int64_t> mlp_hidden = {16};

    // arci
    int64_t conv_filters = 8;
    int64_t conv_width = 3;
    // matchpyramid
    int64_t mp_filters = 8;
    int64_t mp_kernel = 3;
    int64_t pool_rows = 3;
    int64_t pool_cols = 3;
    // drmm
    int64_t hist_bins = 10;
    std::string hist_mode = "log-count";  // count | log-count
    // matchsrnn
    int64_t gru_hidden = 4;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct Model {
    ModelConfig config;
    ParameterStore params;
    std::vector<std::string> frozen;  // excluded from optimizer updates

    // Appends a scoring subgraph for one (left, right) wid pair and returns
    // the scalar score node. Wids, PAD masks and histogram features enter
    // the graph as constants; parameters are shared across calls by name.
    int append_scorer(Graph& g, const std::vector<int64_t>& left_wids,
                      const std::vector<int64_t>& right_wids) const;

    int64_t parameter_count() const;
    bool is_frozen(const std::string& name) const;
};

Model build_model(const ModelConfig& config);

// One finite score per row of the wid matrices [n,L] x [n,R].
Tensor score_pairs(const Model& model, const Tensor& left, const Tensor& right);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::vector<int64_t> row_wids(const Tensor& matrix, int64_t row);

}  // namespace mz
