#pragma once

#include <string>

#include "mz/graph.hpp"
#include "mz/tensor.hpp"

namespace mz {

enum class MatchMode { Dot, Cosine, Indicator };

// Word-by-word similarity grid between two embedded texts, [L1,d] x [L2,d]
// -> [L1,L2]. Dot and cosine are differentiable fragments; the indicator
// form is a constant built from wid sequences (see indicator_matrix).
int matching_matrix(Graph& g, int left_emb, int right_emb, MatchMode mode);

// Indicator entries: 1 where wids are equal and neither side is PAD.
Tensor indicator_matrix(const std::vector<int64_t>& left_wids,
                        const std::vector<int64_t>& right_wids);

// Softmax importance weights over the non-PAD query positions; PAD
// positions get an exact zero gate. query_emb is [L1,d], gate_weight [d].
int term_gating(Graph& g, int query_emb, int gate_weight, int64_t original_length);

// Per-query-term binned cosine similarities against the non-PAD document
// terms; B equal-width bins over [-1,1], last bin closed. Constant input
// feature, never differentiated.
Tensor matching_histogram(const Tensor& query_emb, const Tensor& doc_emb, int64_t doc_len,
                          int64_t bins, bool log_count);

// 2D-GRU parameter node ids; weights are registered by gru2d_init.
struct Gru2dWeights {
    int w_reset, b_reset;      // [3h, 3h+m], [3h]
    int w_cand, b_cand;        // [h, m+3h],  [h]
    int w_mix, b_mix;          // [4h, 3h+m], [4h]
};

class Rng;
Gru2dWeights gru2d_init(Graph& g, ParameterStore& params, const std::string& prefix,
                        int64_t input_dim, int64_t hidden_dim, Rng& rng);

// Row-major scan of [L1,L2,m] with left/top/diagonal predecessor states,
// three reset gates and four-way groupwise-softmax mixing -> [L1,L2,h].
int gru2d(Graph& g, int input, const Gru2dWeights& w, int64_t hidden_dim);

// Fan-based uniform init in [-s, s], s = sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out);

}  // namespace mz
