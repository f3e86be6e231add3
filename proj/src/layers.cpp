#include "mz/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "mz/rng.hpp"

namespace mz {

namespace {

// 1/sqrt(x) via exp(-0.5 log x); the log clamp keeps zero rows defined
int inv_norm(Graph& g, int sumsq) {
    return g.exp(g.mul(g.log(sumsq), g.constant(Tensor::scalar(-0.5))));
}

}  // namespace

int matching_matrix(Graph& g, int left_emb, int right_emb, MatchMode mode) {
    if (mode == MatchMode::Indicator)
        throw std::invalid_argument("matching_matrix: indicator mode takes wid sequences, use indicator_matrix");
    const Shape& sl = g.node(left_emb).shape;
    const Shape& sr = g.node(right_emb).shape;
    if (sl.size() != 2 || sr.size() != 2 || sl[1] != sr[1])
        throw std::invalid_argument("matching_matrix: embedding dims " + shape_str(sl) + " vs " +
                                    shape_str(sr));
    int dots = g.matmul(left_emb, g.transpose(right_emb));  // [L1,L2]
    if (mode == MatchMode::Dot) return dots;

    int left_sq = g.reduce_sum(g.mul(left_emb, left_emb), 1);    // [L1]
    int right_sq = g.reduce_sum(g.mul(right_emb, right_emb), 1); // [L2]
    int scaled = g.mul(dots, inv_norm(g, right_sq));             // columns
    return g.transpose(g.mul(g.transpose(scaled), inv_norm(g, left_sq)));  // rows
}

Tensor indicator_matrix(const std::vector<int64_t>& left_wids,
                        const std::vector<int64_t>& right_wids) {
    int64_t l1 = static_cast<int64_t>(left_wids.size());
    int64_t l2 = static_cast<int64_t>(right_wids.size());
    Tensor m = Tensor::zeros({l1, l2});
    for (int64_t i = 0; i < l1; ++i)
        for (int64_t j = 0; j < l2; ++j)
            if (left_wids[static_cast<size_t>(i)] != 0 &&
                left_wids[static_cast<size_t>(i)] == right_wids[static_cast<size_t>(j)])
                m.data[static_cast<size_t>(i * l2 + j)] = 1.0;
    return m;
}

int term_gating(Graph& g, int query_emb, int gate_weight, int64_t original_length) {
    const Shape& s = g.node(query_emb).shape;
    if (s.size() != 2) throw std::invalid_argument("term_gating: query embeddings must be [L1,d]");
    if (original_length < 1) throw std::invalid_argument("term_gating: query has no terms");
    int64_t l1 = s[0];
    if (original_length > l1) throw std::invalid_argument("term_gating: original_length exceeds L1");

    int logits = g.matmul(query_emb, gate_weight);  // [L1]
    // PAD logits pushed far below the max so their softmax weight underflows
    // to an exact zero
    Tensor mask = Tensor::zeros({l1});
    for (int64_t i = original_length; i < l1; ++i) mask.data[static_cast<size_t>(i)] = -1e30;
    return g.softmax(g.add(logits, g.constant(std::move(mask))), 0);
}

Tensor matching_histogram(const Tensor& query_emb, const Tensor& doc_emb, int64_t doc_len,
                          int64_t bins, bool log_count) {
    if (query_emb.ndim() != 2 || doc_emb.ndim() != 2 || query_emb.shape[1] != doc_emb.shape[1])
        throw std::invalid_argument("matching_histogram: embedding shape mismatch");
    if (bins < 2) throw std::invalid_argument("matching_histogram: need at least 2 bins");
    int64_t l1 = query_emb.shape[0], d = query_emb.shape[1];
    doc_len = std::min(doc_len, doc_emb.shape[0]);

    Tensor hist = Tensor::zeros({l1, bins});
    for (int64_t i = 0; i < l1; ++i) {
        double qn = 0;
        for (int64_t k = 0; k < d; ++k) {
            double v = query_emb.data[static_cast<size_t>(i * d + k)];
            qn += v * v;
        }
        qn = std::sqrt(qn);
        for (int64_t j = 0; j < doc_len; ++j) {
            double dot = 0, dn = 0;
            for (int64_t k = 0; k < d; ++k) {
                double v = doc_emb.data[static_cast<size_t>(j * d + k)];
                dot += v * query_emb.data[static_cast<size_t>(i * d + k)];
                dn += v * v;
            }
            double sim = dot / std::max(qn * std::sqrt(dn), 1e-12);
            sim = std::min(1.0, std::max(-1.0, sim));
            int64_t bin = std::min(bins - 1, static_cast<int64_t>((sim + 1.0) / 2.0 * static_cast<double>(bins)));
            hist.data[static_cast<size_t>(i * bins + bin)] += 1.0;
        }
    }
    if (log_count)
        for (double& v : hist.data) v = std::log1p(v);
    return hist;
}

Tensor glorot_uniform(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out) {
    double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-s, s);
    return t;
}

Gru2dWeights gru2d_init(Graph& g, ParameterStore& params, const std::string& prefix,
                        int64_t m, int64_t h, Rng& rng) {
    int64_t q = 3 * h + m;
    Gru2dWeights w;
    params.create(prefix + ".w_reset", glorot_uniform(rng, {3 * h, q}, q, 3 * h));
    params.create(prefix + ".b_reset", Tensor::zeros({3 * h}));
    params.create(prefix + ".w_cand", glorot_uniform(rng, {h, m + 3 * h}, m + 3 * h, h));
    params.create(prefix + ".b_cand", Tensor::zeros({h}));
    params.create(prefix + ".w_mix", glorot_uniform(rng, {4 * h, q}, q, 4 * h));
    params.create(prefix + ".b_mix", Tensor::zeros({4 * h}));
    w.w_reset = g.param(prefix + ".w_reset", {3 * h, q});
    w.b_reset = g.param(prefix + ".b_reset", {3 * h});
    w.w_cand = g.param(prefix + ".w_cand", {h, m + 3 * h});
    w.b_cand = g.param(prefix + ".b_cand", {h});
    w.w_mix = g.param(prefix + ".w_mix", {4 * h, q});
    w.b_mix = g.param(prefix + ".b_mix", {4 * h});
    return w;
}

int gru2d(Graph& g, int input, const Gru2dWeights& w, int64_t h) {
    const Shape& s = g.node(input).shape;
    if (s.size() != 3) throw std::invalid_argument("gru2d: input must be [L1,L2,m], got " + shape_str(s));
    int64_t l1 = s[0], l2 = s[1], m = s[2];

    int zero_h = g.constant(Tensor::zeros({h}));
    std::vector<std::vector<int>> state(static_cast<size_t>(l1),
                                        std::vector<int>(static_cast<size_t>(l2)));
    std::vector<int> flat_cells;
    for (int64_t i = 0; i < l1; ++i) {
        for (int64_t j = 0; j < l2; ++j) {
            int hl = j > 0 ? state[static_cast<size_t>(i)][static_cast<size_t>(j - 1)] : zero_h;
            int ht = i > 0 ? state[static_cast<size_t>(i - 1)][static_cast<size_t>(j)] : zero_h;
            int hd = (i > 0 && j > 0) ? state[static_cast<size_t>(i - 1)][static_cast<size_t>(j - 1)] : zero_h;
            int sij = g.reshape(g.slice(input, {i, j, 0}, {i + 1, j + 1, m}), {m});

            int q = g.concat({hl, ht, hd, sij}, 0);  // [3h+m]
            int r = g.sigmoid(g.add(g.matmul(w.w_reset, q), w.b_reset));
            int rl = g.slice(r, {0}, {h});
            int rt = g.slice(r, {h}, {2 * h});
            int rd = g.slice(r, {2 * h}, {3 * h});

            int cand_in = g.concat({sij, g.mul(rl, hl), g.mul(rt, ht), g.mul(rd, hd)}, 0);
            int cand = g.tanh(g.add(g.matmul(w.w_cand, cand_in), w.b_cand));

            // four-way mixing normalized per hidden unit
            int mix_logits = g.reshape(g.add(g.matmul(w.w_mix, q), w.b_mix), {4, h});
            int z = g.softmax(mix_logits, 0);
            int zl = g.reshape(g.slice(z, {0, 0}, {1, h}), {h});
            int zt = g.reshape(g.slice(z, {1, 0}, {2, h}), {h});
            int zd = g.reshape(g.slice(z, {2, 0}, {3, h}), {h});
            int zc = g.reshape(g.slice(z, {3, 0}, {4, h}), {h});

            int out = g.add(g.add(g.mul(zl, hl), g.mul(zt, ht)),
                            g.add(g.mul(zd, hd), g.mul(zc, cand)));
            state[static_cast<size_t>(i)][static_cast<size_t>(j)] = out;
            flat_cells.push_back(g.reshape(out, {1, h}));
        }
    }
    return g.reshape(g.concat(flat_cells, 0), {l1, l2, h});
}

}  // namespace mz
