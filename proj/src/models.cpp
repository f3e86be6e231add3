#include "mz/models.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "mz/dataprep.hpp"
#include "mz/layers.hpp"
#include "mz/rng.hpp"

namespace mz {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr char kMagic[4] = {'M', 'Z', 'M', 'F'};
constexpr uint32_t kFormatVersion = 1;

int64_t non_pad_length(const std::vector<int64_t>& wids) {
    for (size_t i = 0; i < wids.size(); ++i)
        if (wids[i] == kPadId) return static_cast<int64_t>(i);
    return static_cast<int64_t>(wids.size());
}

Tensor wid_const(const std::vector<int64_t>& wids) {
    Tensor t = Tensor::zeros({static_cast<int64_t>(wids.size())});
    for (size_t i = 0; i < wids.size(); ++i) t.data[i] = static_cast<double>(wids[i]);
    return t;
}

// rows of the embedding table for a wid sequence, as plain values
Tensor embed_values(const Tensor& table, const std::vector<int64_t>& wids) {
    int64_t d = table.shape[1];
    Tensor out = Tensor::zeros({static_cast<int64_t>(wids.size()), d});
    for (size_t i = 0; i < wids.size(); ++i) {
        int64_t w = wids[i];
        if (w < 0 || w >= table.shape[0])
            fail("wid " + std::to_string(w) + " out of embedding range [0," +
                 std::to_string(table.shape[0]) + ")");
        std::copy(table.data.begin() + w * d, table.data.begin() + (w + 1) * d,
                  out.data.begin() + static_cast<int64_t>(i) * d);
    }
    return out;
}

void init_mlp(ParameterStore& params, const std::string& prefix, int64_t in,
              const std::vector<int64_t>& hidden, Rng& rng, bool transposed = false) {
    int64_t cur = in;
    for (size_t l = 0; l < hidden.size(); ++l) {
        std::string base = prefix + "." + std::to_string(l);
        Shape ws = transposed ? Shape{cur, hidden[l]} : Shape{hidden[l], cur};
        params.create(base + ".w", glorot_uniform(rng, ws, cur, hidden[l]));
        params.create(base + ".b", Tensor::zeros({hidden[l]}));
        cur = hidden[l];
    }
    Shape ws = transposed ? Shape{cur, 1} : Shape{1, cur};
    params.create(prefix + ".out.w", glorot_uniform(rng, ws, cur, 1));
    params.create(prefix + ".out.b", Tensor::zeros({1}));
}

// vector-input MLP, weights [out,in]; tanh hidden, linear scalar output
int mlp_scalar(Graph& g, const ParameterStore& params, const std::string& prefix, int x,
               size_t n_hidden) {
    for (size_t l = 0; l < n_hidden; ++l) {
        std::string base = prefix + "." + std::to_string(l);
        const Shape& ws = params.get(base + ".w").value.shape;
        x = g.tanh(g.add(g.matmul(g.param(base + ".w", ws), x),
                         g.param(base + ".b", {ws[0]})));
    }
    const Shape& ws = params.get(prefix + ".out.w").value.shape;
    int out = g.add(g.matmul(g.param(prefix + ".out.w", ws), x), g.param(prefix + ".out.b", {1}));
    return g.reshape(out, {});
}

// one ARC-I side: embed -> width-k convolution over positions -> relu -> max
int arci_side(Graph& g, const Model& m, const std::string& conv_name, int emb) {
    const ModelConfig& c = m.config;
    int64_t len = g.node(emb).shape[0];
    int x = g.reshape(g.transpose(emb), {c.embedding_dim, 1, len});
    int conv = g.conv2d(x, g.param(conv_name, {c.conv_filters, c.embedding_dim, 1, c.conv_width}));
    int pooled = g.reduce_max(g.relu(conv), 2);  // [F,1]
    return g.reshape(pooled, {c.conv_filters});
}

void validate(const ModelConfig& c) {
    if (c.kind != "arci" && c.kind != "matchpyramid" && c.kind != "drmm" && c.kind != "matchsrnn")
        fail("unknown model kind '" + c.kind + "'");
    if (c.vocab_size < 2) fail("model config: vocab_size must be >= 2");
    if (c.embedding_dim < 1 || c.left_length < 1 || c.right_length < 1)
        fail("model config: dimensions must be positive");
    for (int64_t w : c.mlp_hidden)
        if (w < 1) fail("model config: mlp widths must be positive");
    if (c.kind == "arci") {
        if (c.conv_width > c.left_length || c.conv_width > c.right_length)
            fail("model config: conv_width exceeds a text length");
        if (c.conv_filters < 1) fail("model config: conv_filters must be positive");
    } else if (c.kind == "matchpyramid") {
        int64_t oh = c.left_length - c.mp_kernel + 1;
        int64_t ow = c.right_length - c.mp_kernel + 1;
        if (oh < 1 || ow < 1) fail("model config: mp_kernel exceeds a text length");
        if (c.pool_rows > oh || c.pool_cols > ow)
            fail("model config: pool grid " + std::to_string(c.pool_rows) + "x" +
                 std::to_string(c.pool_cols) + " exceeds feature map " + std::to_string(oh) + "x" +
                 std::to_string(ow));
    } else if (c.kind == "drmm") {
        if (c.hist_bins < 2) fail("model config: hist_bins must be >= 2");
        if (c.hist_mode != "count" && c.hist_mode != "log-count")
            fail("model config: hist_mode must be count or log-count");
    } else if (c.kind == "matchsrnn") {
        if (c.gru_hidden < 1) fail("model config: gru_hidden must be positive");
    }
}

}  // namespace

std::string ModelConfig::to_json() const {
    json j;
    j["kind"] = kind;
    j["vocab_size"] = vocab_size;
    j["embedding_dim"] = embedding_dim;
    j["left_length"] = left_length;
    j["right_length"] = right_length;
    j["seed"] = seed;
    j["embedding_file"] = embedding_file;
    j["trainable_embeddings"] = trainable_embeddings;
    j["mlp_hidden"] = mlp_hidden;
    j["conv_filters"] = conv_filters;
    j["conv_width"] = conv_width;
    j["mp_filters"] = mp_filters;
    j["mp_kernel"] = mp_kernel;
    j["pool_rows"] = pool_rows;
    j["pool_cols"] = pool_cols;
    j["hist_bins"] = hist_bins;
    j["hist_mode"] = hist_mode;
    j["gru_hidden"] = gru_hidden;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    std::set<std::string> known = {"kind", "vocab_size", "embedding_dim", "left_length",
                                   "right_length", "seed", "embedding_file", "trainable_embeddings",
                                   "mlp_hidden", "conv_filters", "conv_width", "mp_filters",
                                   "mp_kernel", "pool_rows", "pool_cols", "hist_bins", "hist_mode",
                                   "gru_hidden"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) fail("model config: unknown key '" + it.key() + "'");
    c.kind = j.at("kind").get<std::string>();
    if (j.contains("vocab_size")) c.vocab_size = j["vocab_size"].get<int64_t>();
    if (j.contains("embedding_dim")) c.embedding_dim = j["embedding_dim"].get<int64_t>();
    if (j.contains("left_length")) c.left_length = j["left_length"].get<int64_t>();
    if (j.contains("right_length")) c.right_length = j["right_length"].get<int64_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("embedding_file")) c.embedding_file = j["embedding_file"].get<std::string>();
    if (j.contains("trainable_embeddings")) c.trainable_embeddings = j["trainable_embeddings"].get<bool>();
    if (j.contains("mlp_hidden")) c.mlp_hidden = j["mlp_hidden"].get<std::vector<int64_t>>();
    if (j.contains("conv_filters")) c.conv_filters = j["conv_filters"].get<int64_t>();
    if (j.contains("conv_width")) c.conv_width = j["conv_width"].get<int64_t>();
    if (j.contains("mp_filters")) c.mp_filters = j["mp_filters"].get<int64_t>();
    if (j.contains("mp_kernel")) c.mp_kernel = j["mp_kernel"].get<int64_t>();
    if (j.contains("pool_rows")) c.pool_rows = j["pool_rows"].get<int64_t>();
    if (j.contains("pool_cols")) c.pool_cols = j["pool_cols"].get<int64_t>();
    if (j.contains("hist_bins")) c.hist_bins = j["hist_bins"].get<int64_t>();
    if (j.contains("hist_mode")) c.hist_mode = j["hist_mode"].get<std::string>();
    if (j.contains("gru_hidden")) c.gru_hidden = j["gru_hidden"].get<int64_t>();
    return c;
}

bool Model::is_frozen(const std::string& name) const {
    return std::find(frozen.begin(), frozen.end(), name) != frozen.end();
}

int64_t Model::parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params.all()) n += p.value.numel();
    return n;
}

Model build_model(const ModelConfig& config) {
    validate(config);
    Model m;
    m.config = config;
    Rng rng(config.seed);

    m.params.create("embedding",
                    [&] {
                        Tensor t = Tensor::zeros({config.vocab_size, config.embedding_dim});
                        for (int64_t w = 1; w < config.vocab_size; ++w)
                            for (int64_t j = 0; j < config.embedding_dim; ++j)
                                t.data[static_cast<size_t>(w * config.embedding_dim + j)] =
                                    rng.uniform(-0.2, 0.2);
                        return t;
                    }());
    if (!config.trainable_embeddings) m.frozen.push_back("embedding");

    const ModelConfig& c = config;
    if (c.kind == "arci") {
        m.params.create("arci.conv_left",
                        glorot_uniform(rng, {c.conv_filters, c.embedding_dim, 1, c.conv_width},
                                       c.embedding_dim * c.conv_width, c.conv_filters * c.conv_width));
        m.params.create("arci.conv_right",
                        glorot_uniform(rng, {c.conv_filters, c.embedding_dim, 1, c.conv_width},
                                       c.embedding_dim * c.conv_width, c.conv_filters * c.conv_width));
        init_mlp(m.params, "mlp", 2 * c.conv_filters, c.mlp_hidden, rng);
    } else if (c.kind == "matchpyramid") {
        m.params.create("mp.conv", glorot_uniform(rng, {c.mp_filters, 1, c.mp_kernel, c.mp_kernel},
                                                  c.mp_kernel * c.mp_kernel,
                                                  c.mp_filters * c.mp_kernel * c.mp_kernel));
        init_mlp(m.params, "mlp", c.mp_filters * c.pool_rows * c.pool_cols, c.mlp_hidden, rng);
    } else if (c.kind == "drmm") {
        init_mlp(m.params, "drmm", c.hist_bins, c.mlp_hidden, rng, /*transposed=*/true);
        m.params.create("drmm.gate", glorot_uniform(rng, {c.embedding_dim}, c.embedding_dim, 1));
        // the histogram path is built from counts, not graph ops; only the
        // gating path differentiates through the embeddings
    } else {  // matchsrnn
        Graph scratch;  // gru2d_init also registers nodes; discard them
        gru2d_init(scratch, m.params, "srnn", 2, c.gru_hidden, rng);
        init_mlp(m.params, "mlp", c.gru_hidden, c.mlp_hidden, rng);
    }
    return m;
}

int Model::append_scorer(Graph& g, const std::vector<int64_t>& left_wids,
                         const std::vector<int64_t>& right_wids) const {
    const ModelConfig& c = config;
    if (static_cast<int64_t>(left_wids.size()) != c.left_length)
        fail("score: left length " + std::to_string(left_wids.size()) + " != configured " +
             std::to_string(c.left_length));
    if (static_cast<int64_t>(right_wids.size()) != c.right_length)
        fail("score: right length " + std::to_string(right_wids.size()) + " != configured " +
             std::to_string(c.right_length));

    int table = g.param("embedding", {c.vocab_size, c.embedding_dim});
    auto embed = [&](const std::vector<int64_t>& wids) {
        return g.gather(table, g.constant(wid_const(wids)));
    };

    if (c.kind == "arci") {
        int lv = arci_side(g, *this, "arci.conv_left", embed(left_wids));
        int rv = arci_side(g, *this, "arci.conv_right", embed(right_wids));
        return mlp_scalar(g, params, "mlp", g.concat({lv, rv}, 0), c.mlp_hidden.size());
    }

    if (c.kind == "matchpyramid") {
        int mm = matching_matrix(g, embed(left_wids), embed(right_wids), MatchMode::Dot);
        int x = g.reshape(mm, {1, c.left_length, c.right_length});
        int conv = g.relu(g.conv2d(
            x, g.param("mp.conv", {c.mp_filters, 1, c.mp_kernel, c.mp_kernel})));
        int pooled = g.grid_pool(conv, c.pool_rows, c.pool_cols);
        int flat = g.reshape(pooled, {c.mp_filters * c.pool_rows * c.pool_cols});
        return mlp_scalar(g, params, "mlp", flat, c.mlp_hidden.size());
    }

    if (c.kind == "drmm") {
        int64_t qlen = non_pad_length(left_wids);
        if (qlen < 1) fail("score: drmm query has no non-PAD terms");
        const Tensor& table_vals = params.get("embedding").value;
        Tensor qemb = embed_values(table_vals, left_wids);
        Tensor demb = embed_values(table_vals, right_wids);
        Tensor hist = matching_histogram(qemb, demb, non_pad_length(right_wids), c.hist_bins,
                                         c.hist_mode == "log-count");
        int x = g.constant(std::move(hist));  // [L1,B], frozen feature
        for (size_t l = 0; l < c.mlp_hidden.size(); ++l) {
            std::string base = "drmm." + std::to_string(l);
            const Shape& ws = params.get(base + ".w").value.shape;
            x = g.tanh(g.add(g.matmul(x, g.param(base + ".w", ws)), g.param(base + ".b", {ws[1]})));
        }
        const Shape& ws = params.get("drmm.out.w").value.shape;
        int term_scores = g.reshape(
            g.add(g.matmul(x, g.param("drmm.out.w", ws)), g.param("drmm.out.b", {1})),
            {c.left_length});
        int gates = term_gating(g, embed(left_wids), g.param("drmm.gate", {c.embedding_dim}), qlen);
        return g.reduce_sum(g.mul(gates, term_scores), -1);
    }

    // matchsrnn
    int lemb = embed(left_wids);
    int remb = embed(right_wids);
    int mcos = matching_matrix(g, lemb, remb, MatchMode::Cosine);
    int mdot = matching_matrix(g, lemb, remb, MatchMode::Dot);
    int s = g.concat({g.reshape(mcos, {c.left_length, c.right_length, 1}),
                      g.reshape(mdot, {c.left_length, c.right_length, 1})},
                     2);
    Gru2dWeights w;
    int64_t h = c.gru_hidden, m_in = 2, q = 3 * h + m_in;
    w.w_reset = g.param("srnn.w_reset", {3 * h, q});
    w.b_reset = g.param("srnn.b_reset", {3 * h});
    w.w_cand = g.param("srnn.w_cand", {h, m_in + 3 * h});
    w.b_cand = g.param("srnn.b_cand", {h});
    w.w_mix = g.param("srnn.w_mix", {4 * h, q});
    w.b_mix = g.param("srnn.b_mix", {4 * h});
    int grid = gru2d(g, s, w, h);
    int last = g.reshape(g.slice(grid, {c.left_length - 1, c.right_length - 1, 0},
                                 {c.left_length, c.right_length, h}),
                         {h});
    return mlp_scalar(g, params, "mlp", last, c.mlp_hidden.size());
}

std::vector<int64_t> row_wids(const Tensor& matrix, int64_t row) {
    int64_t len = matrix.shape[1];
    std::vector<int64_t> wids(static_cast<size_t>(len));
    for (int64_t j = 0; j < len; ++j)
        wids[static_cast<size_t>(j)] = static_cast<int64_t>(matrix.at({row, j}));
    return wids;
}

Tensor score_pairs(const Model& model, const Tensor& left, const Tensor& right) {
    if (left.ndim() != 2 || right.ndim() != 2 || left.shape[0] != right.shape[0])
        fail("score_pairs: wid matrices must be [n,L] and [n,R] with matching n");
    int64_t n = left.shape[0];
    Graph g;
    std::vector<int> score_nodes;
    for (int64_t i = 0; i < n; ++i)
        score_nodes.push_back(model.append_scorer(g, row_wids(left, i), row_wids(right, i)));
    auto vals = forward(g, model.params, {});
    Tensor out = Tensor::zeros({n});
    for (int64_t i = 0; i < n; ++i)
        out.data[static_cast<size_t>(i)] = vals[static_cast<size_t>(score_nodes[static_cast<size_t>(i)])].data[0];
    return out;
}

namespace {

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) fail("model file: unexpected end of file");
    return v;
}

void write_string(std::ofstream& f, const std::string& s) {
    write_raw<uint64_t>(f, s.size());
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& f) {
    uint64_t len = read_raw<uint64_t>(f);
    if (len > (1ull << 30)) fail("model file: corrupt string length");
    std::string s(len, '\0');
    f.read(s.data(), static_cast<std::streamsize>(len));
    if (!f) fail("model file: unexpected end of file");
    return s;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail("cannot write model file: " + path);
    f.write(kMagic, 4);
    write_raw<uint32_t>(f, kFormatVersion);
    write_string(f, model.config.to_json());
    write_raw<uint64_t>(f, model.params.size());
    for (const auto& p : model.params.all()) {
        write_string(f, p.name);
        write_raw<uint32_t>(f, static_cast<uint32_t>(p.value.shape.size()));
        for (int64_t d : p.value.shape) write_raw<int64_t>(f, d);
        f.write(reinterpret_cast<const char*>(p.value.data.data()),
                static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
    }
    if (!f) fail("model file: write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("cannot open model file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) fail("model file: bad magic: " + path);
    uint32_t version = read_raw<uint32_t>(f);
    if (version != kFormatVersion)
        fail("model file: format version " + std::to_string(version) + ", expected " +
             std::to_string(kFormatVersion));
    ModelConfig config = ModelConfig::from_json(read_string(f));
    Model m = build_model(config);
    uint64_t n_params = read_raw<uint64_t>(f);
    if (n_params != m.params.size()) fail("model file: parameter count mismatch");
    for (auto& p : m.params.all()) {
        std::string name = read_string(f);
        if (name != p.name) fail("model file: parameter order mismatch at '" + name + "'");
        uint32_t ndim = read_raw<uint32_t>(f);
        Shape shape;
        for (uint32_t d = 0; d < ndim; ++d) shape.push_back(read_raw<int64_t>(f));
        if (shape != p.value.shape) fail("model file: shape mismatch for '" + name + "'");
        f.read(reinterpret_cast<char*>(p.value.data.data()),
               static_cast<std::streamsize>(p.value.data.size() * sizeof(double)));
        if (!f) fail("model file: unexpected end of file");
    }
    return m;
}

}  // namespace mz
