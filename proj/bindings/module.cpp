// Python bindings for the core operations: data preparation, model
// building and scoring, training, and ranking metrics.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mz/dataprep.hpp"
#include "mz/evaluation.hpp"
#include "mz/models.hpp"
#include "mz/toydata.hpp"
#include "mz/training.hpp"

namespace py = pybind11;
using namespace mz;

namespace {

Tensor wid_matrix(const std::vector<std::vector<int64_t>>& rows) {
    if (rows.empty()) throw std::runtime_error("empty wid matrix");
    int64_t n = (int64_t)rows.size(), len = (int64_t)rows[0].size();
    Tensor m = Tensor::zeros({n, len});
    for (int64_t i = 0; i < n; ++i) {
        if ((int64_t)rows[(size_t)i].size() != len)
            throw std::runtime_error("ragged wid matrix");
        for (int64_t j = 0; j < len; ++j)
            m.at({i, j}) = (double)rows[(size_t)i][(size_t)j];
    }
    return m;
}

}  // namespace

PYBIND11_MODULE(_matchcraft, m) {
    m.doc() = "deep text matching: data prep, models, training, metrics";

    // ---- dataprep ----
    py::class_<Vocabulary>(m, "Vocabulary")
        .def(py::init<>())
        .def("size", &Vocabulary::size)
        .def("wid", &Vocabulary::wid)
        .def_readonly("wid_to_word", &Vocabulary::wid_to_word)
        .def_readonly("frequency", &Vocabulary::frequency);

    py::class_<CorpusEntry>(m, "CorpusEntry")
        .def(py::init<>())
        .def_readwrite("tid", &CorpusEntry::tid)
        .def_readwrite("wids", &CorpusEntry::wids)
        .def_readwrite("original_length", &CorpusEntry::original_length);

    py::class_<RelationRecord>(m, "RelationRecord")
        .def(py::init([](int64_t label, std::string left, std::string right) {
                 return RelationRecord{label, std::move(left), std::move(right)};
             }),
             py::arg("label"), py::arg("tid_left"), py::arg("tid_right"))
        .def_readwrite("label", &RelationRecord::label)
        .def_readwrite("tid_left", &RelationRecord::tid_left)
        .def_readwrite("tid_right", &RelationRecord::tid_right);

    m.def("tokenize", &tokenize);
    m.def("build_vocabulary", &build_vocabulary, py::arg("docs"), py::arg("min_count") = 1,
          py::arg("max_doc_fraction") = 1.0, py::arg("stopwords") = std::set<std::string>{});
    m.def("encode_corpus", &encode_corpus, py::arg("texts"), py::arg("vocab"),
          py::arg("fixed_length"));

    // ---- models ----
    py::class_<Model>(m, "Model")
        .def("parameter_count", &Model::parameter_count)
        .def_property_readonly("kind", [](const Model& m) { return m.config.kind; })
        .def("config_json", [](const Model& m) { return m.config.to_json(); });

    m.def("build_model",
          [](const std::string& config_json) { return build_model(ModelConfig::from_json(config_json)); },
          py::arg("config_json"));
    m.def("save_model", &save_model);
    m.def("load_model", &load_model);
    m.def("score_pairs",
          [](const Model& model, const std::vector<std::vector<int64_t>>& left,
             const std::vector<std::vector<int64_t>>& right) {
              return score_pairs(model, wid_matrix(left), wid_matrix(right)).data;
          },
          py::arg("model"), py::arg("left_wids"), py::arg("right_wids"));

    // ---- training ----
    m.def("train",
          [](Model& model, const std::vector<RelationRecord>& relations,
             const std::map<std::string, CorpusEntry>& corpus, const std::string& objective,
             double margin, const std::string& batch_mode, int64_t batch_size, int64_t num_neg,
             const std::string& optimizer, double learning_rate, int64_t epochs, uint64_t seed) {
              TrainOptions o;
              o.objective = Objective::from_name(objective, margin);
              if (batch_mode == "pointwise") o.mode = BatchMode::Pointwise;
              else if (batch_mode == "pairwise") o.mode = BatchMode::Pairwise;
              else if (batch_mode == "listwise") o.mode = BatchMode::Listwise;
              else throw std::runtime_error("unknown batch_mode: " + batch_mode);
              o.batch_size = batch_size;
              o.num_neg = num_neg;
              o.batch_seed = seed;
              o.optimizer.kind = optimizer;
              o.optimizer.learning_rate = learning_rate;
              o.optimizer.epochs = epochs;
              o.optimizer.seed = seed;
              TrainReport r = train(model, relations, corpus, o);
              std::vector<double> losses;
              for (const auto& e : r.epochs) losses.push_back(e.mean_loss);
              return losses;
          },
          py::arg("model"), py::arg("relations"), py::arg("corpus"), py::arg("objective"),
          py::arg("margin") = 1.0, py::arg("batch_mode") = "pairwise",
          py::arg("batch_size") = 32, py::arg("num_neg") = 1, py::arg("optimizer") = "sgd",
          py::arg("learning_rate") = 0.1, py::arg("epochs") = 1, py::arg("seed") = 0);

    // ---- evaluation ----
    m.def("precision_at_k", &precision_at_k);
    m.def("average_precision", &average_precision);
    m.def("ndcg_at_k", &ndcg_at_k);
    m.def("mrr", &mrr);

    // ---- toy data ----
    py::class_<PreparedToy>(m, "PreparedToy")
        .def_readonly("vocab", &PreparedToy::vocab)
        .def_readonly("corpus", &PreparedToy::corpus)
        .def_readonly("relations", &PreparedToy::relations);
    m.def("make_prepared_toy",
          [](int64_t queries, int64_t candidates, int64_t vocab_words, uint64_t seed,
             int64_t left_length, int64_t right_length) {
              return prepare_toy(make_toy_dataset(queries, candidates, vocab_words, seed),
                                 left_length, right_length);
          },
          py::arg("queries") = 10, py::arg("candidates") = 4, py::arg("vocab_words") = 50,
          py::arg("seed") = 1, py::arg("left_length") = 6, py::arg("right_length") = 6);
}
