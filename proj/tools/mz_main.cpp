// mz: pipeline front-end — prepare | train | predict | eval, driven by a
// single JSON config with data / model / training / evaluation sections.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "mz/dataprep.hpp"
#include "mz/evaluation.hpp"
#include "mz/models.hpp"
#include "mz/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit codes: 0 success, 1 usage/config, 2 data, 3 internal
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataSection {
    std::string raw_file;
    std::string out_dir = ".";
    int64_t left_length = 8;
    int64_t right_length = 16;
    int64_t min_count = 1;
    double max_doc_fraction = 1.0;
    std::set<std::string> stopwords;
};

struct TrainingSection {
    std::string objective = "pairwise-hinge";
    double margin = 1.0;
    std::string optimizer = "sgd";
    double learning_rate = 0.1;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    int64_t epochs = 1;
    std::string batch_mode = "pairwise";
    int64_t batch_size = 32;
    int64_t num_neg = 1;
    uint64_t seed = 0;
};

struct EvaluationSection {
    std::vector<std::string> metrics = {"map"};
    std::string run_name = "mz";
};

struct RunConfig {
    DataSection data;
    mz::ModelConfig model;
    TrainingSection training;
    EvaluationSection evaluation;
};

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown key in " + where + " section: " + it.key());
}

mz::BatchMode parse_mode(const std::string& s) {
    if (s == "pointwise") return mz::BatchMode::Pointwise;
    if (s == "pairwise") return mz::BatchMode::Pairwise;
    if (s == "listwise") return mz::BatchMode::Listwise;
    throw ConfigError("unknown batch_mode: " + s);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j, {"data", "model", "training", "evaluation"}, "top-level");

    RunConfig c;
    try {
        if (j.contains("data")) {
            const json& d = j["data"];
            reject_unknown(d,
                           {"raw_file", "out_dir", "left_length", "right_length", "min_count",
                            "max_doc_fraction", "stopwords"},
                           "data");
            if (d.contains("raw_file")) c.data.raw_file = d["raw_file"].get<std::string>();
            if (d.contains("out_dir")) c.data.out_dir = d["out_dir"].get<std::string>();
            if (d.contains("left_length")) c.data.left_length = d["left_length"].get<int64_t>();
            if (d.contains("right_length"))
                c.data.right_length = d["right_length"].get<int64_t>();
            if (d.contains("min_count")) c.data.min_count = d["min_count"].get<int64_t>();
            if (d.contains("max_doc_fraction"))
                c.data.max_doc_fraction = d["max_doc_fraction"].get<double>();
            if (d.contains("stopwords"))
                for (const auto& w : d["stopwords"]) c.data.stopwords.insert(w.get<std::string>());
        }
        if (j.contains("model")) {
            c.model = mz::ModelConfig::from_json(j["model"].dump());
            // keep the model's view of lengths consistent with the data section
            c.model.left_length = c.data.left_length;
            c.model.right_length = c.data.right_length;
        }
        if (j.contains("training")) {
            const json& t = j["training"];
            reject_unknown(t,
                           {"objective", "margin", "optimizer", "learning_rate", "beta1", "beta2",
                            "epsilon", "epochs", "batch_mode", "batch_size", "num_neg", "seed"},
                           "training");
            if (t.contains("objective")) c.training.objective = t["objective"].get<std::string>();
            if (t.contains("margin")) c.training.margin = t["margin"].get<double>();
            if (t.contains("optimizer")) c.training.optimizer = t["optimizer"].get<std::string>();
            if (t.contains("learning_rate"))
                c.training.learning_rate = t["learning_rate"].get<double>();
            if (t.contains("beta1")) c.training.beta1 = t["beta1"].get<double>();
            if (t.contains("beta2")) c.training.beta2 = t["beta2"].get<double>();
            if (t.contains("epsilon")) c.training.epsilon = t["epsilon"].get<double>();
            if (t.contains("epochs")) c.training.epochs = t["epochs"].get<int64_t>();
            if (t.contains("batch_mode")) c.training.batch_mode = t["batch_mode"].get<std::string>();
            if (t.contains("batch_size")) c.training.batch_size = t["batch_size"].get<int64_t>();
            if (t.contains("num_neg")) c.training.num_neg = t["num_neg"].get<int64_t>();
            if (t.contains("seed")) c.training.seed = t["seed"].get<uint64_t>();
        }
        if (j.contains("evaluation")) {
            const json& e = j["evaluation"];
            reject_unknown(e, {"metrics", "run_name"}, "evaluation");
            if (e.contains("metrics"))
                c.evaluation.metrics = e["metrics"].get<std::vector<std::string>>();
            if (e.contains("run_name")) c.evaluation.run_name = e["run_name"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }

    // cross-section consistency before any work
    mz::Objective obj = mz::Objective::from_name(c.training.objective, c.training.margin);
    if (parse_mode(c.training.batch_mode) != obj.batch_mode())
        throw ConfigError("batch_mode '" + c.training.batch_mode +
                          "' is incompatible with objective '" + c.training.objective + "'");
    return c;
}

std::vector<std::string> file_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
    return lines;
}

struct PathSet {
    std::string vocab, corpus, relations, qrels, model, report, scores, trec, per_query;
};

PathSet paths_in(const std::string& dir) {
    PathSet p;
    p.vocab = dir + "/vocab.txt";
    p.corpus = dir + "/corpus.txt";
    p.relations = dir + "/relations.txt";
    p.qrels = dir + "/qrels.txt";
    p.model = dir + "/model.bin";
    p.report = dir + "/train_report.txt";
    p.scores = dir + "/scores.txt";
    p.trec = dir + "/run.trec";
    p.per_query = dir + "/per_query.txt";
    return p;
}

// ---- prepare ----

int cmd_prepare(const RunConfig& cfg) {
    if (cfg.data.raw_file.empty()) throw ConfigError("data.raw_file is required for prepare");
    auto lines = file_lines(cfg.data.raw_file);
    if (lines.empty()) throw DataError("raw input is empty: " + cfg.data.raw_file);

    std::map<std::string, std::string> left_tid, right_tid;
    std::vector<std::pair<std::string, std::vector<std::string>>> left_texts, right_texts;
    std::vector<std::vector<std::string>> docs;
    std::vector<mz::RelationRecord> relations;

    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty()) continue;
        size_t t1 = line.find('\t');
        size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw DataError("malformed raw line " + std::to_string(i + 1) +
                            ": expected label<TAB>text_left<TAB>text_right");
        int64_t label;
        try {
            size_t used = 0;
            label = std::stoll(line.substr(0, t1), &used);
            if (used != t1) throw std::invalid_argument("label");
        } catch (const std::exception&) {
            throw DataError("malformed label on raw line " + std::to_string(i + 1));
        }
        std::string lt = line.substr(t1 + 1, t2 - t1 - 1);
        std::string rt = line.substr(t2 + 1);
        if (!left_tid.count(lt)) {  // dedup by exact text
            left_tid[lt] = "L" + std::to_string(left_texts.size());
            left_texts.push_back({left_tid[lt], mz::tokenize(lt)});
            docs.push_back(mz::tokenize(lt));
        }
        if (!right_tid.count(rt)) {
            right_tid[rt] = "R" + std::to_string(right_texts.size());
            right_texts.push_back({right_tid[rt], mz::tokenize(rt)});
            docs.push_back(mz::tokenize(rt));
        }
        relations.push_back({label, left_tid[lt], right_tid[rt]});
    }

    auto vocab = mz::build_vocabulary(docs, cfg.data.min_count, cfg.data.max_doc_fraction,
                                      cfg.data.stopwords);
    auto left = mz::encode_corpus(left_texts, vocab, cfg.data.left_length);
    auto right = mz::encode_corpus(right_texts, vocab, cfg.data.right_length);
    std::vector<mz::CorpusEntry> corpus = left;
    corpus.insert(corpus.end(), right.begin(), right.end());

    fs::create_directories(cfg.data.out_dir);
    PathSet p = paths_in(cfg.data.out_dir);
    mz::write_vocabulary(vocab, p.vocab);
    mz::write_corpus(corpus, p.corpus);
    mz::write_relations(relations, p.relations);
    {
        // graded judgments derived from relation labels, TREC qrels layout
        std::ofstream out(p.qrels, std::ios::binary);
        for (const auto& r : relations)
            out << r.tid_left << " 0 " << r.tid_right << " " << r.label << "\n";
    }

    std::cout << "vocabulary size: " << vocab.size() << "\n"
              << "left texts: " << left.size() << "\n"
              << "right texts: " << right.size() << "\n"
              << "relations: " << relations.size() << "\n";
    return 0;
}

// ---- shared loading for train/predict ----

struct Prepared {
    mz::Vocabulary vocab;
    mz::Corpus corpus;
    std::vector<mz::RelationRecord> relations;
};

Prepared load_prepared(const RunConfig& cfg) {
    PathSet p = paths_in(cfg.data.out_dir);
    for (const std::string& path : {p.vocab, p.corpus, p.relations})
        if (!fs::exists(path)) throw DataError("missing prepared file: " + path);
    Prepared out;
    try {
        out.vocab = mz::read_vocabulary(p.vocab);
        for (auto& e : mz::read_corpus(p.corpus)) out.corpus[e.tid] = e;
        out.relations = mz::read_relations(p.relations);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
    return out;
}

void check_wid_range(const mz::Corpus& corpus, int64_t vocab_size) {
    for (const auto& [tid, e] : corpus)
        for (int64_t w : e.wids)
            if (w < 0 || w >= vocab_size)
                throw DataError("wid " + std::to_string(w) + " in text " + tid +
                                " is outside the model's embedding range (vocab size " +
                                std::to_string(vocab_size) + ")");
}

// ---- train ----

int cmd_train(RunConfig cfg, std::optional<uint64_t> seed_override) {
    if (seed_override) {
        cfg.model.seed = *seed_override;
        cfg.training.seed = *seed_override;
    }
    Prepared prep = load_prepared(cfg);
    if (cfg.model.kind.empty()) throw ConfigError("model.kind is required for train");
    if (cfg.model.vocab_size == 0) cfg.model.vocab_size = prep.vocab.size();
    check_wid_range(prep.corpus, cfg.model.vocab_size);

    mz::Model model = mz::build_model(cfg.model);
    if (!cfg.model.embedding_file.empty()) {
        if (!fs::exists(cfg.model.embedding_file))
            throw DataError("missing embedding file: " + cfg.model.embedding_file);
        model.params.get("embedding").value = mz::load_embeddings(
            cfg.model.embedding_file, prep.vocab, cfg.model.embedding_dim, cfg.model.seed);
    }

    mz::TrainOptions opts;
    opts.objective = mz::Objective::from_name(cfg.training.objective, cfg.training.margin);
    opts.mode = parse_mode(cfg.training.batch_mode);
    opts.batch_size = cfg.training.batch_size;
    opts.num_neg = cfg.training.num_neg;
    opts.batch_seed = cfg.training.seed;
    opts.optimizer.kind = cfg.training.optimizer;
    opts.optimizer.learning_rate = cfg.training.learning_rate;
    opts.optimizer.beta1 = cfg.training.beta1;
    opts.optimizer.beta2 = cfg.training.beta2;
    opts.optimizer.epsilon = cfg.training.epsilon;
    opts.optimizer.epochs = cfg.training.epochs;
    opts.optimizer.seed = cfg.training.seed;

    mz::TrainReport report = mz::train(model, prep.relations, prep.corpus, opts);

    PathSet p = paths_in(cfg.data.out_dir);
    mz::save_model(model, p.model);
    mz::write_train_report(report, p.report);
    for (size_t e = 0; e < report.epochs.size(); ++e)
        std::cout << "epoch " << (e + 1) << " mean loss " << report.epochs[e].mean_loss << "\n";
    std::cout << "model written to " << p.model << "\n";
    return 0;
}

// ---- predict ----

int cmd_predict(const RunConfig& cfg, const std::string& model_path) {
    Prepared prep = load_prepared(cfg);
    std::string mpath = model_path.empty() ? paths_in(cfg.data.out_dir).model : model_path;
    if (!fs::exists(mpath)) throw DataError("missing model file: " + mpath);
    mz::Model model = mz::load_model(mpath);
    check_wid_range(prep.corpus, model.config.vocab_size);

    PathSet p = paths_in(cfg.data.out_dir);
    std::ofstream scores_out(p.scores, std::ios::binary);
    if (!scores_out) throw DataError("cannot open scores file for writing: " + p.scores);

    mz::RankedRun run;
    bool ran_any = false;
    for (const auto& r : prep.relations) {
        auto lit = prep.corpus.find(r.tid_left);
        auto rit = prep.corpus.find(r.tid_right);
        if (lit == prep.corpus.end() || rit == prep.corpus.end())
            throw DataError("relation references unknown tid " +
                            (lit == prep.corpus.end() ? r.tid_left : r.tid_right));
        mz::Graph g;
        int node = model.append_scorer(g, lit->second.wids, rit->second.wids);
        double s = mz::forward(g, model.params, {})[(size_t)node].data[0];
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", s);
        scores_out << r.tid_left << "\t" << r.tid_right << "\t" << buf << "\n";
        run.add(r.tid_left, r.tid_right, s);
        ran_any = true;
    }
    if (!ran_any) throw DataError("no relations to score");
    mz::write_trec_run(run, cfg.evaluation.run_name, p.trec);
    std::cout << "scores written to " << p.scores << "\n"
              << "trec run written to " << p.trec << "\n";
    return 0;
}

// ---- eval ----

int cmd_eval(const RunConfig& cfg, std::string run_path, std::string qrels_path) {
    PathSet p = paths_in(cfg.data.out_dir);
    if (run_path.empty()) run_path = p.trec;
    if (qrels_path.empty()) qrels_path = p.qrels;
    mz::RankedRun run;
    mz::QrelSet qrels;
    try {
        run = mz::read_trec_run(file_lines(run_path));
        qrels = mz::read_trec_qrels(file_lines(qrels_path));
    } catch (const DataError&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }

    mz::EvalResult result = mz::evaluate_run(run, qrels, cfg.evaluation.metrics);
    std::ofstream table(p.per_query, std::ios::binary);
    if (!table) throw DataError("cannot open per-query table for writing: " + p.per_query);
    std::ostringstream fmt;
    fmt.imbue(std::locale::classic());
    fmt.precision(6);
    fmt << std::fixed;
    for (const std::string& metric : result.metrics) {
        for (const std::string& qid : run.query_ids()) {
            fmt.str("");
            fmt << result.per_query[metric][qid];
            table << qid << "\t" << metric << "\t" << fmt.str() << "\n";
        }
    }
    for (const std::string& metric : result.metrics) {
        fmt.str("");
        fmt << result.means[metric];
        std::cout << metric << " " << fmt.str() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mz: text-matching pipeline (prepare | train | predict | eval)"};
    app.require_subcommand(1);

    std::string config_path, model_path, out_dir, run_path, qrels_path;
    std::optional<uint64_t> seed_override;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        sub->add_option("--config", config_path, "JSON run configuration")
            ->required(config_required);
        sub->add_option("--out", out_dir, "output directory (overrides data.out_dir)");
        sub->add_option("--seed", seed_override, "seed override for model and training");
    };
    CLI::App* prepare = app.add_subcommand("prepare", "build unified-format files");
    add_common(prepare, true);
    CLI::App* train = app.add_subcommand("train", "train a model on prepared files");
    add_common(train, true);
    CLI::App* predict = app.add_subcommand("predict", "score relations with a trained model");
    add_common(predict, true);
    predict->add_option("--model", model_path, "model file (default: out dir model.bin)");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a TREC run against qrels");
    add_common(eval, true);
    eval->add_option("--run", run_path, "TREC run file (default: out dir run.trec)");
    eval->add_option("--qrels", qrels_path, "TREC qrels file (default: out dir qrels.txt)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.data.out_dir = out_dir;
        if (prepare->parsed()) return cmd_prepare(cfg);
        if (train->parsed()) return cmd_train(cfg, seed_override);
        if (predict->parsed()) return cmd_predict(cfg, model_path);
        return cmd_eval(cfg, run_path, qrels_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
