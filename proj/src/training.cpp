#include "mz/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mz {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// [k] vector from scalar score nodes
int stack_scores(Graph& g, const std::vector<int>& scores) {
    std::vector<int> parts;
    parts.reserve(scores.size());
    for (int s : scores) parts.push_back(g.reshape(s, {1}));
    return g.concat(parts, 0);
}

}  // namespace

BatchMode Objective::batch_mode() const {
    switch (kind) {
        case Kind::PointwiseMse:
        case Kind::PointwiseLogistic:
            return BatchMode::Pointwise;
        case Kind::PairwiseHinge:
            return BatchMode::Pairwise;
        case Kind::ListwiseSoftmaxCe:
            return BatchMode::Listwise;
    }
    fail("unreachable objective kind");
}

std::string Objective::name() const {
    switch (kind) {
        case Kind::PointwiseMse: return "pointwise-mse";
        case Kind::PointwiseLogistic: return "pointwise-logistic";
        case Kind::PairwiseHinge: return "pairwise-hinge";
        case Kind::ListwiseSoftmaxCe: return "listwise-softmax-ce";
    }
    fail("unreachable objective kind");
}

Objective Objective::from_name(const std::string& name, double margin) {
    Objective o;
    o.margin = margin;
    if (name == "pointwise-mse")
        o.kind = Kind::PointwiseMse;
    else if (name == "pointwise-logistic")
        o.kind = Kind::PointwiseLogistic;
    else if (name == "pairwise-hinge")
        o.kind = Kind::PairwiseHinge;
    else if (name == "listwise-softmax-ce")
        o.kind = Kind::ListwiseSoftmaxCe;
    else
        fail("unknown objective: " + name);
    if (o.kind == Kind::PairwiseHinge && !(o.margin > 0)) fail("hinge margin must be > 0");
    return o;
}

int loss_node(Graph& g, const Objective& obj, const std::vector<int>& scores,
              const std::vector<int>& scores_neg, const std::vector<double>& labels) {
    if (scores.empty()) fail("loss over an empty batch");
    const int64_t n = static_cast<int64_t>(scores.size());

    switch (obj.kind) {
        case Objective::Kind::PointwiseMse: {
            if (labels.size() != scores.size()) fail("pointwise loss: labels/scores mismatch");
            int s = stack_scores(g, scores);
            int y = g.constant(Tensor{{n}, labels});
            int d = g.sub(s, y);
            return g.reduce_mean(g.mul(d, d), -1);
        }
        case Objective::Kind::PointwiseLogistic: {
            if (labels.size() != scores.size()) fail("pointwise loss: labels/scores mismatch");
            int s = stack_scores(g, scores);
            int p = g.sigmoid(s);  // log() clamps its input, matching the sigma clamp
            int one = g.constant(Tensor::full({n}, 1.0));
            int y = g.constant(Tensor{{n}, labels});
            int pos = g.mul(y, g.log(p));
            int neg = g.mul(g.sub(one, y), g.log(g.sub(one, p)));
            int minus_one = g.constant(Tensor::scalar(-1.0));
            return g.mul(minus_one, g.reduce_mean(g.add(pos, neg), -1));
        }
        case Objective::Kind::PairwiseHinge: {
            if (scores_neg.size() != scores.size()) fail("pairwise loss: pos/neg mismatch");
            int sp = stack_scores(g, scores);
            int sn = stack_scores(g, scores_neg);
            int m = g.constant(Tensor::full({n}, obj.margin));
            return g.reduce_mean(g.relu(g.sub(g.add(m, sn), sp)), -1);
        }
        case Objective::Kind::ListwiseSoftmaxCe: {
            if (labels.size() != scores.size()) fail("listwise loss: grades/scores mismatch");
            double total = 0;
            for (double v : labels) total += v;
            std::vector<double> target(labels.size());
            for (size_t i = 0; i < labels.size(); ++i)
                target[i] = total > 0 ? labels[i] / total : 1.0 / static_cast<double>(n);
            int s = stack_scores(g, scores);
            int p = g.softmax(s, 0);
            int t = g.constant(Tensor{{n}, target});
            int minus_one = g.constant(Tensor::scalar(-1.0));
            return g.mul(minus_one, g.reduce_sum(g.mul(t, g.log(p)), -1));
        }
    }
    fail("unreachable objective kind");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) {
    if (config_.kind != "sgd" && config_.kind != "adam")
        fail("unknown optimizer: " + config_.kind);
    if (!(config_.learning_rate > 0)) fail("learning rate must be > 0");
    if (!(config_.beta1 > 0 && config_.beta1 < 1 && config_.beta2 > 0 && config_.beta2 < 1))
        fail("adam betas must lie in (0, 1)");
}

void Optimizer::step(ParameterStore& params, const std::vector<std::string>& frozen) {
    ++steps_;
    for (Parameter& p : params.all()) {
        bool skip = false;
        for (const std::string& f : frozen)
            if (f == p.name) skip = true;
        if (skip) continue;

        for (double gv : p.grad.data)
            if (!std::isfinite(gv)) fail("non-finite gradient for parameter " + p.name);

        if (config_.kind == "sgd") {
            for (size_t i = 0; i < p.value.data.size(); ++i)
                p.value.data[i] -= config_.learning_rate * p.grad.data[i];
            continue;
        }

        // adam with bias correction
        auto mit = first_moment_.find(p.name);
        if (mit == first_moment_.end()) {
            first_moment_[p.name] = Tensor::zeros(p.value.shape);
            second_moment_[p.name] = Tensor::zeros(p.value.shape);
        }
        Tensor& m = first_moment_[p.name];
        Tensor& v = second_moment_[p.name];
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            const double gv = p.grad.data[i];
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gv;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gv * gv;
            const double mhat = m.data[i] / c1;
            const double vhat = v.data[i] / c2;
            p.value.data[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

namespace {

// loss for one batch; appends scorers and the loss fragment to a fresh graph
double batch_loss_and_grads(Model& model, const Batch& batch, const Objective& obj) {
    Graph g;
    std::vector<int> scores, scores_neg;
    std::vector<double> labels;
    const int64_t n = batch.rows();

    if (batch.mode == BatchMode::Listwise) {
        // whole-batch group handling below; each group contributes one term
        std::vector<int> group_losses;
        for (size_t gi = 0; gi + 1 < batch.group_bounds.size(); ++gi) {
            std::vector<int> gs;
            std::vector<double> gl;
            for (size_t r = batch.group_bounds[gi]; r < batch.group_bounds[gi + 1]; ++r) {
                gs.push_back(model.append_scorer(g, row_wids(batch.left, (int64_t)r),
                                                 row_wids(batch.right, (int64_t)r)));
                gl.push_back(static_cast<double>(batch.labels[r]));
            }
            group_losses.push_back(loss_node(g, obj, gs, {}, gl));
        }
        int loss = group_losses.size() == 1
                       ? group_losses[0]
                       : g.reduce_mean(stack_scores(g, group_losses), -1);
        auto values = forward(g, model.params, {});
        auto grads = backward(g, loss, values, model.params);
        for (Parameter& p : model.params.all()) p.grad = grads.at(p.name);
        return values[(size_t)loss].data[0];
    }

    for (int64_t i = 0; i < n; ++i) {
        scores.push_back(
            model.append_scorer(g, row_wids(batch.left, i), row_wids(batch.right, i)));
        if (batch.mode == BatchMode::Pairwise)
            scores_neg.push_back(
                model.append_scorer(g, row_wids(batch.left, i), row_wids(batch.right_neg, i)));
        else
            labels.push_back(static_cast<double>(batch.labels[(size_t)i]));
    }
    int loss = loss_node(g, obj, scores, scores_neg, labels);
    auto values = forward(g, model.params, {});
    auto grads = backward(g, loss, values, model.params);
    for (Parameter& p : model.params.all()) p.grad = grads.at(p.name);
    return values[(size_t)loss].data[0];
}

}  // namespace

TrainReport train(Model& model, const std::vector<RelationRecord>& relations, const Corpus& corpus,
                  const TrainOptions& options, const ValidationFn& validation) {
    if (options.mode != options.objective.batch_mode())
        fail("batch mode is incompatible with objective " + options.objective.name());

    const auto start = std::chrono::steady_clock::now();
    Optimizer opt(options.optimizer);
    TrainReport report;

    for (int64_t epoch = 0; epoch < options.optimizer.epochs; ++epoch) {
        const uint64_t seed = options.batch_seed + static_cast<uint64_t>(epoch);
        std::vector<Batch> batches;
        switch (options.mode) {
            case BatchMode::Pointwise:
                batches = batches_pointwise(relations, corpus, options.batch_size, seed);
                break;
            case BatchMode::Pairwise:
                batches = batches_pairwise(relations, corpus, options.batch_size,
                                           options.num_neg, seed);
                break;
            case BatchMode::Listwise:
                batches = batches_listwise(relations, corpus, seed);
                break;
        }
        if (batches.empty()) fail("training produced no batches");

        double weighted = 0, weight = 0;
        for (const Batch& b : batches) {
            model.params.zero_grads();
            double loss = batch_loss_and_grads(model, b, options.objective);
            // listwise batches hold one group each, so weight is 1 either way
            double w = options.mode == BatchMode::Listwise ? 1.0
                                                           : static_cast<double>(b.rows());
            weighted += loss * w;
            weight += w;
            opt.step(model.params, model.frozen);
        }

        EpochStats stats;
        stats.mean_loss = weighted / weight;
        if (validation) stats.val_metric = validation(model);
        report.epochs.push_back(stats);
    }

    report.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

void write_train_report(const TrainReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open train report for writing: " + path);
    for (size_t i = 0; i < report.epochs.size(); ++i) {
        const EpochStats& e = report.epochs[i];
        std::ostringstream line;
        line.imbue(std::locale::classic());
        line.precision(17);
        line << (i + 1) << '\t' << e.mean_loss;
        if (e.val_metric) line << '\t' << *e.val_metric;
        out << line.str() << '\n';
    }
}

}  // namespace mz
