#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mz/dataprep.hpp"
#include "mz/graph.hpp"
#include "mz/models.hpp"

namespace mz {

struct Objective {
    enum class Kind { PointwiseMse, PointwiseLogistic, PairwiseHinge, ListwiseSoftmaxCe };
    Kind kind = Kind::PairwiseHinge;
    double margin = 1.0;

    BatchMode batch_mode() const;
    std::string name() const;
    static Objective from_name(const std::string& name, double margin = 1.0);
};

struct OptimizerConfig {
    std::string kind = "sgd";  // sgd | adam
    double learning_rate = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int64_t epochs = 1;
    uint64_t seed = 0;
};

// Loss over a batch's score nodes. Pointwise uses `labels`; pairwise uses
// scores (positive) and scores_neg; listwise treats the batch as one group
// with `labels` as grades.
int loss_node(Graph& g, const Objective& obj, const std::vector<int>& scores,
              const std::vector<int>& scores_neg, const std::vector<double>& labels);

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config);

    // applies and clears the accumulated gradients; frozen names skipped
    void step(ParameterStore& params, const std::vector<std::string>& frozen);

private:
    OptimizerConfig config_;
    int64_t steps_ = 0;
    std::map<std::string, Tensor> first_moment_;
    std::map<std::string, Tensor> second_moment_;
};

struct EpochStats {
    double mean_loss = 0;
    std::optional<double> val_metric;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double wall_time_sec = 0;
};

struct TrainOptions {
    Objective objective;
    OptimizerConfig optimizer;
    BatchMode mode = BatchMode::Pairwise;
    int64_t batch_size = 32;
    int64_t num_neg = 1;
    uint64_t batch_seed = 0;
};

using ValidationFn = std::function<double(const Model&)>;

TrainReport train(Model& model, const std::vector<RelationRecord>& relations, const Corpus& corpus,
                  const TrainOptions& options, const ValidationFn& validation = nullptr);

void write_train_report(const TrainReport& report, const std::string& path);

}  // namespace mz
