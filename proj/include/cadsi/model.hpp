#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/hetsg.hpp"
#include "cadsi/hin.hpp"
#include "cadsi/intents.hpp"

namespace cadsi {

struct ObjectiveConfig {
    double lambda_d = 1.0;
    double lambda_theta = 1.0;
    double lambda_z = 1.0;
    double l2 = 1e-4;

    void validate() const;
};

/// How the recommender's users, items and aspects sit inside the HIN.
struct ModelLayout {
    std::size_t node_count = 0;
    std::vector<TypeId> node_type;  // per HIN node
    TypeId user_type;
    TypeId item_type;
    std::vector<NodeId> users;  // local user index -> HIN node
    std::vector<NodeId> items;
    std::vector<TypeId> aspect_types;

    static ModelLayout from_hin(const Hin& hin, TypeId user, TypeId item, std::span<const TypeId> aspects);
    std::size_t user_count() const { return users.size(); }
    std::size_t item_count() const { return items.size(); }
};

/// Every trainable quantity. The same struct doubles as its own gradient.
struct ModelParams {
    Matrix user_id;
    Matrix item_id;
    std::vector<LayerParams> layers;
    FusionParams fusion;
    MetaPathEmbeddings paths;

    ModelParams zeros() const;
};

struct ParamGroup {
    std::string name;
    std::span<double> values;
};

/// Stable, named view over every parameter array.
std::vector<ParamGroup> param_groups(ModelParams& p);
std::vector<std::string> param_group_names(const ModelParams& p);

struct ModelConfig {
    DisentangleConfig intents;
    double delta = 0.5;
    unsigned threads = 1;

    void validate() const;
};

/// Xavier-initialized id tables and layers, pretrained path tables, near-identity fusion.
ModelParams init_params(const ModelLayout& layout, const ModelConfig& cfg, MetaPathEmbeddings pretrained,
                        std::uint64_t seed);

/// Per-node means of the path target vectors; fixed by which tables hold which node.
struct PathIndex {
    std::vector<std::uint32_t> count;                            // per HIN node
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rows;  // per node: (path, row)
};

PathIndex index_paths(const MetaPathEmbeddings& paths, std::size_t node_count);

/// Everything a batch needs from one forward pass.
struct ModelState {
    IntentOutput intents;  // users / items are the intent representations
    Matrix user_context;   // per local user
    Matrix item_context;
    Matrix aspect_context;  // per aspect type
    Matrix aspect_mean;     // pre-fusion mean used for each aspect type
    Matrix node_mean;       // per HIN node
};

ModelState model_forward(const ModelLayout& layout, const PathIndex& index, const InteractionGraph& graph,
                         const ModelParams& params, const ModelConfig& cfg);

/// Gradient with respect to the intermediate quantities of ModelState.
struct StateGrad {
    Matrix user_intent;
    Matrix item_intent;
    Matrix user_context;
    Matrix item_context;
    Matrix aspect_context;

    static StateGrad zeros_for(const ModelState& s);
};

/// Pushes a StateGrad back into parameter gradients (adds into `grad`).
void model_backward(const ModelLayout& layout, const PathIndex& index, const InteractionGraph& graph,
                    const ModelParams& params, const ModelConfig& cfg, const ModelState& state, const StateGrad& sg,
                    ModelParams& grad);

/// e = (u^u . c_i) (c_u (.) i^i), written into `out`.
void fm_semantic_intent(std::span<const double> user_intent, std::span<const double> item_intent,
                        std::span<const double> user_context, std::span<const double> item_context,
                        std::span<double> out);

/// delta u.i + (1 - delta) e.i
double predict(std::span<const double> user_id, std::span<const double> item_id, std::span<const double> e,
               double delta);

/// Full score of (u, i) under the current state.
double score(const ModelState& s, const ModelParams& p, std::uint32_t u, std::uint32_t i, double delta);

/// Adds d(score)/d(.) * upstream into the state and id gradients.
void score_backward(const ModelState& s, const ModelParams& p, std::uint32_t u, std::uint32_t i, double delta,
                    double upstream, StateGrad& sg, ModelParams& grad);

struct TrainingTriple {
    std::uint32_t user;
    std::uint32_t pos;
    std::uint32_t neg;
};

/// Sum over the batch of -ln s(y_ui - y_uj). When `sg` and `grad` are given,
/// `weight` times the gradient is added to them.
double bpr_data_loss(const ModelState& s, const ModelParams& p, std::span<const TrainingTriple> batch, double delta,
                     StateGrad* sg = nullptr, ModelParams* grad = nullptr, double weight = 1.0);

double squared_norm(ModelParams& p, const std::vector<bool>& trainable);

/// Batch BPR data term plus l2 * ||params||^2 over every group.
double bpr_loss(const ModelState& s, ModelParams& p, std::span<const TrainingTriple> batch, double delta, double l2);

struct LossComponents {
    double debias = 0.0;
    double skipgram = 0.0;
    double bpr = 0.0;
    double regularizer = 0.0;  // already multiplied by l2
};

double total_objective(const LossComponents& c, const ObjectiveConfig& cfg);

/// Adam with the usual defaults; one moment buffer pair per parameter group.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ModelParams& params, ModelParams& grad, const std::vector<bool>& trainable);
    std::uint64_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct GroupCheck {
    std::string name;
    double relative_error = 0.0;
    std::size_t entries = 0;
};

/// Central differences over every entry of every group, compared with `analytic`
/// using ||a - b|| / (||a|| + ||b||) (0 when both vanish).
std::vector<GroupCheck> check_gradients(const std::function<double(const ModelParams&)>& loss, ModelParams params,
                                        ModelParams analytic, double step = 1e-4);

/// Extra objective term plugged into a training batch (the debias loss).
class BatchTerm {
public:
    virtual ~BatchTerm() = default;
    /// Returns the unweighted term value; adds `weight` times its gradient.
    virtual double accumulate(const ModelState& s, const ModelParams& p, std::span<const TrainingTriple> batch,
                              double weight, StateGrad& sg, ModelParams& grad) = 0;
    /// Called once per epoch after the last batch.
    virtual void end_epoch(std::size_t /*epoch*/) {}
};

struct TrainConfig {
    std::size_t max_epochs = 2000;
    std::size_t batch_size = 1024;
    double lr = 0.005;
    std::size_t eval_every = 10;
    std::size_t patience = 50;  // evaluations without improvement
    bool early_stopping = true;
    std::size_t skipgram_pairs = 0;  // per batch; 0 means batch_size
    std::uint64_t seed = 0;
    /// Written when a non-finite loss aborts training; empty disables the dump.
    std::string diagnostic_path;

    void validate() const;
};

struct LossTraceRow {
    std::size_t epoch;
    std::string component;
    double value;
};

struct LossTrace {
    std::vector<LossTraceRow> rows;
    std::string to_csv() const;
};

/// Everything fixed during training.
struct TrainingData {
    const ModelLayout* layout = nullptr;
    const InteractionGraph* train = nullptr;
    /// Positive items per user in the training split, sorted.
    std::vector<std::vector<std::uint32_t>> train_items;
    /// Skip-gram pair source; L_theta is skipped when null.
    const PairSampler* pairs = nullptr;
    std::size_t skipgram_negatives = 5;
};

std::vector<std::vector<std::uint32_t>> items_by_user(const InteractionGraph& g);

/// One epoch's triples: each training edge once, in a seeded shuffle, with one
/// uniformly drawn unobserved item.
std::vector<TrainingTriple> sample_triples(const TrainingData& data, std::uint64_t seed, std::size_t epoch);

struct TrainResult {
    ModelParams params;
    LossTrace trace;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_validation = -1.0;
};

/// Validation metric evaluated on a parameter snapshot (higher is better).
using Validator = std::function<double(const ModelParams&)>;

/// Epoch loop with Adam updates. Early stopping restores the best-scoring
/// parameters. Throws Error(non_finite) with the offending epoch and batch.
TrainResult train_model(const TrainingData& data, ModelParams params, const ModelConfig& mcfg,
                        const ObjectiveConfig& ocfg, const TrainConfig& tcfg, const std::vector<bool>& trainable,
                        const Validator& validate, BatchTerm* extra = nullptr);

/// Trainable flags per param group: aspect fusion groups follow `aspect_fusion`.
std::vector<bool> trainable_groups(const ModelParams& p, const ModelLayout& layout, bool aspect_fusion);

}  // namespace cadsi
