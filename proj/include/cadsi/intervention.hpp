#pragma once

#include <span>
#include <string>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/model.hpp"

namespace cadsi {

struct InterventionConfig {
    std::size_t iterations = 140;
    /// Let the debias loss update the aspect context vectors.
    bool unfreeze_aspects = false;

    void validate() const;
    /// Uniform prior over aspect types.
    static double prior(std::size_t aspects) { return 1.0 / static_cast<double>(aspects); }
};

struct AdjustedPredictionPair {
    double adjusted;  // semantic term uses u^u (.) c_a
    double base;      // semantic term uses u^u
};

AdjustedPredictionPair adjusted_prediction(std::span<const double> user_id, std::span<const double> item_id,
                                           std::span<const double> user_intent, std::span<const double> aspect,
                                           double delta);

/// Mean over aspects of (adjusted - base) under the uniform prior.
double backdoor_effect(std::span<const double> user_id, std::span<const double> item_id,
                       std::span<const double> user_intent, const Matrix& aspects, double delta);

/// True (include the aspect) iff tanh(adjusted - base) > 0; a tie excludes.
bool indicator(const AdjustedPredictionPair& pair);

/// Writes the mask entry: c_a when included, otherwise all ones.
void indicator_mask(bool included, std::span<const double> aspect, std::span<double> out);

/// E = u^u (.) product of c_a over included aspects (excluded ones contribute 1).
void refine(std::span<const double> user_intent, const Matrix& aspects, const std::vector<bool>& included,
            std::span<double> out);

/// Inclusion decisions for one (user, item) pair.
std::vector<bool> inclusion(std::span<const double> user_id, std::span<const double> item_id,
                            std::span<const double> user_intent, const Matrix& aspects, double delta);

/// f(u, i, E) with the indicator gating recomputed from the current state.
double intervened_score(const ModelState& s, const ModelParams& p, const Matrix& aspects, std::uint32_t u,
                        std::uint32_t i, double delta);

struct InterventionTraceRow {
    std::size_t iteration;
    std::size_t aspect;
    double included_fraction;
    double mean_effect;
    double debias_loss;
};

std::string intervention_trace_csv(std::span<const InterventionTraceRow> rows);

/// Binary cross-entropy between labels and s(f) over (u, pos, 1) and (u, neg, 0)
/// pairs derived from each training triple.
class DebiasTerm : public BatchTerm {
public:
    /// `frozen_aspects` is used as-is when non-null; otherwise the state's
    /// aspect vectors are used and receive gradients.
    DebiasTerm(double delta, const Matrix* frozen_aspects);

    double accumulate(const ModelState& s, const ModelParams& p, std::span<const TrainingTriple> batch,
                      double weight, StateGrad& sg, ModelParams& grad) override;
    void end_epoch(std::size_t epoch) override;

    const std::vector<InterventionTraceRow>& trace() const { return trace_; }

private:
    double pair_loss(const ModelState& s, const ModelParams& p, const Matrix& aspects, std::uint32_t u,
                     std::uint32_t i, double label, double weight, StateGrad& sg, ModelParams& grad);

    double delta_;
    const Matrix* frozen_;
    std::vector<std::size_t> included_;
    std::vector<double> effect_sum_;
    std::size_t pairs_ = 0;
    double loss_sum_ = 0.0;
    std::vector<InterventionTraceRow> trace_;
};

struct InterventionResult {
    TrainResult train;
    std::vector<InterventionTraceRow> trace;
    Matrix aspects;  // vectors used for gating and ranking after fine-tuning
};

/// Fine-tunes for `iterations` epochs of the joint objective with the debias term,
/// restoring the best validation snapshot when early stopping is enabled.
InterventionResult run_intervention(const TrainingData& data, ModelParams params, const ModelConfig& mcfg,
                                    const ObjectiveConfig& ocfg, TrainConfig tcfg, const InterventionConfig& icfg,
                                    const Validator& validate);

}  // namespace cadsi
