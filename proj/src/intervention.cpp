#include "cadsi/intervention.hpp"

#include <cmath>
#include <limits>

namespace cadsi {

void InterventionConfig::validate() const {
    if (iterations < 1) throw Error(ErrorCode::config, "intervention iterations must be >= 1");
}

AdjustedPredictionPair adjusted_prediction(std::span<const double> user_id, std::span<const double> item_id,
                                           std::span<const double> user_intent, std::span<const double> aspect,
                                           double delta) {
    if (aspect.size() != user_intent.size())
        throw Error(ErrorCode::invalid_argument, "aspect vector length differs from the intent representation");
    std::vector<double> e(user_intent.size());
    for (std::size_t t = 0; t < e.size(); ++t) e[t] = user_intent[t] * aspect[t];
    return {predict(user_id, item_id, e, delta), predict(user_id, item_id, user_intent, delta)};
}

double backdoor_effect(std::span<const double> user_id, std::span<const double> item_id,
                       std::span<const double> user_intent, const Matrix& aspects, double delta) {
    if (aspects.rows() == 0) throw Error(ErrorCode::empty_input, "context bank has no aspect vectors");
    const double prior = InterventionConfig::prior(aspects.rows());
    double effect = 0.0;
    for (std::size_t a = 0; a < aspects.rows(); ++a) {
        const auto pair = adjusted_prediction(user_id, item_id, user_intent, aspects.row(a), delta);
        effect += prior * (pair.adjusted - pair.base);
    }
    return effect;
}

bool indicator(const AdjustedPredictionPair& pair) { return std::tanh(pair.adjusted - pair.base) > 0.0; }

void indicator_mask(bool included, std::span<const double> aspect, std::span<double> out) {
    if (included) std::copy(aspect.begin(), aspect.end(), out.begin());
    else std::fill(out.begin(), out.end(), 1.0);
}

void refine(std::span<const double> user_intent, const Matrix& aspects, const std::vector<bool>& included,
            std::span<double> out) {
    std::copy(user_intent.begin(), user_intent.end(), out.begin());
    for (std::size_t a = 0; a < aspects.rows(); ++a) {
        if (!included[a]) continue;
        const auto c = aspects.row(a);
        for (std::size_t t = 0; t < out.size(); ++t) out[t] *= c[t];
    }
    for (std::size_t t = 0; t < out.size(); ++t)
        if (!std::isfinite(out[t])) {
            std::string set;
            for (std::size_t a = 0; a < aspects.rows(); ++a)
                if (included[a]) set += (set.empty() ? "" : ",") + std::to_string(a);
            throw Error(ErrorCode::non_finite, "refined representation is non-finite for aspects {" + set + "}");
        }
}

std::vector<bool> inclusion(std::span<const double> user_id, std::span<const double> item_id,
                            std::span<const double> user_intent, const Matrix& aspects, double delta) {
    std::vector<bool> out(aspects.rows());
    for (std::size_t a = 0; a < aspects.rows(); ++a)
        out[a] = indicator(adjusted_prediction(user_id, item_id, user_intent, aspects.row(a), delta));
    return out;
}

double intervened_score(const ModelState& s, const ModelParams& p, const Matrix& aspects, std::uint32_t u,
                        std::uint32_t i, double delta) {
    const auto uu = s.intents.users.row(u);
    const auto inc = inclusion(p.user_id.row(u), p.item_id.row(i), uu, aspects, delta);
    std::vector<double> e(uu.size());
    refine(uu, aspects, inc, e);
    return predict(p.user_id.row(u), p.item_id.row(i), e, delta);
}

std::string intervention_trace_csv(std::span<const InterventionTraceRow> rows) {
    std::string out = "iteration,aspect,included_fraction,mean_effect,L_d\n";
    for (const auto& r : rows)
        out += std::to_string(r.iteration) + "," + std::to_string(r.aspect) + "," + format_double(r.included_fraction) +
               "," + format_double(r.mean_effect) + "," + format_double(r.debias_loss) + "\n";
    return out;
}

DebiasTerm::DebiasTerm(double delta, const Matrix* frozen_aspects) : delta_(delta), frozen_(frozen_aspects) {}

double DebiasTerm::pair_loss(const ModelState& s, const ModelParams& p, const Matrix& aspects, std::uint32_t u,
                             std::uint32_t i, double label, double weight, StateGrad& sg, ModelParams& grad) {
    const auto uid = p.user_id.row(u);
    const auto iid = p.item_id.row(i);
    const auto uu = s.intents.users.row(u);
    const std::size_t d = uu.size(), n = aspects.rows();

    std::vector<bool> inc(n);
    for (std::size_t a = 0; a < n; ++a) {
        const auto pair = adjusted_prediction(uid, iid, uu, aspects.row(a), delta_);
        inc[a] = indicator(pair);
        included_[a] += inc[a];
        effect_sum_[a] += pair.adjusted - pair.base;
    }
    ++pairs_;

    std::vector<double> e(d);
    refine(uu, aspects, inc, e);
    const double f = predict(uid, iid, e, delta_);
    const double loss = label > 0.5 ? -log_sigmoid(f) : -log_sigmoid(-f);

    const double g = weight * (sigmoid(f) - label);
    if (g != 0.0) {
        axpy(g * delta_, iid, grad.user_id.row(u));
        auto gi = grad.item_id.row(i);
        for (std::size_t t = 0; t < d; ++t) gi[t] += g * (delta_ * uid[t] + (1.0 - delta_) * e[t]);
        // dE = g (1 - delta) i; E = u^u (.) P with P the product of included aspects.
        auto gu = sg.user_intent.row(u);
        for (std::size_t t = 0; t < d; ++t) {
            double prod = 1.0;
            for (std::size_t a = 0; a < n; ++a)
                if (inc[a]) prod *= aspects(a, t);
            gu[t] += g * (1.0 - delta_) * iid[t] * prod;
        }
        if (!frozen_) {
            for (std::size_t a = 0; a < n; ++a) {
                if (!inc[a]) continue;
                auto ga = sg.aspect_context.row(a);
                for (std::size_t t = 0; t < d; ++t) {
                    double others = uu[t];
                    for (std::size_t b = 0; b < n; ++b)
                        if (b != a && inc[b]) others *= aspects(b, t);
                    ga[t] += g * (1.0 - delta_) * iid[t] * others;
                }
            }
        }
    }
    loss_sum_ += loss;
    return loss;
}

double DebiasTerm::accumulate(const ModelState& s, const ModelParams& p, std::span<const TrainingTriple> batch,
                              double weight, StateGrad& sg, ModelParams& grad) {
    const Matrix& aspects = frozen_ ? *frozen_ : s.aspect_context;
    if (aspects.rows() == 0) throw Error(ErrorCode::empty_input, "context bank has no aspect vectors");
    if (included_.size() != aspects.rows()) {
        included_.assign(aspects.rows(), 0);
        effect_sum_.assign(aspects.rows(), 0.0);
    }
    double total = 0.0;
    for (const auto& t : batch) {
        total += pair_loss(s, p, aspects, t.user, t.pos, 1.0, weight, sg, grad);
        total += pair_loss(s, p, aspects, t.user, t.neg, 0.0, weight, sg, grad);
    }
    return total;
}

void DebiasTerm::end_epoch(std::size_t epoch) {
    for (std::size_t a = 0; a < included_.size(); ++a) {
        const double n = pairs_ ? static_cast<double>(pairs_) : 1.0;
        trace_.push_back({epoch + 1, a, included_[a] / n, effect_sum_[a] / n, loss_sum_});
    }
    std::fill(included_.begin(), included_.end(), 0);
    std::fill(effect_sum_.begin(), effect_sum_.end(), 0.0);
    pairs_ = 0;
    loss_sum_ = 0.0;
}

InterventionResult run_intervention(const TrainingData& data, ModelParams params, const ModelConfig& mcfg,
                                    const ObjectiveConfig& ocfg, TrainConfig tcfg, const InterventionConfig& icfg,
                                    const Validator& validate) {
    icfg.validate();
    if (data.layout->aspect_types.empty())
        throw Error(ErrorCode::empty_input, "intervention needs at least one aspect type");
    const PathIndex index = index_paths(params.paths, data.layout->node_count);
    const ModelState start = model_forward(*data.layout, index, *data.train, params, mcfg);
    const Matrix frozen = start.aspect_context;

    DebiasTerm term(mcfg.delta, icfg.unfreeze_aspects ? nullptr : &frozen);
    tcfg.max_epochs = icfg.iterations;
    // Every iteration runs; the best validation snapshot is still restored.
    tcfg.patience = std::numeric_limits<std::size_t>::max();
    const auto trainable = trainable_groups(params, *data.layout, icfg.unfreeze_aspects);
    InterventionResult out;
    out.train = train_model(data, std::move(params), mcfg, ocfg, tcfg, trainable, validate, &term);
    out.trace = term.trace();
    if (icfg.unfreeze_aspects) {
        out.aspects = model_forward(*data.layout, index, *data.train, out.train.params, mcfg).aspect_context;
    } else {
        out.aspects = frozen;
    }
    return out;
}

}  // namespace cadsi
