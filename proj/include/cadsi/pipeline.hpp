#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cadsi/checkpoint.hpp"
#include "cadsi/config.hpp"
#include "cadsi/eval.hpp"
#include "cadsi/hetsg.hpp"
#include "cadsi/hin.hpp"
#include "cadsi/intervention.hpp"
#include "cadsi/model.hpp"
#include "cadsi/walks.hpp"

namespace cadsi {

/// Where a stage's settings come from, applied in this order on top of the
/// upstream manifest's snapshot.
struct ConfigSource {
    std::optional<std::filesystem::path> file;
    std::vector<std::string> assignments;  // key=value
};

RunConfig resolve_config(const Manifest* upstream, const ConfigSource& source);

struct Dataset {
    Hin hin;
    TypeId user;
    TypeId item;
    std::vector<TypeId> aspects;
    std::vector<MetaPath> paths;  // including aspect-start rotations
    ModelLayout layout;
    InteractionMatrix matrix;
};

/// nodes.tsv, edges.tsv, schema.txt and metapaths.txt from `dir`.
Dataset load_dataset(const std::filesystem::path& dir, const RunConfig& cfg);
/// Same, from an in-memory graph.
Dataset make_dataset(Hin hin, std::span<const std::vector<std::string>> metapaths, const RunConfig& cfg);

struct SplitData {
    DataSplit split;
    InteractionGraph train_graph;
    std::vector<std::vector<std::uint32_t>> train;
    std::vector<std::vector<std::uint32_t>> validation;
    std::vector<std::vector<std::uint32_t>> test;
    std::vector<std::uint32_t> minority;  // local item indices
};

SplitData make_split(const Dataset& data, const RunConfig& cfg);

WalkCorpus build_corpus(const Dataset& data, const RunConfig& cfg);
MetaPathEmbeddings pretrain(const Dataset& data, const WalkCorpus& corpus, const RunConfig& cfg,
                            SkipGramTrace* trace = nullptr);

/// Stage 2: joint skip-gram and BPR training with validation-based early stopping.
TrainResult run_training(const Dataset& data, const SplitData& split, const WalkCorpus& corpus,
                         MetaPathEmbeddings pretrained, const RunConfig& cfg);
/// Stage 3: fine-tuning with the debias term.
InterventionResult run_debiasing(const Dataset& data, const SplitData& split, const WalkCorpus& corpus,
                                 ModelParams params, const RunConfig& cfg);

struct Reports {
    MetricReport overall;
    MetricReport minority;
};

/// Plain ranking when `aspects` is null, intervened ranking otherwise.
Reports evaluate_model(const Dataset& data, const SplitData& split, const ModelParams& params,
                       const Matrix* aspects, const RunConfig& cfg, std::vector<std::size_t> ks);

/// synth -> pretrain -> train -> intervene -> eval without touching disk.
struct PipelineRun {
    MetaPathEmbeddings pretrained;
    TrainResult trained;
    std::optional<InterventionResult> intervened;
    Reports reports;
};
PipelineRun run_pipeline(const Dataset& data, const RunConfig& cfg);

// Stage commands over directories. Each writes manifest.txt next to its outputs.
void cmd_synth(const ConfigSource& src, const std::filesystem::path& out, std::ostream& log);
void cmd_pretrain(const ConfigSource& src, const std::filesystem::path& data, const std::filesystem::path& out,
                  std::ostream& log);
void cmd_train(const ConfigSource& src, const std::filesystem::path& data, const std::filesystem::path& pretrained,
               const std::filesystem::path& out, bool joint, std::ostream& log);
void cmd_intervene(const ConfigSource& src, const std::filesystem::path& data, const std::filesystem::path& model,
                   const std::filesystem::path& out, std::ostream& log);
/// Writes metrics.csv and metrics_minority.csv; returns the overall report.
MetricReport cmd_eval(const ConfigSource& src, const std::filesystem::path& data, const std::filesystem::path& model,
                      const std::filesystem::path& out, std::vector<std::size_t> ks, std::ostream& log);

struct Recommendation {
    std::string item;
    double score;
};
std::vector<Recommendation> cmd_recommend(const ConfigSource& src, const std::filesystem::path& data,
                                          const std::filesystem::path& model, const std::string& user,
                                          std::size_t top);

/// Writes ablation_<axis>.csv and returns its rows.
std::vector<AblationRow> cmd_ablate(const ConfigSource& src, const std::filesystem::path& data,
                                    const std::filesystem::path& pretrained, const std::filesystem::path& out,
                                    const std::string& axis, std::vector<std::string> values, std::ostream& log);

}  // namespace cadsi
