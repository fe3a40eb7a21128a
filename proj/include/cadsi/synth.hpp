#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/hin.hpp"

namespace cadsi {

struct AspectSpec {
    std::string name;  // node type name
    std::size_t cardinality;
    double missing_rate;
};

struct SynthConfig {
    std::size_t n_users = 300;
    std::size_t n_items = 500;
    std::vector<AspectSpec> aspects{{"A", 40, 0.1}, {"D", 20, 0.2}, {"G", 10, 0.05}};
    double skew_exponent = 1.0;
    std::size_t true_intents = 4;
    std::size_t interactions_per_user = 30;
    /// Probability that an interaction is drawn from head-attribute items instead of the user's intent.
    double confound_strength = 0.4;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Driver { intent, confounder };

struct GeneratedInteraction {
    std::uint32_t user;
    std::uint32_t item;
    Driver driver;
};

struct GroundTruth {
    std::vector<std::uint32_t> user_intent;
    /// [item][aspect]: true attribute index, observed or not.
    std::vector<std::vector<std::uint32_t>> latent_attributes;
    /// [item][aspect]: attribute index present in the graph, or nothing when missing.
    std::vector<std::vector<std::optional<std::uint32_t>>> observed_attributes;
    /// Preferred attribute indices of the first aspect, per intent.
    std::vector<std::vector<std::uint32_t>> intent_attributes;
    /// Attribute indices of the first aspect whose items the confounder draws from.
    std::vector<std::uint32_t> head_attributes;
    std::vector<GeneratedInteraction> interactions;

    /// The item's true first-aspect attribute is one the user's intent prefers.
    bool intent_consistent(std::uint32_t user, std::uint32_t item) const;
};

struct SynthData {
    Hin hin;
    std::vector<std::vector<std::string>> metapaths;
    GroundTruth truth;
    std::vector<std::string> user_ids;  // local index -> node id
    std::vector<std::string> item_ids;
};

SynthData generate(const SynthConfig& cfg);

/// Default schema for a config: U, I and one node type per aspect.
Schema synth_schema(const SynthConfig& cfg);

std::string ground_truth_tsv(const SynthData& data, const SynthConfig& cfg);

struct AspectSkew {
    std::string aspect;
    std::size_t items = 0;
    std::size_t missing = 0;
    std::size_t attributes = 0;
    std::size_t connections = 0;
    /// Most popular half of the attributes (rounded up) and their share of connections.
    std::size_t head_attributes = 0;
    double head_mass = 0.0;
    /// Connection counts per attribute, most popular first.
    std::vector<std::size_t> histogram;

    double missing_fraction() const { return items ? static_cast<double>(missing) / items : 0.0; }
};

std::vector<AspectSkew> skew_report(const Hin& hin, TypeId item_type, std::span<const TypeId> aspects);
std::string skew_report_csv(std::span<const AspectSkew> rows);

/// Writes nodes.tsv, edges.tsv, schema.txt, metapaths.txt, interactions.tsv,
/// ground_truth.tsv and skew_report.csv.
void write_synth(const SynthData& data, const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace cadsi
