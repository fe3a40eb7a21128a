#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cadsi/eval.hpp"
#include "cadsi/hetsg.hpp"
#include "cadsi/intervention.hpp"
#include "cadsi/model.hpp"
#include "cadsi/synth.hpp"
#include "cadsi/walks.hpp"

namespace cadsi {

enum class KeyKind { integer, real, boolean, text, int_list, aspect_list };

struct KeySpec {
    std::string key;
    KeyKind kind;
    std::string default_value;
    std::string help;
};

/// Every accepted configuration key with its default.
std::span<const KeySpec> config_schema();

/// Flat key=value settings over the schema. Unknown keys and unparsable
/// values throw Error(config).
class RunConfig {
public:
    RunConfig();

    /// Reads a key=value file; blank lines and '#' comments are skipped.
    static RunConfig from_file(const std::filesystem::path& path);
    /// Parses the same syntax from text, on top of the current values.
    void merge_text(std::string_view text, const std::string& origin);
    void set(const std::string& key, const std::string& value);
    /// "key=value"
    void set_assignment(const std::string& assignment);

    const std::string& get(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    double real(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<std::size_t> int_list(const std::string& key) const;

    /// Sorted key=value lines.
    std::string serialize() const;

    std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }
    unsigned threads() const;

    SynthConfig synth() const;
    WalkConfig walks() const;
    SkipGramConfig skipgram() const;
    ModelConfig model() const;
    ObjectiveConfig objective() const;
    TrainConfig train() const;
    SplitConfig split() const;
    InterventionConfig intervention() const;

    /// Runs every section's validation.
    void validate() const;

private:
    std::map<std::string, std::string> values_;
};

std::vector<AspectSpec> parse_aspect_list(const std::string& text);

}  // namespace cadsi
