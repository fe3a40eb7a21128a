#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cadsi/common.hpp"
#include "cadsi/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::vector<std::string> assignments;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;

    cadsi::ConfigSource source() const {
        cadsi::ConfigSource src;
        if (!config.empty()) src.file = config;
        src.assignments = assignments;
        if (seed) src.assignments.push_back("seed=" + std::to_string(*seed));
        if (threads) src.assignments.push_back("threads=" + std::to_string(*threads));
        return src;
    }
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "key=value config file");
    cmd->add_option("--set", flags.assignments, "override one key, e.g. --set model.k=8")->take_all();
    cmd->add_option("--seed", flags.seed, "master seed");
    cmd->add_option("--threads", flags.threads, "worker threads (default: CADSI_THREADS or hardware)");
}

std::string quoted(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

/// `--ablate axis=k values=1,2,4`
void parse_ablate(const std::vector<std::string>& tokens, std::string& axis, std::vector<std::string>& values) {
    for (const auto& t : tokens) {
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw cadsi::Error(cadsi::ErrorCode::invalid_argument, "expected axis=<name> or values=<list>, got '" + t + "'");
        const std::string key = t.substr(0, eq), value = t.substr(eq + 1);
        if (key == "axis") {
            axis = value;
        } else if (key == "values") {
            values.clear();
            for (auto v : cadsi::split(value, ',')) values.emplace_back(cadsi::trim(v));
        } else {
            throw cadsi::Error(cadsi::ErrorCode::invalid_argument, "unknown --ablate field '" + key + "'");
        }
    }
    if (axis.empty()) throw cadsi::Error(cadsi::ErrorCode::invalid_argument, "--ablate needs axis=<k|L|iterations_n|K>");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal disentangled recommendation over heterogeneous information networks"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string data = "data", pretrained = "runs/pretrain", model = "runs/model", out;
    bool joint = false;
    std::vector<std::size_t> ks;
    std::string user;
    std::size_t top = 10;
    std::vector<std::string> ablate;

    auto* synth = app.add_subcommand("synth", "generate a confounded synthetic dataset");
    auto* pre = app.add_subcommand("pretrain", "meta-path walks and skip-gram embeddings");
    auto* train = app.add_subcommand("train", "intent disentanglement and BPR training");
    auto* intervene = app.add_subcommand("intervene", "backdoor-adjusted fine-tuning");
    auto* eval = app.add_subcommand("eval", "full-ranking recall and NDCG");
    auto* rec = app.add_subcommand("recommend", "top items for one user");
    auto* abl = app.add_subcommand("ablate", "sweep one hyperparameter");

    for (auto* cmd : {synth, pre, train, intervene, eval, rec, abl}) {
        add_common(cmd, flags);
        if (cmd != synth) cmd->add_option("--data", data, "dataset directory")->capture_default_str();
    }
    synth->add_option("--out", out, "output directory (default: data)");
    pre->add_option("--out", out, "output directory (default: runs/pretrain)");
    for (auto* cmd : {train, abl})
        cmd->add_option("--pretrained", pretrained, "pretraining output")->capture_default_str();
    train->add_option("--out", out, "output directory (default: runs/model)");
    train->add_flag("--joint", joint, "also run the intervention stage");
    for (auto* cmd : {intervene, eval, rec}) cmd->add_option("--model", model, "trained checkpoint")->capture_default_str();
    intervene->add_option("--out", out, "output directory (default: runs/intervened)");
    eval->add_option("--out", out, "output directory (default: runs/eval)");
    eval->add_option("--k", ks, "cutoffs (repeatable; default eval.ks)")->take_all();
    rec->add_option("--user", user, "user id")->required();
    rec->add_option("--top", top, "list length")->capture_default_str();
    abl->add_option("--out", out, "output directory (default: runs/ablate)");
    abl->add_option("--ablate", ablate, "axis=<k|L|iterations_n|K> [values=v1,v2,...]")->expected(1, 2)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto out_or = [&](const char* fallback) { return out.empty() ? std::string(fallback) : out; };
    try {
        const cadsi::ConfigSource src = flags.source();
        if (*synth) {
            cadsi::cmd_synth(src, out_or("data"), std::cerr);
        } else if (*pre) {
            cadsi::cmd_pretrain(src, data, out_or("runs/pretrain"), std::cerr);
        } else if (*train) {
            cadsi::cmd_train(src, data, pretrained, out_or("runs/model"), joint, std::cerr);
        } else if (*intervene) {
            cadsi::cmd_intervene(src, data, model, out_or("runs/intervened"), std::cerr);
        } else if (*eval) {
            const auto report = cadsi::cmd_eval(src, data, model, out_or("runs/eval"), ks, std::cerr);
            std::cout << report.to_csv();
        } else if (*rec) {
            for (const auto& r : cadsi::cmd_recommend(src, data, model, user, top))
                std::cout << r.item << '\t' << cadsi::format_double(r.score) << '\n';
        } else if (*abl) {
            std::string axis;
            std::vector<std::string> values;
            parse_ablate(ablate, axis, values);
            std::cout << cadsi::ablation_csv(cadsi::cmd_ablate(src, data, pretrained, out_or("runs/ablate"), axis,
                                                               values, std::cerr));
        }
    } catch (const cadsi::Error& e) {
        std::cerr << "error: code=" << cadsi::to_string(e.code()) << " message=\"" << quoted(e.what()) << "\"\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: code=internal message=\"" << quoted(e.what()) << "\"\n";
        return 3;
    }
    return 0;
}
