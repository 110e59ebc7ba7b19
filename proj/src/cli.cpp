#include "dermdx/cli.hpp"

#include "dermdx/aligner.hpp"
#include "dermdx/backends.hpp"
#include "dermdx/error.hpp"
#include "dermdx/evaluation.hpp"
#include "dermdx/http_backend.hpp"
#include "dermdx/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>

namespace dermdx {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string backend = "scripted";
    std::string out_dir;
    std::string script;
    std::string manifest;
    std::string log_level = "warn";
};

struct RunFlags {
    std::string dataset;
    std::string retrieval;
    std::string rerank;
    std::optional<std::size_t> concurrency;
    std::string rules;
    std::string prompts;
    std::string run_id;
    std::string judge;
};

PipelineConfig build_config(const Globals& g, const RunFlags& f) {
    PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(g.config_path);
    if (!f.dataset.empty()) c.dataset_path = f.dataset;
    if (!f.retrieval.empty()) c.retrieval_strategy = retrieval_strategy_from_string(f.retrieval);
    if (!f.rerank.empty()) c.rerank_strategy = rerank_strategy_from_string(f.rerank);
    if (f.concurrency) c.max_concurrency = *f.concurrency;
    if (!f.rules.empty()) c.rules_path = f.rules;
    if (!f.prompts.empty()) c.prompts_dir = f.prompts;
    if (!f.run_id.empty()) c.run_id = f.run_id;
    if (!f.judge.empty()) c.judge_mode = judge_mode_from_string(f.judge);
    if (!g.out_dir.empty()) c.out_dir = g.out_dir;
    if (g.seed) c.seed = *g.seed;
    c.gateway.seed = c.seed;
    return c;
}

std::unique_ptr<Backend> make_backend(const Globals& g, const GatewayConfig& gateway, bool strict_replay = false) {
    if (g.backend == "live") {
        const char* token = std::getenv("AUTH_TOKEN");
        if (!token || !*token) throw ConfigError("live backend needs the AUTH_TOKEN environment variable");
        return std::make_unique<HttpBackend>(gateway, token);
    }
    if (g.backend == "replay") {
        if (g.manifest.empty()) throw ConfigError("replay backend needs --manifest");
        if (!fs::is_regular_file(g.manifest)) throw ConfigError("manifest " + g.manifest + " not found");
        return ReplayBackend::from_manifest(g.manifest, strict_replay);
    }
    if (g.backend == "scripted") {
        if (g.script.empty()) throw ConfigError("scripted backend needs --script");
        return ScriptedBackend::from_file(g.script);
    }
    throw ConfigError("unknown backend '" + g.backend + "'");
}

void print_run(const RunResult& r, std::ostream& out) {
    std::size_t ok = std::count_if(r.status.begin(), r.status.end(), [](const auto& s) { return s.second.ok; });
    out << "run " << r.run_id << ": " << ok << "/" << r.status.size() << " cases ok, " << r.llm_calls
        << " LLM calls\n";
    for (const auto& [id, s] : r.status) {
        if (!s.ok) out << "  " << id << " failed: " << s.reason << "\n";
    }
    out << "outputs in " << r.run_dir.string() << "\n";
}

int cmd_run(const Globals& g, const RunFlags& f, std::ostream& out) {
    auto config = build_config(g, f);
    config.validate();
    auto backend = make_backend(g, config.gateway);
    auto result = run_pipeline(config, *backend);
    print_run(result, out);
    return result.exit_code;
}

int cmd_evaluate(const Globals& g, const std::string& run_dir, const std::string& dataset_flag,
                 const std::string& judge_flag, const std::string& json_out, std::ostream& out) {
    std::string dataset_path = dataset_flag;
    if (dataset_path.empty() && fs::exists(fs::path(run_dir) / "manifest.jsonl")) {
        std::ifstream in(fs::path(run_dir) / "manifest.jsonl");
        std::string first;
        std::getline(in, first);
        auto h = json::parse(first, nullptr, false);
        if (!h.is_discarded() && h.contains("config")) dataset_path = h["config"].value("dataset", "");
    }
    if (dataset_path.empty()) throw ConfigError("evaluate needs --dataset");
    auto dataset = load_dataset(dataset_path);
    auto artifacts = load_run_artifacts(run_dir);
    auto mode = judge_flag.empty() ? JudgeMode::exact : judge_mode_from_string(judge_flag);
    GatewayConfig gateway;
    std::unique_ptr<Backend> backend;
    if (mode == JudgeMode::llm) backend = make_backend(g, gateway);
    SimilarityJudge judge(backend.get(), gateway, mode);
    auto report = evaluate(dataset, artifacts, judge);
    out << report.to_table();
    if (!json_out.empty()) {
        std::ofstream f(json_out, std::ios::binary);
        if (!f) throw IoError("cannot write " + json_out);
        f << report.to_json().dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_apo(const Globals& g, const std::string& pairs_path, const std::string& rules_path, std::string output,
            std::optional<std::size_t> max_iterations, std::optional<double> min_gain, std::ostream& out) {
    PipelineConfig config = g.config_path.empty() ? PipelineConfig{} : PipelineConfig::load(g.config_path);
    ApoConfig apo = config.apo;
    apo.gateway = config.gateway;
    if (g.seed) apo.gateway.seed = *g.seed;
    if (max_iterations) apo.max_iterations = *max_iterations;
    if (min_gain) apo.min_gain = *min_gain;
    auto pairs = load_pairs(pairs_path);
    auto initial = rules_path.empty() ? RuleSet::bundled() : RuleSet::load(rules_path);
    auto backend = make_backend(g, apo.gateway);
    auto result = apo_optimize(pairs, initial, *backend, apo);

    RuleSet learned = result.rules;
    learned.version = std::max(learned.version, initial.version + 1);
    if (learned.rules != initial.rules) learned.provenance = RuleProvenance::learned;
    if (output.empty()) {
        fs::path dir = g.out_dir.empty() ? fs::path(".") : fs::path(g.out_dir);
        output = (dir / ("rules.v" + std::to_string(learned.version) + ".json")).string();
    }
    std::error_code ec;
    if (fs::path(output).has_parent_path()) fs::create_directories(fs::path(output).parent_path(), ec);
    learned.save(output);
    out << fmt::format("DeltaBLEU before={:.6f} after={:.6f}\n", result.initial_score, result.final_score);
    out << "rules v" << learned.version << " written to " << output << " (" << result.history.size()
        << " iterations, " << result.critic_failures << " unreadable critic replies)\n";
    return kExitOk;
}

int cmd_replay_verify(const Globals& g, const std::string& run_dir, std::ostream& out) {
    fs::path src(run_dir);
    auto manifest = src / "manifest.jsonl";
    if (!fs::is_regular_file(manifest)) throw MissingArtifacts("no manifest.jsonl in " + run_dir);
    std::ifstream in(manifest);
    std::string first;
    std::getline(in, first);
    auto header = json::parse(first, nullptr, false);
    if (header.is_discarded() || header.value("type", "") != "header" || !header.contains("config"))
        throw MissingArtifacts("manifest in " + run_dir + " has no header");
    auto config = PipelineConfig::from_json(header["config"], {});
    config.out_dir = g.out_dir.empty() ? src.parent_path() : fs::path(g.out_dir);
    config.run_id = header.value("run_id", std::string("run")) + "-replay-" + make_run_id();
    ReplayBackend backend(load_manifest(manifest), true);
    auto result = run_pipeline(config, backend);

    auto expected = comparable_files(src);
    auto actual = comparable_files(result.run_dir);
    std::vector<std::string> diffs;
    auto read_all = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    for (const auto& rel : expected) {
        if (!fs::exists(result.run_dir / rel)) diffs.push_back("missing " + rel.generic_string());
        else if (read_all(src / rel) != read_all(result.run_dir / rel)) diffs.push_back("differs " + rel.generic_string());
    }
    for (const auto& rel : actual) {
        if (std::find(expected.begin(), expected.end(), rel) == expected.end())
            diffs.push_back("extra " + rel.generic_string());
    }
    for (const auto& d : diffs) out << d << "\n";
    out << (diffs.empty() ? "replay identical: " : "replay differs: ") << expected.size() << " files compared, "
        << diffs.size() << " differences (replay in " << result.run_dir.string() << ")\n";
    return diffs.empty() && result.exit_code == 0 ? kExitOk : kExitFailure;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"dermdx: retrieval, re-ranking, multi-agent debate and alignment for dermatology cases"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON configuration file");
    app.add_option("--seed", g.seed, "Run seed for tie-breaking");
    app.add_option("--backend", g.backend, "LLM backend")->check(CLI::IsMember({"live", "replay", "scripted"}));
    app.add_option("--out", g.out_dir, "Output directory");
    app.add_option("--script", g.script, "Script file for the scripted backend");
    app.add_option("--manifest", g.manifest, "Manifest for the replay backend");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off");

    RunFlags rf;
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--dataset", rf.dataset, "JSONL dataset");
        sub->add_option("--retrieval", rf.retrieval, "image_only, naive_cot, expert_cot");
        sub->add_option("--rerank", rf.rerank, "naive, expert_context, expert_image, mac");
        sub->add_option("--concurrency", rf.concurrency, "Cases in flight");
        sub->add_option("--rules", rf.rules, "Rule set JSON");
        sub->add_option("--prompts", rf.prompts, "Directory of prompt overrides");
        sub->add_option("--run-id", rf.run_id, "Fixed run id");
        sub->add_option("--judge", rf.judge, "exact or llm");
    };
    auto* run = app.add_subcommand("run", "Run the pipeline over a dataset");
    add_run_flags(run);
    auto* record = app.add_subcommand("record", "Run the pipeline against a live or scripted backend and keep the manifest");
    add_run_flags(record);

    std::string run_dir, eval_dataset, judge, json_out;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score the artifacts of a run");
    evaluate_cmd->add_option("--run-dir", run_dir, "Run directory")->required();
    evaluate_cmd->add_option("--dataset", eval_dataset, "Dataset (defaults to the one in the manifest)");
    evaluate_cmd->add_option("--judge", judge, "exact or llm");
    evaluate_cmd->add_option("--json", json_out, "Also write the report as JSON");

    std::string pairs, rules, output;
    std::optional<std::size_t> max_iterations;
    std::optional<double> min_gain;
    auto* apo = app.add_subcommand("apo", "Optimize the aligner rule set on training pairs");
    apo->add_option("--pairs", pairs, "JSONL training pairs")->required();
    apo->add_option("--rules", rules, "Initial rule set (bundled when omitted)");
    apo->add_option("--output", output, "Where to write the learned rule set");
    apo->add_option("--max-iterations", max_iterations, "Hill-climb iterations");
    apo->add_option("--min-gain", min_gain, "Smallest accepted DeltaBLEU gain");

    std::string verify_dir;
    auto* verify = app.add_subcommand("replay-verify", "Replay a run's manifest and compare the outputs byte for byte");
    verify->add_option("--run-dir", verify_dir, "Recorded run directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    spdlog::set_level(spdlog::level::from_str(g.log_level));
    try {
        if (run->parsed()) return cmd_run(g, rf, out);
        if (record->parsed()) {
            if (g.backend == "replay") throw ConfigError("record needs a live or scripted backend");
            return cmd_run(g, rf, out);
        }
        if (evaluate_cmd->parsed()) return cmd_evaluate(g, run_dir, eval_dataset, judge, json_out, out);
        if (apo->parsed()) return cmd_apo(g, pairs, rules, output, max_iterations, min_gain, out);
        if (verify->parsed()) return cmd_replay_verify(g, verify_dir, out);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DatasetError& e) {
        err << "dataset error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace dermdx
