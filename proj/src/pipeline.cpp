#include "dermdx/pipeline.hpp"

#include "dermdx/backends.hpp"
#include "dermdx/error.hpp"
#include "dermdx/parallel.hpp"
#include "dermdx/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

namespace dermdx {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    return p.is_absolute() || base.empty() ? p : base / p;
}

GatewayConfig gateway_from_json(const json& j) {
    reject_unknown(j, {"endpoint_url", "model_name", "temperature", "max_retries", "backoff_ms",
                       "rate_limit_per_minute", "image_detail", "timeout_s"},
                   "gateway");
    GatewayConfig g;
    read(j, "endpoint_url", g.endpoint_url, "gateway");
    read(j, "model_name", g.model_name, "gateway");
    read(j, "temperature", g.temperature, "gateway");
    read(j, "max_retries", g.max_retries, "gateway");
    read(j, "rate_limit_per_minute", g.rate_limit_per_minute, "gateway");
    read(j, "image_detail", g.image_detail, "gateway");
    long long ms = g.backoff_base.count();
    read(j, "backoff_ms", ms, "gateway");
    g.backoff_base = std::chrono::milliseconds(ms);
    long long secs = g.timeout.count();
    read(j, "timeout_s", secs, "gateway");
    g.timeout = std::chrono::seconds(secs);
    return g;
}

MacConfig mac_from_json(const json& j) {
    reject_unknown(j, {"min_candidates", "max_candidates", "max_revision_rounds", "termination_token",
                       "specialist_names", "role_prompts"},
                   "mac");
    MacConfig m;
    read(j, "min_candidates", m.min_candidates, "mac");
    read(j, "max_candidates", m.max_candidates, "mac");
    read(j, "max_revision_rounds", m.max_revision_rounds, "mac");
    read(j, "termination_token", m.termination_token, "mac");
    read(j, "specialist_names", m.specialist_names, "mac");
    read(j, "role_prompts", m.role_prompts, "mac");
    return m;
}

ApoConfig apo_from_json(const json& j) {
    reject_unknown(j, {"max_iterations", "min_gain", "worst_examples", "max_rules"}, "apo");
    ApoConfig a;
    read(j, "max_iterations", a.max_iterations, "apo");
    read(j, "min_gain", a.min_gain, "apo");
    read(j, "worst_examples", a.worst_examples, "apo");
    read(j, "max_rules", a.max_rules, "apo");
    return a;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

bool is_infrastructure(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const TransportError&) {
        return true;
    } catch (const SinkError&) {
        return true;
    } catch (const IoError&) {
        return true;
    } catch (const ReplayMiss&) {
        return true;
    } catch (const MacRunError& m) {
        return m.cause && is_infrastructure(m.cause);
    } catch (const Error&) {
        return false;
    } catch (...) {
        return true;
    }
}

struct CaseOutput {
    std::optional<CandidateSet> candidates;
    std::optional<RankOutcome> ranking;
    std::optional<std::string> aligned;
    CaseStatus status;
};

} // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    reject_unknown(j, {"dataset", "prompts_dir", "rules", "out_dir", "gateway", "mac", "apo", "retrieval_strategy",
                       "rerank_strategy", "max_candidates", "seed", "max_concurrency", "judge_mode", "run_id"},
                   "config");
    PipelineConfig c;
    std::string s;
    if (j.contains("dataset")) {
        read(j, "dataset", s, "config");
        c.dataset_path = resolve(s, base_dir);
    }
    if (j.contains("prompts_dir") && !j["prompts_dir"].is_null()) {
        read(j, "prompts_dir", s, "config");
        c.prompts_dir = resolve(s, base_dir);
    }
    if (j.contains("rules") && !j["rules"].is_null()) {
        read(j, "rules", s, "config");
        c.rules_path = resolve(s, base_dir);
    }
    if (j.contains("out_dir")) {
        read(j, "out_dir", s, "config");
        c.out_dir = resolve(s, base_dir);
    }
    if (j.contains("gateway")) c.gateway = gateway_from_json(j["gateway"]);
    if (j.contains("mac")) c.mac = mac_from_json(j["mac"]);
    if (j.contains("apo")) c.apo = apo_from_json(j["apo"]);
    if (j.contains("retrieval_strategy")) {
        read(j, "retrieval_strategy", s, "config");
        c.retrieval_strategy = retrieval_strategy_from_string(s);
    }
    if (j.contains("rerank_strategy")) {
        read(j, "rerank_strategy", s, "config");
        c.rerank_strategy = rerank_strategy_from_string(s);
    }
    if (j.contains("judge_mode")) {
        read(j, "judge_mode", s, "config");
        c.judge_mode = judge_mode_from_string(s);
    }
    read(j, "max_candidates", c.max_candidates, "config");
    read(j, "seed", c.seed, "config");
    read(j, "max_concurrency", c.max_concurrency, "config");
    read(j, "run_id", c.run_id, "config");
    c.gateway.seed = c.seed;
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::string content;
    try {
        content = read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    auto j = json::parse(content, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
    return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
    const auto& g = gateway;
    auto abs = [](const fs::path& p) { return fs::absolute(p).lexically_normal().generic_string(); };
    return json{{"dataset", abs(dataset_path)},
                {"prompts_dir", prompts_dir ? json(abs(*prompts_dir)) : json()},
                {"rules", rules_path ? json(abs(*rules_path)) : json()},
                {"retrieval_strategy", std::string(to_string(retrieval_strategy))},
                {"rerank_strategy", std::string(to_string(rerank_strategy))},
                {"max_candidates", max_candidates},
                {"seed", seed},
                {"max_concurrency", max_concurrency},
                {"judge_mode", judge_mode == JudgeMode::exact ? "exact" : "llm"},
                {"gateway",
                 {{"endpoint_url", g.endpoint_url},
                  {"model_name", g.model_name},
                  {"temperature", g.temperature},
                  {"max_retries", g.max_retries},
                  {"backoff_ms", g.backoff_base.count()},
                  {"rate_limit_per_minute", g.rate_limit_per_minute},
                  {"image_detail", g.image_detail},
                  {"timeout_s", g.timeout.count()}}},
                {"mac",
                 {{"min_candidates", mac.min_candidates},
                  {"max_candidates", mac.max_candidates},
                  {"max_revision_rounds", mac.max_revision_rounds},
                  {"termination_token", mac.termination_token},
                  {"specialist_names", mac.specialist_names},
                  {"role_prompts", mac.role_prompts}}}};
}

void PipelineConfig::validate() const {
    if (dataset_path.empty()) throw ConfigError("no dataset configured");
    if (!fs::is_regular_file(dataset_path)) throw ConfigError("dataset " + dataset_path.string() + " not found");
    if (prompts_dir && !fs::is_directory(*prompts_dir))
        throw ConfigError("prompts dir " + prompts_dir->string() + " not found");
    if (rules_path && !fs::is_regular_file(*rules_path))
        throw ConfigError("rules file " + rules_path->string() + " not found");
    if (max_concurrency < 1) throw ConfigError("max_concurrency must be at least 1");
    if (max_candidates < 1) throw ConfigError("max_candidates must be at least 1");
    gateway.validate();
    mac.validate();
}

std::string make_run_id() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    std::random_device rd;
    char suffix[8];
    std::snprintf(suffix, sizeof suffix, "%06x", rd() & 0xffffffu);
    return std::string(buf) + "-" + suffix;
}

RunResult run_pipeline(const PipelineConfig& config, Backend& backend) {
    config.validate();
    Dataset dataset;
    try {
        dataset = load_dataset(config.dataset_path);
    } catch (const DatasetError&) {
        throw;
    } catch (const Error& e) {
        throw DatasetError(e.what());
    }
    auto prompts = config.prompts_dir ? PromptLibrary::with_overrides(*config.prompts_dir) : PromptLibrary::bundled();
    auto rules = config.rules_path ? RuleSet::load(*config.rules_path) : RuleSet::bundled();

    RunResult result;
    result.run_id = config.run_id.empty() ? make_run_id() : config.run_id;
    result.run_dir = config.out_dir / result.run_id;
    std::error_code ec;
    fs::create_directories(result.run_dir, ec);
    if (ec) throw IoError("cannot create run directory " + result.run_dir.string() + ": " + ec.message());
    for (const char* sub : {"candidates", "rankings", "mac", "aligned"}) fs::create_directories(result.run_dir / sub, ec);

    json header{{"run_id", result.run_id}, {"created", utc_timestamp()}, {"config", config.to_json()}};
    FileManifestSink sink(result.run_dir / "manifest.jsonl", header);
    RecordingBackend recorder(backend, sink, result.run_id);

    RetrievalConfig rc;
    rc.max_candidates = config.max_candidates;
    rc.gateway = config.gateway;
    RerankConfig rr{config.gateway, config.seed};
    MacConfig mc = config.mac;
    mc.gateway = config.gateway;

    const auto& cases = dataset.cases();
    std::vector<CaseOutput> outputs(cases.size());
    parallel_for(cases.size(), config.max_concurrency, [&](std::size_t i) {
        const auto& c = cases[i];
        auto& out = outputs[i];
        try {
            out.candidates = retrieve(c, config.retrieval_strategy, recorder, rc, prompts);
            write_json(result.run_dir / "candidates" / (c.case_id + ".json"), out.candidates->to_json());

            if (config.rerank_strategy == RerankStrategy::Mac) {
                auto names = out.candidates->candidates();
                if (names.size() > mc.max_candidates) names.erase(names.begin() + static_cast<std::ptrdiff_t>(mc.max_candidates), names.end());
                CandidateSet debate(names, out.candidates->strategy(), c.case_id, mc.max_candidates);
                auto obs = obtain_observation(c, recorder, config.gateway, prompts);
                MacEngine engine(recorder, mc, prompts);
                try {
                    auto transcript = engine.run(c, debate, obs.text, obs.source);
                    write_json(result.run_dir / "mac" / (c.case_id + ".json"), transcript.to_json());
                    out.ranking = mac_rank_outcome(transcript, debate);
                } catch (const MacRunError& e) {
                    auto j = e.transcript->to_json();
                    j["error"] = e.what();
                    write_json(result.run_dir / "mac" / (c.case_id + ".json"), j);
                    throw;
                }
            } else {
                switch (config.rerank_strategy) {
                case RerankStrategy::NaiveCot:
                    out.ranking = rank_naive(c, *out.candidates, recorder, rr, prompts);
                    break;
                case RerankStrategy::ExpertWithContext:
                    out.ranking = rank_expert_with_context(c, *out.candidates, recorder, rr, prompts);
                    break;
                default:
                    out.ranking = rank_expert_image_only(c, *out.candidates, recorder, rr, prompts);
                    break;
                }
            }
            write_json(result.run_dir / "rankings" / (c.case_id + ".json"), out.ranking->to_json());

            Conversation draft_prompt;
            draft_prompt.messages.push_back(ChatMessage::user(
                prompts.render("draft", {{"diagnosis", out.ranking->top1().normalized()}, {"query", c.query}}),
                c.images));
            auto draft = text::trim(complete(draft_prompt, config.gateway, recorder, CallContext{c.case_id, Stage::align}));
            if (draft.empty()) throw PreconditionError("empty draft response");
            auto aligned = apply_rules(draft, rules, recorder, config.gateway, c.case_id, prompts);
            out.aligned = aligned.text;
            write_json(result.run_dir / "aligned" / (c.case_id + ".json"),
                       json{{"case_id", c.case_id},
                            {"draft", draft},
                            {"aligned", aligned.text},
                            {"fell_back", aligned.fell_back},
                            {"rules_version", rules.version}});
        } catch (...) {
            auto e = std::current_exception();
            out.status.ok = false;
            out.status.infrastructure = is_infrastructure(e);
            try {
                std::rethrow_exception(e);
            } catch (const std::exception& ex) {
                out.status.reason = ex.what();
            } catch (...) {
                out.status.reason = "unknown failure";
            }
            spdlog::warn("case '{}' failed: {}", c.case_id, out.status.reason);
        }
    });

    RunArtifacts artifacts;
    artifacts.retrieval_strategy = std::string(to_string(config.retrieval_strategy));
    artifacts.rerank_strategy = std::string(to_string(config.rerank_strategy));
    json statuses = json::object();
    bool infra = false;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& id = cases[i].case_id;
        auto& o = outputs[i];
        if (o.candidates) artifacts.candidates.emplace(id, *o.candidates);
        if (o.ranking) artifacts.rankings.emplace(id, *o.ranking);
        if (o.aligned) artifacts.aligned.emplace(id, *o.aligned);
        result.status[id] = o.status;
        infra = infra || o.status.infrastructure;
        statuses[id] = o.status.ok ? json("ok") : json{{"failed", o.status.reason}};
    }
    if (recorder.sink_errors() > 0) {
        infra = true;
        spdlog::error("{} calls could not be recorded: {}", recorder.sink_errors(),
                      recorder.last_sink_error().value_or(""));
    }

    json report{{"cases", cases.size()},
                {"ok", std::count_if(outputs.begin(), outputs.end(), [](const auto& o) { return o.status.ok; })},
                {"status", statuses}};
    std::string table;
    try {
        SimilarityJudge judge(config.judge_mode == JudgeMode::llm ? &recorder : nullptr, config.gateway,
                              config.judge_mode, prompts);
        result.report = evaluate(dataset, artifacts, judge);
        report["evaluation"] = result.report->to_json();
        table = result.report->to_table();
    } catch (const Error& e) {
        result.report_error = e.what();
        report["evaluation"] = json{{"error", e.what()}};
        table = std::string("evaluation failed: ") + e.what() + "\n";
    }
    std::size_t ok = report["ok"].get<std::size_t>();
    table += "\nCases: " + std::to_string(ok) + " ok, " + std::to_string(cases.size() - ok) + " failed\n";
    write_json(result.run_dir / "report.json", report);
    write_text(result.run_dir / "report.txt", table);

    result.exit_code = infra ? 1 : 0;
    result.llm_calls = recorder.call_count();
    sink.write_status({{"status", statuses},
                       {"llm_calls", result.llm_calls},
                       {"sink_errors", recorder.sink_errors()},
                       {"exit_code", result.exit_code}});
    return result;
}

RunArtifacts load_run_artifacts(const fs::path& run_dir) {
    for (const char* sub : {"candidates", "rankings"}) {
        if (!fs::is_directory(run_dir / sub))
            throw MissingArtifacts("run directory " + run_dir.string() + " has no " + sub + "/");
    }
    RunArtifacts a;
    auto each = [&](const char* sub, auto&& fn) {
        if (!fs::is_directory(run_dir / sub)) return;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(run_dir / sub)) {
            if (e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto j = json::parse(read_text(f), nullptr, false);
            if (j.is_discarded()) throw MissingArtifacts("unreadable artifact " + f.string());
            try {
                fn(j);
            } catch (const json::exception& e) {
                throw MissingArtifacts("malformed artifact " + f.string() + ": " + e.what());
            }
        }
    };
    each("candidates", [&](const json& j) {
        auto cs = CandidateSet::from_json(j);
        a.retrieval_strategy = std::string(to_string(cs.strategy()));
        a.candidates.emplace(cs.source_case(), std::move(cs));
    });
    each("rankings", [&](const json& j) {
        auto r = RankOutcome::from_json(j);
        a.rerank_strategy = std::string(to_string(r.strategy));
        a.rankings.emplace(r.case_id, std::move(r));
    });
    each("aligned", [&](const json& j) {
        a.aligned.emplace(j.at("case_id").get<std::string>(), j.at("aligned").get<std::string>());
    });
    return a;
}

std::vector<fs::path> comparable_files(const fs::path& run_dir) {
    std::vector<fs::path> out;
    for (const char* sub : {"candidates", "rankings", "mac", "aligned"}) {
        if (!fs::is_directory(run_dir / sub)) continue;
        for (const auto& e : fs::directory_iterator(run_dir / sub)) out.push_back(fs::relative(e.path(), run_dir));
    }
    for (const char* f : {"report.json", "report.txt"}) {
        if (fs::exists(run_dir / f)) out.emplace_back(f);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace dermdx
