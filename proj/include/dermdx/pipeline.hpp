#pragma once

#include "dermdx/aligner.hpp"
#include "dermdx/case_model.hpp"
#include "dermdx/evaluation.hpp"
#include "dermdx/gateway.hpp"
#include "dermdx/mac.hpp"
#include "dermdx/reranker.hpp"
#include "dermdx/retrieval.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace dermdx {

struct PipelineConfig {
    std::filesystem::path dataset_path;
    std::optional<std::filesystem::path> prompts_dir;
    std::optional<std::filesystem::path> rules_path;
    std::filesystem::path out_dir = "runs";
    GatewayConfig gateway;
    MacConfig mac;
    ApoConfig apo;
    RetrievalStrategy retrieval_strategy = RetrievalStrategy::ExpertCot;
    RerankStrategy rerank_strategy = RerankStrategy::ExpertWithContext;
    std::size_t max_candidates = 10;
    std::uint64_t seed = 0;
    std::size_t max_concurrency = 4;
    JudgeMode judge_mode = JudgeMode::exact;
    std::string run_id; ///< generated when empty

    /// Relative paths resolve against `base_dir`. Unknown keys are rejected.
    /// Throws ConfigError.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
    /// Snapshot written into the manifest header; excludes the run id.
    nlohmann::json to_json() const;
    /// Throws ConfigError (bad values, unreadable paths).
    void validate() const;
};

/// "<UTC yyyymmddThhmmssZ>-<6 hex>".
std::string make_run_id();

struct CaseStatus {
    bool ok = true;
    std::string reason;
    bool infrastructure = false; ///< transport, sink or file failure
};

struct RunResult {
    std::string run_id;
    std::filesystem::path run_dir;
    int exit_code = 0;
    std::map<std::string, CaseStatus> status;
    std::size_t llm_calls = 0;
    std::optional<EvalReport> report;
    std::string report_error;
};

/// retrieve -> rerank (or MAC) -> draft -> align for every case, with at
/// most max_concurrency cases in flight. All calls are recorded to
/// <run_dir>/manifest.jsonl. Writes candidates/, rankings/, mac/, aligned/,
/// report.json and report.txt. exit_code is 1 when any case hit an
/// infrastructure failure, 0 otherwise.
RunResult run_pipeline(const PipelineConfig& config, Backend& backend);

/// Loads the artifacts of a run directory. Throws MissingArtifacts.
RunArtifacts load_run_artifacts(const std::filesystem::path& run_dir);

/// Files compared by replay verification, relative to a run directory.
std::vector<std::filesystem::path> comparable_files(const std::filesystem::path& run_dir);

} // namespace dermdx
