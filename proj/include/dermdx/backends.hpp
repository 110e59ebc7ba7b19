#pragma once

#include "dermdx/gateway.hpp"

#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace dermdx {

/// Tracks the next turn index per (case_id, stage).
class TurnCounter {
public:
    std::size_t next(const CallContext& ctx);

private:
    std::map<std::pair<std::string, Stage>, std::size_t> turns_;
};

/// Responses served in order, for tests and offline fixtures.
///
/// Lookup order per call: the first keyed entry that matches and still has
/// responses, then the shared FIFO queue, then the responder. Nothing left
/// raises ReplayMiss. Never touches the network.
class ScriptedBackend final : public Backend {
public:
    using Responder = std::function<std::optional<std::string>(const CallRequest&)>;

    struct Entry {
        std::optional<std::string> case_id;
        std::optional<Stage> stage;
        std::optional<std::string> contains; ///< substring of the request text
        std::deque<std::string> responses;
        bool repeat_last = false;
    };

    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<std::string> queue);

    void push(std::string response);
    void push_error(std::exception_ptr error);
    void add_entry(Entry entry);
    void set_responder(Responder responder);

    /// Script file: {"entries": [{case_id?, stage?, contains?, responses,
    /// repeat?}], "queue": [..]}.
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);
    static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& j);

    /// Requests seen so far, in arrival order.
    std::vector<Conversation> requests() const;

private:
    std::string do_complete(const CallRequest& request) override;

    struct QueueItem {
        std::string response;
        std::exception_ptr error;
    };

    mutable std::mutex mutex_;
    std::vector<Entry> entries_;
    std::deque<QueueItem> queue_;
    Responder responder_;
    std::vector<Conversation> seen_;
};

/// Serves responses from recorded CallRecords.
///
/// A request matches the first unused record with the same case, stage and
/// request hash. Outside strict mode it then falls back to the record at the
/// same (case, stage, turn_index), so small template edits keep fixtures
/// usable.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(std::vector<CallRecord> records, bool strict = false);

    static std::unique_ptr<ReplayBackend> from_manifest(const std::filesystem::path& path,
                                                        bool strict = false);

    std::size_t hash_hits() const;
    std::size_t sequential_hits() const;

private:
    std::string do_complete(const CallRequest& request) override;

    mutable std::mutex mutex_;
    std::vector<CallRecord> records_;
    std::vector<bool> used_;
    bool strict_;
    TurnCounter turns_;
    std::size_t hash_hits_ = 0;
    std::size_t sequential_hits_ = 0;
};

/// Destination for CallRecords. Appends are serialized by implementations.
class ManifestSink {
public:
    virtual ~ManifestSink() = default;
    /// Throws SinkError.
    virtual void append(const CallRecord& record) = 0;
};

class MemorySink final : public ManifestSink {
public:
    void append(const CallRecord& record) override;
    std::vector<CallRecord> records() const;
    void fail_writes(bool fail);

private:
    mutable std::mutex mutex_;
    std::vector<CallRecord> records_;
    bool fail_ = false;
};

/// JSONL manifest file. The first line is a header object
/// ({"type": "header", ...}); each call is {"type": "call", "record": ...};
/// an optional trailing {"type": "status", ...} line closes a run.
class FileManifestSink final : public ManifestSink {
public:
    FileManifestSink(const std::filesystem::path& path, const nlohmann::json& header);

    void append(const CallRecord& record) override;
    void write_status(const nlohmann::json& status);

private:
    void write_line(const nlohmann::json& line);

    std::mutex mutex_;
    std::ofstream out_;
    std::filesystem::path path_;
};

/// Loads the call records of a manifest, ignoring header and status lines.
std::vector<CallRecord> load_manifest(const std::filesystem::path& path);

/// Decorator that appends one CallRecord per call to a sink.
///
/// A failing sink never costs the caller its response: the error is kept
/// and exposed through sink_errors().
class RecordingBackend final : public Backend {
public:
    RecordingBackend(Backend& inner, ManifestSink& sink, std::string run_id);

    std::size_t sink_errors() const;
    std::optional<std::string> last_sink_error() const;

private:
    std::string do_complete(const CallRequest& request) override;

    Backend& inner_;
    ManifestSink& sink_;
    std::string run_id_;
    mutable std::mutex mutex_;
    TurnCounter turns_;
    std::size_t sink_errors_ = 0;
    std::optional<std::string> last_error_;
};

/// Wraps `backend` so every call lands in `sink`.
std::unique_ptr<Backend> record_wrap(Backend& backend, ManifestSink& sink, std::string run_id);

} // namespace dermdx
