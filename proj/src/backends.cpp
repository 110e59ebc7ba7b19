#include "dermdx/backends.hpp"

#include "dermdx/error.hpp"
#include "dermdx/text.hpp"

#include <sstream>

namespace dermdx {

using json = nlohmann::json;

std::size_t TurnCounter::next(const CallContext& ctx) {
    return turns_[{ctx.case_id, ctx.stage}]++;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<std::string> queue) {
    for (auto& r : queue) queue_.push_back({std::move(r), nullptr});
}

void ScriptedBackend::push(std::string response) {
    std::lock_guard lock(mutex_);
    queue_.push_back({std::move(response), nullptr});
}

void ScriptedBackend::push_error(std::exception_ptr error) {
    std::lock_guard lock(mutex_);
    queue_.push_back({{}, std::move(error)});
}

void ScriptedBackend::add_entry(Entry entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
}

void ScriptedBackend::set_responder(Responder responder) {
    std::lock_guard lock(mutex_);
    responder_ = std::move(responder);
}

std::vector<Conversation> ScriptedBackend::requests() const {
    std::lock_guard lock(mutex_);
    return seen_;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& j) {
    auto backend = std::make_unique<ScriptedBackend>();
    try {
        for (const auto& je : j.value("entries", json::array())) {
            Entry e;
            if (je.contains("case_id")) e.case_id = je.at("case_id").get<std::string>();
            if (je.contains("stage")) e.stage = stage_from_string(je.at("stage").get<std::string>());
            if (je.contains("contains")) e.contains = je.at("contains").get<std::string>();
            for (const auto& r : je.at("responses")) e.responses.push_back(r.get<std::string>());
            e.repeat_last = je.value("repeat", false);
            backend->entries_.push_back(std::move(e));
        }
        for (const auto& r : j.value("queue", json::array()))
            backend->queue_.push_back({r.get<std::string>(), nullptr});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed script: ") + e.what());
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("malformed script: ") + e.what());
    }
    return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open script '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("script '" + path.string() + "': " + e.what());
    }
    return from_json(j);
}

std::string ScriptedBackend::do_complete(const CallRequest& request) {
    Responder responder;
    {
        std::lock_guard lock(mutex_);
        seen_.push_back(request.conversation);
        std::optional<std::string> body;
        for (auto& e : entries_) {
            if (e.responses.empty()) continue;
            if (e.case_id && *e.case_id != request.context.case_id) continue;
            if (e.stage && *e.stage != request.context.stage) continue;
            if (e.contains) {
                if (!body) body = conversation_text(request.conversation);
                if (body->find(*e.contains) == std::string::npos) continue;
            }
            auto r = e.responses.front();
            if (!(e.repeat_last && e.responses.size() == 1)) e.responses.pop_front();
            return r;
        }
        if (!queue_.empty()) {
            auto item = std::move(queue_.front());
            queue_.pop_front();
            if (item.error) std::rethrow_exception(item.error);
            return item.response;
        }
        responder = responder_;
    }
    if (responder) {
        if (auto r = responder(request)) return *r;
    }
    throw ReplayMiss("scripted backend has no response for case '" + request.context.case_id +
                     "' stage " + std::string(to_string(request.context.stage)));
}

// ---------------------------------------------------------------------------
// ReplayBackend

ReplayBackend::ReplayBackend(std::vector<CallRecord> records, bool strict)
    : records_(std::move(records)), used_(records_.size(), false), strict_(strict) {}

std::unique_ptr<ReplayBackend> ReplayBackend::from_manifest(const std::filesystem::path& path,
                                                            bool strict) {
    return std::make_unique<ReplayBackend>(load_manifest(path), strict);
}

std::size_t ReplayBackend::hash_hits() const {
    std::lock_guard lock(mutex_);
    return hash_hits_;
}

std::size_t ReplayBackend::sequential_hits() const {
    std::lock_guard lock(mutex_);
    return sequential_hits_;
}

std::string ReplayBackend::do_complete(const CallRequest& request) {
    auto hash = request_hash(request.conversation);
    std::lock_guard lock(mutex_);
    const auto& ctx = request.context;
    auto turn = turns_.next(ctx);

    std::optional<std::size_t> reuse;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& r = records_[i];
        if (r.case_id != ctx.case_id || r.stage != ctx.stage || r.request_hash != hash) continue;
        if (!used_[i]) {
            used_[i] = true;
            ++hash_hits_;
            return r.response;
        }
        if (!reuse) reuse = i;
    }
    if (reuse) {
        // Every identical request was already served; identical input, identical answer.
        ++hash_hits_;
        return records_[*reuse].response;
    }
    if (!strict_) {
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            if (r.case_id == ctx.case_id && r.stage == ctx.stage && r.turn_index == turn) {
                used_[i] = true;
                ++sequential_hits_;
                return r.response;
            }
        }
    }
    throw ReplayMiss("no recorded response for case '" + ctx.case_id + "' stage " +
                     std::string(to_string(ctx.stage)) + " turn " + std::to_string(turn));
}

// ---------------------------------------------------------------------------
// Sinks

void MemorySink::append(const CallRecord& record) {
    std::lock_guard lock(mutex_);
    if (fail_) throw SinkError("memory sink configured to fail");
    records_.push_back(record);
}

std::vector<CallRecord> MemorySink::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

void MemorySink::fail_writes(bool fail) {
    std::lock_guard lock(mutex_);
    fail_ = fail;
}

FileManifestSink::FileManifestSink(const std::filesystem::path& path, const json& header)
    : out_(path, std::ios::binary | std::ios::app), path_(path) {
    if (!out_) throw SinkError("cannot open manifest '" + path.string() + "'");
    json line = header;
    line["type"] = "header";
    write_line(line);
}

void FileManifestSink::write_line(const json& line) {
    std::lock_guard lock(mutex_);
    out_ << line.dump() << '\n';
    out_.flush();
    if (!out_) throw SinkError("write to manifest '" + path_.string() + "' failed");
}

void FileManifestSink::append(const CallRecord& record) {
    write_line(json{{"type", "call"}, {"record", record.to_json()}});
}

void FileManifestSink::write_status(const json& status) {
    json line = status;
    line["type"] = "status";
    write_line(line);
}

std::vector<CallRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open manifest '" + path.string() + "'");
    std::vector<CallRecord> records;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(n, std::string("manifest: ") + e.what());
        }
        if (j.value("type", std::string{}) != "call") continue;
        try {
            records.push_back(CallRecord::from_json(j.at("record")));
        } catch (const ParseError& e) {
            throw ParseError(n, e.what());
        } catch (const json::exception& e) {
            throw ParseError(n, e.what());
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// RecordingBackend

RecordingBackend::RecordingBackend(Backend& inner, ManifestSink& sink, std::string run_id)
    : inner_(inner), sink_(sink), run_id_(std::move(run_id)) {}

std::size_t RecordingBackend::sink_errors() const {
    std::lock_guard lock(mutex_);
    return sink_errors_;
}

std::optional<std::string> RecordingBackend::last_sink_error() const {
    std::lock_guard lock(mutex_);
    return last_error_;
}

std::string RecordingBackend::do_complete(const CallRequest& request) {
    std::size_t turn = 0;
    {
        std::lock_guard lock(mutex_);
        turn = turns_.next(request.context);
    }
    auto response = inner_.complete(request);

    CallRecord record;
    record.run_id = run_id_;
    record.case_id = request.context.case_id;
    record.stage = request.context.stage;
    record.turn_index = turn;
    record.request_hash = request_hash(request.conversation);
    record.request = request.conversation;
    record.response = response;
    record.model_name = request.config.model_name;
    record.temperature = request.config.temperature;
    record.timestamp = utc_timestamp();
    try {
        sink_.append(record);
    } catch (const SinkError& e) {
        std::lock_guard lock(mutex_);
        ++sink_errors_;
        last_error_ = e.what();
    }
    return response;
}

std::unique_ptr<Backend> record_wrap(Backend& backend, ManifestSink& sink, std::string run_id) {
    return std::make_unique<RecordingBackend>(backend, sink, std::move(run_id));
}

} // namespace dermdx
