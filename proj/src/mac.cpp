#include "dermdx/mac.hpp"

#include "dermdx/text.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace dermdx {

using json = nlohmann::json;

namespace {

constexpr std::string_view kSpecialistFormat =
    "Reply using these section headers, each on its own line:\n"
    "EVIDENCE:\n"
    "<evidence supporting your assigned disease>\n"
    "CRITIQUE <disease name>:\n"
    "<why that disease fits the case less well>\n"
    "Write one CRITIQUE section for each of: ";

constexpr std::string_view kAdminFormat =
    "End your reply in exactly one of two ways.\n"
    "To request refinements: a line \"REVISE: <comma-separated specialist names>\" followed by your "
    "instructions to them. Specialists: ";

std::string collapse_ws(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (text::is_space(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(c);
    }
    return out;
}

std::string strip_markup(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c != '*' && c != '#' && c != '`') out.push_back(c);
    }
    return text::trim(out);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

CandidateSet as_set(const MacTranscript& t) {
    return CandidateSet(t.candidates, RetrievalStrategy::NaiveCot, t.case_id,
                        std::max<std::size_t>(t.candidates.size(), 1));
}

std::vector<std::string> specialist_names(const MacTranscript& t) {
    std::vector<std::string> out;
    for (const auto& a : t.assignments) out.push_back(a.specialist_name);
    return out;
}

/// Candidate indices mentioned in `s`, distinct, in order of appearance.
std::vector<std::size_t> mentioned(std::string_view s, const std::vector<std::string>& names) {
    std::vector<std::size_t> out;
    for (const auto& m : text::find_mentions(text::to_lower(s), names)) {
        if (std::find(out.begin(), out.end(), m.candidate) == out.end()) out.push_back(m.candidate);
    }
    return out;
}

bool is_numbered_item(std::string_view line, std::size_t& body) {
    std::size_t i = 0;
    while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
    if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) return false;
    ++i;
    if (i < line.size() && !text::is_space(line[i])) return false;
    body = i;
    return true;
}

} // namespace

void MacConfig::validate() const {
    if (min_candidates < 2 || min_candidates > max_candidates)
        throw ConfigError("MAC candidate bounds must satisfy 2 <= min <= max");
    if (termination_token.empty()) throw ConfigError("termination token must not be empty");
    for (char c : termination_token) {
        if (c >= 'a' && c <= 'z') throw ConfigError("termination token must be uppercase");
    }
    for (const auto& [role, body] : role_prompts) {
        if (role != "coordinator" && role != "admin" && role != "specialist")
            throw ConfigError("unknown MAC role '" + role + "'");
        if (text::trim(body).empty()) throw ConfigError("empty MAC role prompt for '" + role + "'");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : specialist_names) {
        if (text::trim(n).empty()) throw ConfigError("empty specialist name");
        if (!seen.insert(text::to_lower(n)).second) throw ConfigError("duplicate specialist name '" + n + "'");
    }
    gateway.validate();
}

std::string to_string(const MacPhase& phase) {
    switch (phase.kind) {
    case MacPhaseKind::Init: return "Init";
    case MacPhaseKind::Assignment: return "Assignment";
    case MacPhaseKind::SpecialistAnalysis: return "SpecialistAnalysis(" + std::to_string(phase.index) + ")";
    case MacPhaseKind::Compilation: return "Compilation";
    case MacPhaseKind::AdminEvaluation: return "AdminEvaluation";
    case MacPhaseKind::Revision: return "Revision(" + std::to_string(phase.index) + ")";
    case MacPhaseKind::FinalDiagnosis: return "FinalDiagnosis";
    case MacPhaseKind::Terminated: return "Terminated";
    }
    return "?";
}

bool is_legal_phase_sequence(const std::vector<MacPhase>& phases, std::size_t n, std::size_t max_rounds) {
    std::size_t i = 0;
    auto expect = [&](MacPhaseKind k, std::size_t index = 0) {
        if (i >= phases.size() || phases[i].kind != k || phases[i].index != index) return false;
        ++i;
        return true;
    };
    if (!expect(MacPhaseKind::Init) || !expect(MacPhaseKind::Assignment)) return false;
    for (std::size_t k = 0; k < n; ++k) {
        if (!expect(MacPhaseKind::SpecialistAnalysis, k)) return false;
    }
    if (!expect(MacPhaseKind::Compilation) || !expect(MacPhaseKind::AdminEvaluation)) return false;
    for (std::size_t r = 0; i < phases.size() && phases[i].kind == MacPhaseKind::Revision; ++r) {
        if (r >= max_rounds || !expect(MacPhaseKind::Revision, r) || !expect(MacPhaseKind::AdminEvaluation))
            return false;
    }
    return expect(MacPhaseKind::FinalDiagnosis) && expect(MacPhaseKind::Terminated) && i == phases.size();
}

json MacTranscript::to_json() const {
    json cands = json::array();
    for (const auto& c : candidates) cands.push_back(c.normalized());
    json assigns = json::array();
    for (const auto& a : assignments)
        assigns.push_back({{"specialist", a.specialist_name}, {"disease", a.disease.normalized()}});
    json finds = json::array();
    for (const auto& f : findings) {
        json crit = json::object();
        for (const auto& [d, c] : f.critiques) crit[d.normalized()] = c;
        finds.push_back({{"specialist", f.specialist_name},
                         {"disease", f.disease.normalized()},
                         {"evidence", f.evidence},
                         {"critiques", std::move(crit)}});
    }
    json rounds = json::array();
    for (const auto& r : refinement_rounds) {
        rounds.push_back({{"instructions", r.instructions},
                          {"targets", r.targets},
                          {"refined_evidence", r.refined_evidence}});
    }
    json ph = json::array();
    for (const auto& p : phases) ph.push_back(to_string(p));
    return json{{"case_id", case_id},
                {"query", case_query},
                {"observation", observation},
                {"observation_source", observation_source},
                {"candidates", std::move(cands)},
                {"assignments", std::move(assigns)},
                {"findings", std::move(finds)},
                {"consolidation", consolidation},
                {"consolidation_fallback", consolidation_fallback},
                {"refinement_rounds", std::move(rounds)},
                {"final_diagnosis", final_diagnosis ? json(final_diagnosis->normalized()) : json()},
                {"terminated", terminated},
                {"forced_finalize", forced_finalize},
                {"forced_fallback", forced_fallback},
                {"phases", std::move(ph)},
                {"messages", canonical_json(messages).at("messages")},
                {"llm_calls", llm_calls},
                {"call_budget", call_budget}};
}

bool detect_termination(std::string_view message, std::string_view token) {
    return !token.empty() && message.find(token) != std::string_view::npos;
}

ConditionName extract_final_diagnosis(std::string_view admin_text, const CandidateSet& candidates) {
    auto names = candidates.normalized_names();
    for (const auto& raw : text::split_lines(admin_text)) {
        auto line = strip_markup(raw);
        auto p = text::to_lower(line).find("final_diagnosis:");
        if (p == std::string::npos) continue;
        auto rest = std::string_view(line).substr(p + 16);
        std::string cleaned;
        for (char c : rest) {
            if (c != '"' && c != '\'') cleaned.push_back(c);
        }
        if (auto idx = candidates.index_of(normalized_form(cleaned))) return candidates[*idx];
        auto hits = mentioned(rest, names);
        if (hits.size() == 1) return candidates[hits.front()];
    }
    auto hits = mentioned(admin_text, names);
    if (hits.empty()) throw NoDiagnosisFound();
    if (hits.size() > 1) {
        std::vector<std::string> matched;
        for (auto h : hits) matched.push_back(names[h]);
        throw AmbiguousDiagnosis(std::move(matched));
    }
    return candidates[hits.front()];
}

std::vector<Assignment> assign_diseases(const CandidateSet& candidates, const MacConfig& config) {
    if (candidates.size() > config.max_candidates)
        throw TooManyCandidates(candidates.size(), config.max_candidates);
    if (candidates.size() < config.min_candidates)
        throw TooFewCandidates(candidates.size(), config.min_candidates);
    std::vector<Assignment> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto name = i < config.specialist_names.size() ? config.specialist_names[i]
                                                       : "Specialist_" + std::to_string(i + 1);
        out.push_back({std::move(name), candidates[i]});
    }
    return out;
}

SpecialistFinding parse_specialist_reply(std::string_view reply, const Assignment& assignment,
                                         const CandidateSet& candidates) {
    auto names = candidates.normalized_names();
    auto own = candidates.index_of(assignment.disease.normalized());

    std::string evidence;
    std::vector<std::optional<std::string>> critiques(candidates.size());
    enum class Section { None, Evidence, Critique, CritiqueList };
    Section section = Section::None;
    std::optional<std::size_t> current; // critique target

    auto append = [](std::string& dst, std::string_view s) {
        auto t = text::trim(s);
        if (t.empty()) return;
        if (!dst.empty()) dst.push_back('\n');
        dst += t;
    };
    auto open_critique = [&](std::optional<std::size_t> idx, std::string_view first) {
        current = idx;
        if (!idx || idx == own) {
            current.reset();
            return;
        }
        if (!critiques[*idx]) critiques[*idx].emplace();
        append(*critiques[*idx], first);
    };

    for (const auto& raw : text::split_lines(reply)) {
        auto line = strip_markup(raw);
        auto lower = text::to_lower(line);
        auto colon = line.find(':');
        if (colon != std::string::npos &&
            (lower.starts_with("evidence") || lower.starts_with("supporting evidence") ||
             lower.starts_with("enhanced evidence"))) {
            section = Section::Evidence;
            append(evidence, std::string_view(line).substr(colon + 1));
            continue;
        }
        if (colon != std::string::npos && lower.starts_with("critique ")) {
            section = Section::Critique;
            auto head = std::string_view(line).substr(9, colon - 9);
            std::optional<std::size_t> idx = candidates.index_of(normalized_form(head));
            if (!idx) {
                auto hits = mentioned(head, names);
                if (hits.size() == 1) idx = hits.front();
            }
            open_critique(idx, std::string_view(line).substr(colon + 1));
            continue;
        }
        if (lower.starts_with("critiques")) {
            section = Section::CritiqueList;
            current.reset();
            continue;
        }
        std::size_t body = 0;
        if (section == Section::CritiqueList && is_numbered_item(line, body)) {
            auto item = std::string_view(line).substr(body);
            auto c = item.find(':');
            auto head = c == std::string_view::npos ? item : item.substr(0, c);
            auto hits = mentioned(head, names);
            std::optional<std::size_t> idx;
            if (!hits.empty()) idx = hits.front();
            open_critique(idx, c == std::string_view::npos ? std::string_view{} : item.substr(c + 1));
            continue;
        }
        switch (section) {
        case Section::Evidence: append(evidence, line); break;
        case Section::Critique:
        case Section::CritiqueList:
            if (current) append(*critiques[*current], line);
            break;
        case Section::None: break;
        }
    }

    SpecialistFinding f{assignment.specialist_name, assignment.disease, std::move(evidence), {}};
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (critiques[i] && !critiques[i]->empty()) f.critiques.emplace_back(candidates[i], *critiques[i]);
    }
    return f;
}

std::vector<std::string> missing_sections(const SpecialistFinding& finding, const CandidateSet& candidates) {
    std::vector<std::string> missing;
    if (text::trim(finding.evidence).empty()) missing.emplace_back("evidence");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i] == finding.disease) continue;
        bool found = std::any_of(finding.critiques.begin(), finding.critiques.end(),
                                 [&](const auto& c) { return c.first == candidates[i]; });
        if (!found) missing.push_back(candidates[i].normalized());
    }
    return missing;
}

AdminDecision parse_admin_decision(std::string_view reply, const std::vector<std::string>& specialists,
                                   std::string_view token) {
    std::optional<std::string> revise;
    for (const auto& raw : text::split_lines(reply)) {
        auto line = strip_markup(raw);
        if (text::istarts_with(line, "revise:")) {
            revise = line.substr(7);
            break;
        }
    }
    bool finalize = detect_termination(reply, token);
    if (revise.has_value() == finalize)
        throw AmbiguousDecision(finalize ? "admin reply both requests revision and terminates"
                                         : "admin reply neither requests revision nor terminates");
    AdminDecision d;
    if (finalize) {
        d.kind = AdminDecision::Kind::Finalize;
        d.diagnosis_text = std::string(reply);
        return d;
    }
    d.kind = AdminDecision::Kind::RequestRevision;
    d.instructions = std::string(reply);
    std::string list = *revise;
    for (std::string_view sep : {" and ", ";"}) {
        for (auto p = list.find(sep); p != std::string::npos; p = list.find(sep)) list.replace(p, sep.size(), ",");
    }
    std::size_t start = 0;
    while (start <= list.size()) {
        auto end = list.find(',', start);
        if (end == std::string::npos) end = list.size();
        std::string name;
        for (char c : list.substr(start, end - start)) {
            if (c != '"' && c != '\'') name.push_back(c);
        }
        name = text::trim(name);
        while (!name.empty() && (name.back() == '.' || name.back() == '!')) name.pop_back();
        if (!name.empty()) {
            auto it = std::find_if(specialists.begin(), specialists.end(),
                                   [&](const std::string& s) { return text::to_lower(s) == text::to_lower(name); });
            if (it == specialists.end()) throw UnknownSpecialist(name);
            if (std::find(d.targets.begin(), d.targets.end(), *it) == d.targets.end()) d.targets.push_back(*it);
        }
        start = end + 1;
    }
    if (d.targets.empty()) throw AmbiguousDecision("REVISE line names no specialist");
    return d;
}

std::string render_consolidation(const std::vector<SpecialistFinding>& findings) {
    std::string out = "Compiling Findings\n";
    for (std::size_t i = 0; i < findings.size(); ++i) {
        const auto& f = findings[i];
        out += std::to_string(i + 1) + ". " + f.disease.normalized() + "\n";
        out += "- Supporting Evidence (" + f.specialist_name + "): " + collapse_ws(f.evidence) + "\n";
        std::vector<std::string> crit;
        for (const auto& other : findings) {
            for (const auto& [d, c] : other.critiques) {
                if (d == f.disease) crit.push_back(other.specialist_name + ": " + collapse_ws(c));
            }
        }
        out += "- Consolidated Critiques: " + (crit.empty() ? std::string("none") : join(crit, " | ")) + "\n";
    }
    return out;
}

std::size_t mac_call_budget(std::size_t n, const MacConfig& config) {
    const std::size_t max_targets = n;
    return 1 + n + 1 + (config.max_revision_rounds + 1) * (1 + max_targets) + 1;
}

MacEngine::MacEngine(Backend& backend, MacConfig config, PromptLibrary prompts)
    : backend_(backend), config_(std::move(config)), prompts_(std::move(prompts)) {
    config_.validate();
}

std::string MacEngine::role_prompt(const std::string& role, const std::string& name) const {
    if (auto it = config_.role_prompts.find(role); it != config_.role_prompts.end())
        return text::render(it->second, {{"name", name}});
    return prompts_.render("mac_" + role, {{"name", name}});
}

MacTranscript MacEngine::begin(const DermCase& dermcase, const CandidateSet& candidates,
                               const std::string& observation, std::string observation_source) const {
    MacTranscript t;
    t.case_id = dermcase.case_id;
    t.case_query = dermcase.query;
    t.observation = observation;
    t.observation_source = std::move(observation_source);
    t.candidates = candidates.candidates();
    t.phases.push_back({MacPhaseKind::Init, 0});
    t.assignments = assign_diseases(candidates, config_);
    t.call_budget = mac_call_budget(candidates.size(), config_);
    t.phases.push_back({MacPhaseKind::Assignment, 0});

    std::vector<std::string> parts;
    for (const auto& a : t.assignments) parts.push_back(a.specialist_name + ": " + a.disease.normalized());
    auto assignments = join(parts, "; ");
    auto task = prompts_.render("mac_task", {{"observation", observation},
                                             {"query", dermcase.query},
                                             {"candidates", format_candidates(candidates)},
                                             {"assignments", assignments},
                                             {"token", config_.termination_token}});
    auto opening = ChatMessage::user(std::move(task));
    opening.speaker = "Admin";
    t.messages.messages.push_back(std::move(opening));
    t.messages.messages.push_back(ChatMessage::assistant("Assignments: " + assignments, "Coordinator"));
    return t;
}

Conversation MacEngine::agent_conversation(const MacTranscript& t, const std::string& system_prompt,
                                           const std::string& instruction,
                                           const std::vector<ImagePayload>& images) const {
    std::string body = t.messages.messages.front().text();
    body += "\n\nConversation so far:\n";
    for (std::size_t i = 1; i < t.messages.messages.size(); ++i) {
        const auto& m = t.messages.messages[i];
        body += "\n" + m.speaker.value_or(std::string(to_string(m.role))) + ":\n" + m.text() + "\n";
    }
    body += "\n" + instruction;
    Conversation c;
    c.messages.push_back(ChatMessage::system(system_prompt));
    c.messages.push_back(ChatMessage::user(std::move(body), images));
    return c;
}

std::string MacEngine::call(MacTranscript& t, Conversation conversation) {
    if (t.llm_calls >= t.call_budget) throw CallBudgetExhausted(t.call_budget);
    ++t.llm_calls;
    return complete(conversation, config_.gateway, backend_, CallContext{t.case_id, Stage::mac});
}

SpecialistFinding MacEngine::run_specialist(MacTranscript& t, const DermCase& dermcase,
                                            const Assignment& assignment, const CandidateSet& candidates) {
    if (!candidates.contains(assignment.disease))
        throw PreconditionError("assigned disease '" + assignment.disease.normalized() + "' is not a candidate");
    std::vector<std::string> others;
    for (const auto& c : candidates) {
        if (!(c == assignment.disease)) others.push_back(c.normalized());
    }
    auto instruction = "You are " + assignment.specialist_name + ". Your assigned disease is " +
                       assignment.disease.normalized() + ". Present your analysis now.\n" +
                       std::string(kSpecialistFormat) + join(others, "; ") + ".";
    auto conv = agent_conversation(t, role_prompt("specialist", assignment.specialist_name), instruction,
                                   dermcase.images);
    auto reply = call(t, conv);
    auto finding = parse_specialist_reply(reply, assignment, candidates);
    auto missing = missing_sections(finding, candidates);
    if (!missing.empty()) {
        conv.messages.push_back(ChatMessage::assistant(reply));
        conv.messages.push_back(ChatMessage::user("Your reply is missing these sections: " + join(missing, "; ") +
                                                  ". Reply again with every section.\n" +
                                                  std::string(kSpecialistFormat) + join(others, "; ") + "."));
        reply = call(t, conv);
        finding = parse_specialist_reply(reply, assignment, candidates);
        missing = missing_sections(finding, candidates);
    }
    t.messages.messages.push_back(ChatMessage::assistant(reply, assignment.specialist_name));
    if (!missing.empty()) throw IncompleteFinding(assignment.specialist_name, std::move(missing));
    return finding;
}

std::string MacEngine::consolidate(MacTranscript& t) {
    if (t.findings.size() != t.assignments.size())
        throw PreconditionError("consolidation needs one finding per assignment");
    auto conv = agent_conversation(t, role_prompt("coordinator"),
                                   "All specialists have reported. As the Coordinator, compile the supporting "
                                   "evidence and all critiques for each probable disease and present them to "
                                   "the Admin.",
                                   {});
    auto reply = text::trim(call(t, conv));
    t.consolidation_fallback = reply.empty();
    if (reply.empty()) reply = render_consolidation(t.findings);
    t.consolidation = reply;
    t.messages.messages.push_back(ChatMessage::assistant(reply, "Coordinator"));
    return reply;
}

AdminDecision MacEngine::admin_evaluate(MacTranscript& t, const std::vector<std::string>& specialists,
                                        bool force_finalize) {
    if (t.consolidation.empty()) throw PreconditionError("admin evaluation needs a consolidation");
    const auto& token = config_.termination_token;
    auto finalize_line = "To conclude: a line \"FINAL_DIAGNOSIS: <one of the probable diseases>\" and the word " +
                         token + ".";
    std::string instruction =
        force_finalize ? "The revision limit has been reached. You must conclude now. Reply with a line "
                         "\"FINAL_DIAGNOSIS: <one of the probable diseases>\" and the word " +
                             token + "."
                       : "As the Admin, evaluate the compiled evidence and critiques. " + std::string(kAdminFormat) +
                             join(specialists, ", ") + ".\n" + finalize_line;
    auto conv = agent_conversation(t, role_prompt("admin"), instruction, {});
    auto candidates = as_set(t);

    auto interpret = [&](const std::string& reply) {
        AdminDecision d;
        if (force_finalize) {
            d.kind = AdminDecision::Kind::Finalize;
            d.diagnosis_text = reply;
        } else {
            d = parse_admin_decision(reply, specialists, token);
        }
        if (d.kind == AdminDecision::Kind::Finalize) d.diagnosis = extract_final_diagnosis(reply, candidates);
        return d;
    };

    auto reply = call(t, conv);
    for (int attempt = 0;; ++attempt) {
        try {
            auto d = interpret(reply);
            t.messages.messages.push_back(ChatMessage::assistant(reply, "Admin"));
            return d;
        } catch (const UnknownSpecialist&) {
            t.messages.messages.push_back(ChatMessage::assistant(reply, "Admin"));
            throw;
        } catch (const Error& e) {
            const bool parse_failure = dynamic_cast<const AmbiguousDecision*>(&e) ||
                                       dynamic_cast<const NoDiagnosisFound*>(&e) ||
                                       dynamic_cast<const AmbiguousDiagnosis*>(&e);
            if (!parse_failure) throw;
            if (attempt == 1) {
                t.messages.messages.push_back(ChatMessage::assistant(reply, "Admin"));
                if (!force_finalize) throw;
                AdminDecision d;
                d.kind = AdminDecision::Kind::Finalize;
                d.diagnosis_text = reply;
                d.diagnosis = t.candidates.front();
                t.forced_fallback = true;
                return d;
            }
            conv.messages.push_back(ChatMessage::assistant(reply));
            conv.messages.push_back(ChatMessage::user(std::string("Your reply could not be read (") + e.what() +
                                                      "). " + instruction));
            reply = call(t, conv);
        }
    }
}

std::string MacEngine::refine(MacTranscript& t, const DermCase& dermcase, const Assignment& assignment,
                              const std::string& instructions) {
    (void)instructions; // already in the chat log as the admin's message
    auto instruction = "You are " + assignment.specialist_name + ". The Admin asked you to refine your evidence for " +
                       assignment.disease.normalized() +
                       ". Address the Admin's points. Start your reply with a line \"ENHANCED EVIDENCE:\".";
    auto conv = agent_conversation(t, role_prompt("specialist", assignment.specialist_name), instruction,
                                   dermcase.images);
    auto reply = call(t, conv);
    if (text::trim(reply).empty()) {
        conv.messages.push_back(ChatMessage::assistant(" "));
        conv.messages.push_back(ChatMessage::user("Your reply was empty. " + instruction));
        reply = call(t, conv);
    }
    if (text::trim(reply).empty()) {
        t.messages.messages.push_back(ChatMessage::assistant("(empty)", assignment.specialist_name));
        throw IncompleteFinding(assignment.specialist_name, {"refined evidence"});
    }
    t.messages.messages.push_back(ChatMessage::assistant(reply, assignment.specialist_name));
    return text::trim(reply);
}

MacTranscript MacEngine::run(const DermCase& dermcase, const CandidateSet& candidates,
                             const std::string& observation, std::string observation_source) {
    MacTranscript t;
    t.case_id = dermcase.case_id;
    t.candidates = candidates.candidates();
    t.phases.push_back({MacPhaseKind::Init, 0});
    try {
        t = begin(dermcase, candidates, observation, std::move(observation_source));
        for (std::size_t i = 0; i < t.assignments.size(); ++i) {
            t.phases.push_back({MacPhaseKind::SpecialistAnalysis, i});
            auto assignment = t.assignments[i];
            t.findings.push_back(run_specialist(t, dermcase, assignment, candidates));
        }
        t.phases.push_back({MacPhaseKind::Compilation, 0});
        consolidate(t);

        auto names = specialist_names(t);
        std::size_t round = 0;
        t.phases.push_back({MacPhaseKind::AdminEvaluation, 0});
        t.forced_finalize = config_.max_revision_rounds == 0;
        auto decision = admin_evaluate(t, names, t.forced_finalize);
        while (decision.kind == AdminDecision::Kind::RequestRevision) {
            t.phases.push_back({MacPhaseKind::Revision, round});
            RefinementRound rr{decision.instructions, decision.targets, {}};
            for (const auto& target : decision.targets) {
                auto it = std::find_if(t.assignments.begin(), t.assignments.end(),
                                       [&](const Assignment& a) { return a.specialist_name == target; });
                auto assignment = *it;
                rr.refined_evidence[target] = refine(t, dermcase, assignment, decision.instructions);
            }
            t.refinement_rounds.push_back(std::move(rr));
            ++round;
            t.phases.push_back({MacPhaseKind::AdminEvaluation, 0});
            t.forced_finalize = round >= config_.max_revision_rounds;
            decision = admin_evaluate(t, names, t.forced_finalize);
        }
        t.phases.push_back({MacPhaseKind::FinalDiagnosis, 0});
        t.final_diagnosis = decision.diagnosis;
        t.phases.push_back({MacPhaseKind::Terminated, 0});
        t.terminated = true;
        return t;
    } catch (const Error& e) {
        throw MacRunError(std::string("MAC run for case '") + dermcase.case_id + "' aborted: " + e.what(), std::move(t),
                          std::current_exception());
    }
}

Observation obtain_observation(const DermCase& dermcase, Backend& backend, const GatewayConfig& gateway,
                               const PromptLibrary& prompts) {
    try {
        Conversation c;
        c.messages.push_back(ChatMessage::user(prompts.get("observation").body, dermcase.images));
        auto reply = text::trim(complete(c, gateway, backend, CallContext{dermcase.case_id, Stage::mac}));
        if (!reply.empty()) return {reply, "image_description"};
    } catch (const Error&) {
    }
    return {dermcase.query, "query"};
}

RankOutcome mac_rank_outcome(const MacTranscript& transcript, const CandidateSet& candidates) {
    if (!transcript.final_diagnosis) throw PreconditionError("MAC transcript has no final diagnosis");
    RankOutcome out;
    out.case_id = transcript.case_id;
    out.strategy = RerankStrategy::Mac;
    out.ranking.push_back(*transcript.final_diagnosis);
    for (const auto& c : candidates) {
        if (!(c == *transcript.final_diagnosis)) out.ranking.push_back(c);
    }
    out.transcript_ref = "mac/" + transcript.case_id + ".json";
    return out;
}

} // namespace dermdx
