#include "dermdx/error.hpp"

namespace dermdx {

namespace {

std::string joined(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += names[i];
    }
    return out;
}

} // namespace

MissingCandidateScore::MissingCandidateScore(std::vector<std::string> missing_names)
    : ScoreParseError("no score for: " + joined(missing_names)), missing(std::move(missing_names)) {}

IncompleteFinding::IncompleteFinding(const std::string& specialist, std::vector<std::string> missing_critiques)
    : Error("specialist '" + specialist + "' left out: " + joined(missing_critiques)),
      missing(std::move(missing_critiques)) {}

AmbiguousDiagnosis::AmbiguousDiagnosis(std::vector<std::string> matched)
    : Error("admin reply names several candidates: " + joined(matched)), matches(std::move(matched)) {}

} // namespace dermdx
