#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dermdx {

/// Base of every error the library raises on purpose. Anything else escaping
/// a public function is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// case-model
class EmptyName : public Error {
public:
    explicit EmptyName(const std::string& raw)
        : Error("condition name has no letters: '" + raw + "'") {}
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DuplicateCaseId : public Error {
public:
    explicit DuplicateCaseId(const std::string& id)
        : Error("duplicate case_id '" + id + "'"), case_id(id) {}
    std::string case_id;
};

class ImageError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// llm-gateway
class TransportError : public Error {
public:
    using Error::Error;
};

class RateLimited : public TransportError {
public:
    using TransportError::TransportError;
};

class ReplayMiss : public Error {
public:
    using Error::Error;
};

class SinkError : public Error {
public:
    using Error::Error;
};

// retrieval / reranker
class NoCandidatesFound : public Error {
public:
    NoCandidatesFound() : Error("no candidate conditions found in response") {}
};

class ScoreParseError : public Error {
public:
    using Error::Error;
};

class MissingCandidateScore : public ScoreParseError {
public:
    explicit MissingCandidateScore(std::vector<std::string> missing_names);
    std::vector<std::string> missing;
};

class OutOfRangeScore : public ScoreParseError {
public:
    OutOfRangeScore(const std::string& candidate, long long v)
        : ScoreParseError("score " + std::to_string(v) + " for '" + candidate +
                          "' outside [1, 10]"),
          name(candidate), value(v) {}
    std::string name;
    long long value;
};

// mac-engine
class TooManyCandidates : public Error {
public:
    TooManyCandidates(std::size_t n, std::size_t max)
        : Error(std::to_string(n) + " candidates exceed the MAC maximum of " +
                std::to_string(max)) {}
};

class TooFewCandidates : public Error {
public:
    TooFewCandidates(std::size_t n, std::size_t min)
        : Error(std::to_string(n) + " candidates are below the MAC minimum of " +
                std::to_string(min)) {}
};

class IncompleteFinding : public Error {
public:
    IncompleteFinding(const std::string& specialist, std::vector<std::string> missing_critiques);
    std::vector<std::string> missing;
};

class AmbiguousDecision : public Error {
public:
    using Error::Error;
};

class UnknownSpecialist : public Error {
public:
    explicit UnknownSpecialist(const std::string& name)
        : Error("admin named unknown specialist '" + name + "'") {}
};

class NoDiagnosisFound : public Error {
public:
    NoDiagnosisFound() : Error("no candidate diagnosis found in admin reply") {}
};

class AmbiguousDiagnosis : public Error {
public:
    explicit AmbiguousDiagnosis(std::vector<std::string> matched);
    std::vector<std::string> matches;
};

class CallBudgetExhausted : public Error {
public:
    explicit CallBudgetExhausted(std::size_t budget)
        : Error("MAC call budget of " + std::to_string(budget) + " exhausted") {}
};

// aligner
class CriticParseError : public Error {
public:
    using Error::Error;
};

// metrics-eval
class ZeroDenominator : public Error {
public:
    ZeroDenominator() : Error("no cases with known ground truth") {}
};

class JudgeParseError : public Error {
public:
    using Error::Error;
};

class EmptyHypothesis : public Error {
public:
    EmptyHypothesis() : Error("hypothesis has no tokens") {}
};

// cli-runner
class ConfigError : public Error {
public:
    using Error::Error;
};

class DatasetError : public Error {
public:
    using Error::Error;
};

class MissingArtifacts : public Error {
public:
    using Error::Error;
};

/// Reading or writing run files failed.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace dermdx
