#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dermdx {

/// A skin-condition name together with its comparison key.
///
/// The normalized form is lowercase, trimmed, internal whitespace collapsed
/// to one space and trailing `.,;!?` removed. Two names are equal when their
/// normalized forms are.
class ConditionName {
public:
    /// Throws EmptyName if `raw` contains no ASCII letter.
    static ConditionName parse(std::string_view raw);

    const std::string& raw() const noexcept { return raw_; }
    const std::string& normalized() const noexcept { return normalized_; }

    friend bool operator==(const ConditionName& a, const ConditionName& b) {
        return a.normalized_ == b.normalized_;
    }

private:
    ConditionName(std::string raw, std::string normalized)
        : raw_(std::move(raw)), normalized_(std::move(normalized)) {}

    std::string raw_;
    std::string normalized_;
};

ConditionName normalize_condition(std::string_view raw);

/// The normalization function alone, for callers that only need the key.
/// Returns an empty string when `raw` has no letters.
std::string normalized_form(std::string_view raw);

enum class MediaType { jpeg, png };

std::string_view to_string(MediaType t) noexcept;
MediaType media_type_from_string(std::string_view s);

/// Raw image bytes plus their digest. A payload loaded from a call manifest
/// carries only the digest (`has_bytes() == false`); it hashes identically
/// but cannot be sent to a live endpoint.
class ImagePayload {
public:
    /// Detects the media type from magic bytes. Throws ImageError when the
    /// bytes are neither JPEG nor PNG.
    static ImagePayload from_bytes(std::string source_path, std::string bytes);
    static ImagePayload from_file(const std::filesystem::path& file, std::string source_path);
    static ImagePayload from_encoded(std::string source_path, std::string_view base64);
    static ImagePayload reference(std::string source_path, MediaType type, std::string sha256);

    const std::string& source_path() const noexcept { return source_path_; }
    MediaType media_type() const noexcept { return media_type_; }
    const std::string& bytes() const noexcept { return bytes_; }
    const std::string& sha256() const noexcept { return sha256_; }
    bool has_bytes() const noexcept { return has_bytes_; }
    std::string encoded() const;
    std::string data_uri() const;

    friend bool operator==(const ImagePayload& a, const ImagePayload& b) {
        return a.source_path_ == b.source_path_ && a.media_type_ == b.media_type_ &&
               a.sha256_ == b.sha256_;
    }

private:
    ImagePayload() = default;

    std::string source_path_;
    MediaType media_type_ = MediaType::png;
    std::string bytes_;
    std::string sha256_;
    bool has_bytes_ = false;
};

/// Returns the media type implied by the leading bytes, if recognised.
std::optional<MediaType> sniff_media_type(std::string_view bytes) noexcept;

enum class Split { train, validation, test };

std::string_view to_string(Split s) noexcept;

struct DermCase {
    std::string case_id;
    std::string query; ///< empty for context-independent cases
    std::vector<ImagePayload> images;
    std::optional<ConditionName> ground_truth;
    Split split = Split::validation;
    /// Doctor-written answer, when the dataset carries one; used for BLEU.
    std::optional<std::string> reference_response;

    friend bool operator==(const DermCase& a, const DermCase& b);
};

class Dataset {
public:
    Dataset() = default;
    /// Throws DuplicateCaseId or PreconditionError (case without images).
    explicit Dataset(std::vector<DermCase> cases);

    const std::vector<DermCase>& cases() const noexcept { return cases_; }
    std::size_t total() const noexcept { return cases_.size(); }
    std::size_t with_ground_truth() const noexcept { return with_ground_truth_; }
    const DermCase* find(std::string_view case_id) const;

    friend bool operator==(const Dataset& a, const Dataset& b) { return a.cases_ == b.cases_; }

private:
    std::vector<DermCase> cases_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t with_ground_truth_ = 0;
};

/// Parses JSONL case records. Image paths resolve against `base_dir`.
/// Throws ParseError (1-based line) or DuplicateCaseId.
Dataset parse_dataset(std::string_view jsonl, const std::filesystem::path& base_dir);

/// Loads a JSONL dataset; throws DatasetError if the file cannot be opened.
Dataset load_dataset(const std::filesystem::path& path);

/// JSONL form accepted by parse_dataset (image paths written as stored).
std::string serialize_dataset(const Dataset& dataset);

} // namespace dermdx
