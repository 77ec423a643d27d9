#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmnn/dsp.hpp"

namespace tmnn {

/// Missing or malformed dataset input.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);

/// One manifest line: `path,split,tag1;tag2;...`.
struct ManifestRow {
  std::string path;
  Split split = Split::kTrain;
  std::vector<std::string> tags;
  std::size_t line = 0;
};

struct TagVocabulary {
  std::vector<std::string> tags;     // descending count, alphabetical tie-break
  std::vector<std::size_t> counts;   // training-split occurrences

  std::size_t size() const { return tags.size(); }
  /// Index of a tag, or size() when absent.
  std::size_t index_of(const std::string& tag) const;
};

struct TaggedClip {
  std::string path;
  Split split = Split::kTrain;
  std::vector<std::uint8_t> labels;  // binary, one entry per vocabulary tag

  /// First positive label; the class of a single-label clip.
  int class_index() const;
};

struct LabeledSet {
  TagVocabulary vocab;
  std::vector<TaggedClip> clips;
  std::size_t dropped = 0;  // rows without any surviving tag
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv_path);
void write_manifest(const std::filesystem::path& csv_path, const std::vector<ManifestRow>& rows);

/// Top-K tags by training-split frequency.
TagVocabulary build_vocab(const std::vector<ManifestRow>& rows, std::size_t k = 50);

/// Binary label vectors over `vocab`; rows with no surviving tag are dropped.
LabeledSet label_rows(const std::vector<ManifestRow>& rows, const TagVocabulary& vocab);

/// Multi-label manifest restricted to its top-K training tags.
LabeledSet load_mtat_manifest(const std::filesystem::path& csv_path, std::size_t k = 50);

/// Single-label manifest; the vocabulary is every class name, sorted.
LabeledSet load_keyword_manifest(const std::filesystem::path& csv_path);

/// The 35 command words of Speech Commands v0.02.
const std::vector<std::string>& speech_command_classes();

/// Directory-per-class layout with validation_list.txt and testing_list.txt.
/// Directories starting with '_' (background noise) are ignored.
LabeledSet load_speech_commands(const std::filesystem::path& root);

/// Speech Commands clips as manifest rows (paths relative to `root`).
std::vector<ManifestRow> speech_commands_rows(const std::filesystem::path& root);

/// Throws DataError if a path appears in more than one split.
void check_disjoint(const std::vector<TaggedClip>& clips);

std::vector<TaggedClip> select_split(const std::vector<TaggedClip>& clips, Split split);

/// Decodes a 16 kHz WAV and right-pads with zeros or truncates to `seconds`.
AudioClip load_audio_fixed(const std::filesystem::path& path, double seconds);

/// Decodes a WAV and rejects anything that is not 16 kHz.
AudioClip load_audio_16k(const std::filesystem::path& path);

/// Resolves a manifest path against the manifest's own directory.
std::filesystem::path resolve_clip_path(const std::filesystem::path& manifest, const std::string& clip_path);

}  // namespace tmnn
