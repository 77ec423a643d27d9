#include "tmnn/data_io.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tmnn {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split '" + text + "' (expected train, val or test)");
}

std::size_t TagVocabulary::index_of(const std::string& tag) const {
  return static_cast<std::size_t>(std::find(tags.begin(), tags.end(), tag) - tags.begin());
}

int TaggedClip::class_index() const {
  auto it = std::find(labels.begin(), labels.end(), std::uint8_t{1});
  if (it == labels.end()) throw DataError("clip " + path + " has no positive label");
  return static_cast<int>(it - labels.begin());
}

namespace {

// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_tags(const std::string& text) {
  std::vector<std::string> tags;
  std::stringstream ss(text);
  std::string tag;
  while (std::getline(ss, tag, ';')) {
    if (!tag.empty()) tags.push_back(tag);
  }
  return tags;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("manifest not found: " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path.string() + ": empty manifest");
  strip_cr(line);
  const auto header = split_csv_line(line, 1);
  if (header != std::vector<std::string>{"path", "split", "tags"}) {
    throw DataError(csv_path.string() + ": header must be 'path,split,tags'");
  }
  std::vector<ManifestRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no);
    if (fields.size() != 3 || fields[0].empty()) {
      throw DataError(csv_path.string() + ": malformed row at line " + std::to_string(line_no));
    }
    ManifestRow row;
    row.path = fields[0];
    try {
      row.split = parse_split(fields[1]);
    } catch (const DataError& e) {
      throw DataError(csv_path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    row.tags = split_tags(fields[2]);
    row.line = line_no;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::filesystem::path& csv_path, const std::vector<ManifestRow>& rows) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write " + csv_path.string());
  out << "path,split,tags\n";
  for (const auto& row : rows) {
    std::string joined;
    for (std::size_t i = 0; i < row.tags.size(); ++i) {
      if (i) joined += ';';
      joined += row.tags[i];
    }
    out << csv_field(row.path) << ',' << to_string(row.split) << ',' << csv_field(joined) << '\n';
  }
}

TagVocabulary build_vocab(const std::vector<ManifestRow>& rows, std::size_t k) {
  std::map<std::string, std::size_t> counts;
  for (const auto& row : rows) {
    if (row.split != Split::kTrain) continue;
    std::set<std::string> unique(row.tags.begin(), row.tags.end());
    for (const auto& tag : unique) ++counts[tag];
  }
  if (counts.size() < k) {
    throw DataError("only " + std::to_string(counts.size()) + " distinct training tags, need " + std::to_string(k));
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is alphabetical, so a stable sort by count keeps that tie-break.
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  TagVocabulary vocab;
  for (std::size_t i = 0; i < k; ++i) {
    vocab.tags.push_back(ranked[i].first);
    vocab.counts.push_back(ranked[i].second);
  }
  return vocab;
}

LabeledSet label_rows(const std::vector<ManifestRow>& rows, const TagVocabulary& vocab) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.tags.size(); ++i) index[vocab.tags[i]] = i;
  LabeledSet set;
  set.vocab = vocab;
  for (const auto& row : rows) {
    TaggedClip clip{row.path, row.split, std::vector<std::uint8_t>(vocab.size(), 0)};
    bool any = false;
    for (const auto& tag : row.tags) {
      auto it = index.find(tag);
      if (it == index.end()) continue;
      clip.labels[it->second] = 1;
      any = true;
    }
    if (!any) {
      ++set.dropped;
      if (row.tags.empty()) {
        const std::string where = row.line ? "line " + std::to_string(row.line) + " (" + row.path + ")" : row.path;
        warn(where + ": empty tag field, row dropped");
      }
      continue;
    }
    set.clips.push_back(std::move(clip));
  }
  check_disjoint(set.clips);
  return set;
}

LabeledSet load_mtat_manifest(const std::filesystem::path& csv_path, std::size_t k) {
  const auto rows = read_manifest(csv_path);
  return label_rows(rows, build_vocab(rows, k));
}

LabeledSet load_keyword_manifest(const std::filesystem::path& csv_path) {
  const auto rows = read_manifest(csv_path);
  std::set<std::string> names;
  for (const auto& row : rows) {
    if (row.tags.size() != 1) {
      throw DataError(csv_path.string() + ": line " + std::to_string(row.line) + ": keyword rows need exactly one class");
    }
    names.insert(row.tags[0]);
  }
  TagVocabulary vocab;
  vocab.tags.assign(names.begin(), names.end());
  vocab.counts.assign(vocab.tags.size(), 0);
  for (const auto& row : rows) {
    if (row.split == Split::kTrain) ++vocab.counts[vocab.index_of(row.tags[0])];
  }
  return label_rows(rows, vocab);
}

const std::vector<std::string>& speech_command_classes() {
  static const std::vector<std::string> classes = {
      "backward", "bed",   "bird",  "cat",  "dog",   "down",  "eight", "five",   "follow",
      "forward",  "four",  "go",    "happy", "house", "learn", "left",  "marvin", "nine",
      "no",       "off",   "on",    "one",   "right", "seven", "sheila", "six",   "stop",
      "three",    "tree",  "two",   "up",    "visual", "wow",  "yes",   "zero"};
  return classes;
}

namespace {

std::set<std::string> read_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing list file " + path.string());
  std::set<std::string> entries;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (!line.empty()) entries.insert(line);
  }
  return entries;
}

}  // namespace

std::vector<ManifestRow> speech_commands_rows(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("not a directory: " + root.string());
  const auto val = read_list(root / "validation_list.txt");
  const auto test = read_list(root / "testing_list.txt");
  const auto& known = speech_command_classes();
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<ManifestRow> rows;
  for (const auto& dir : dirs) {
    const std::string name = dir.filename().string();
    if (name.starts_with('_') || name.starts_with('.')) continue;
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw DataError("unknown class directory '" + name + "' in " + root.string());
    }
    std::vector<std::string> files;
    for (const auto& f : std::filesystem::directory_iterator(dir)) {
      if (f.is_regular_file() && f.path().extension() == ".wav") files.push_back(name + "/" + f.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& rel : files) {
      ManifestRow row;
      row.path = rel;
      row.split = val.count(rel) ? Split::kVal : (test.count(rel) ? Split::kTest : Split::kTrain);
      row.tags = {name};
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

LabeledSet load_speech_commands(const std::filesystem::path& root) {
  const auto rows = speech_commands_rows(root);
  TagVocabulary vocab;
  vocab.tags = speech_command_classes();
  vocab.counts.assign(vocab.tags.size(), 0);
  for (const auto& row : rows) {
    if (row.split == Split::kTrain) ++vocab.counts[vocab.index_of(row.tags[0])];
  }
  return label_rows(rows, vocab);
}

void check_disjoint(const std::vector<TaggedClip>& clips) {
  std::unordered_map<std::string, Split> seen;
  for (const auto& clip : clips) {
    auto [it, inserted] = seen.emplace(clip.path, clip.split);
    if (!inserted && it->second != clip.split) {
      throw DataError("clip " + clip.path + " appears in both " + to_string(it->second) + " and " +
                      to_string(clip.split));
    }
  }
}

std::vector<TaggedClip> select_split(const std::vector<TaggedClip>& clips, Split split) {
  std::vector<TaggedClip> out;
  std::copy_if(clips.begin(), clips.end(), std::back_inserter(out), [split](const auto& c) { return c.split == split; });
  return out;
}

AudioClip load_audio_16k(const std::filesystem::path& path) {
  AudioClip clip;
  try {
    clip = decode_wav(path);
  } catch (const AudioError& e) {
    throw DataError(e.what());
  }
  if (clip.sample_rate != kSampleRate) {
    throw DataError(path.string() + ": expected 16 kHz audio, found " + std::to_string(clip.sample_rate) +
                    " Hz (convert offline)");
  }
  return clip;
}

AudioClip load_audio_fixed(const std::filesystem::path& path, double seconds) {
  auto clip = load_audio_16k(path);
  clip.samples.resize(static_cast<std::size_t>(std::llround(seconds * kSampleRate)), 0.0f);
  return clip;
}

std::filesystem::path resolve_clip_path(const std::filesystem::path& manifest, const std::string& clip_path) {
  std::filesystem::path p(clip_path);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

}  // namespace tmnn
