#include "manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "error.hpp"
#include "log.hpp"

namespace fs = std::filesystem;

namespace mswave {
namespace {

std::string read_text_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Collapses all whitespace runs (tabs and newlines included) to single spaces.
std::string clean_transcript(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

SpeakerRegistry::SpeakerRegistry(std::vector<std::string> speaker_ids) : ids_(std::move(speaker_ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

const std::string& SpeakerRegistry::id(std::size_t index) const {
  if (index >= ids_.size()) {
    throw Error(ErrorCode::InvalidArgument, "speaker index " + std::to_string(index) + " out of range");
  }
  return ids_[index];
}

std::optional<int> SpeakerRegistry::find(std::string_view speaker_id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), speaker_id);
  if (it == ids_.end() || *it != speaker_id) return std::nullopt;
  return static_cast<int>(it - ids_.begin());
}

int SpeakerRegistry::index_of(std::string_view speaker_id) const {
  if (auto idx = find(speaker_id)) return *idx;
  throw Error(ErrorCode::NotFound, "unknown speaker_id '" + std::string(speaker_id) + "'");
}

std::string SpeakerRegistry::serialize() const {
  std::string out;
  for (const auto& id : ids_) {
    out += id;
    out += '\n';
  }
  return out;
}

SpeakerRegistry SpeakerRegistry::parse(std::string_view text) {
  std::vector<std::string> ids;
  for (auto line : split(text, '\n')) {
    if (!line.empty()) ids.emplace_back(line);
  }
  SpeakerRegistry reg(ids);
  if (reg.size() != ids.size()) throw Error(ErrorCode::Parse, "speaker registry has duplicate ids");
  return reg;
}

Manifest build_manifest(const std::string& data_root) {
  const fs::path root(data_root);
  if (!fs::is_directory(root)) throw Error(ErrorCode::Io, "data root is not a directory: " + data_root);

  std::vector<fs::path> speaker_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) speaker_dirs.push_back(entry.path());
  }
  std::sort(speaker_dirs.begin(), speaker_dirs.end());

  Manifest manifest;
  std::vector<std::string> speakers;
  for (const auto& dir : speaker_dirs) {
    const std::string speaker = dir.filename().string();
    // stem -> (has_wav, has_txt)
    std::map<std::string, std::pair<bool, bool>> pairs;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const auto ext = entry.path().extension().string();
      const auto stem = entry.path().stem().string();
      if (ext == ".wav") pairs[stem].first = true;
      if (ext == ".txt") pairs[stem].second = true;
    }
    for (const auto& [stem, has] : pairs) {
      if (!has.first || !has.second) {
        log::warn("skipping " + speaker + "/" + stem + ": " +
                  (has.first ? "audio without transcript" : "transcript without audio"));
        ++manifest.skipped;
        continue;
      }
      auto transcript = clean_transcript(read_text_file(dir / (stem + ".txt")));
      if (transcript.empty()) {
        log::warn("skipping " + speaker + "/" + stem + ": empty transcript");
        ++manifest.skipped;
        continue;
      }
      UtteranceRecord rec;
      rec.utterance_id = speaker + "/" + stem;
      rec.speaker_id = speaker;
      rec.transcript = std::move(transcript);
      rec.audio_path = speaker + "/" + stem + ".wav";
      manifest.records.push_back(std::move(rec));
      speakers.push_back(speaker);
    }
  }
  if (manifest.records.empty()) {
    throw Error(ErrorCode::NotFound, "no usable (audio, transcript) pairs under " + data_root);
  }
  manifest.registry = SpeakerRegistry(std::move(speakers));
  return manifest;
}

std::string serialize_manifest(const std::vector<UtteranceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.utterance_id + '\t' + r.speaker_id + '\t' + r.audio_path + '\t' + r.transcript + '\n';
  }
  return out;
}

std::vector<UtteranceRecord> parse_manifest(std::string_view text) {
  std::vector<UtteranceRecord> records;
  int line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 4) {
      throw Error(ErrorCode::Parse, "manifest line " + std::to_string(line_no) + ": expected 4 tab-separated columns");
    }
    UtteranceRecord r{std::string(cols[0]), std::string(cols[1]), std::string(cols[3]), std::string(cols[2])};
    if (r.transcript.empty()) {
      throw Error(ErrorCode::Parse, "manifest line " + std::to_string(line_no) + ": empty transcript");
    }
    records.push_back(std::move(r));
  }
  return records;
}

void save_manifest(const std::vector<UtteranceRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest: " + path);
  out << serialize_manifest(records);
}

Manifest load_manifest(const std::string& path) {
  Manifest m;
  m.records = parse_manifest(read_text_file(path));
  if (m.records.empty()) throw Error(ErrorCode::NotFound, "manifest has no records: " + path);
  std::vector<std::string> speakers;
  for (const auto& r : m.records) speakers.push_back(r.speaker_id);
  m.registry = SpeakerRegistry(std::move(speakers));
  return m;
}

}  // namespace mswave
