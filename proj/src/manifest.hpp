#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mswave {

struct UtteranceRecord {
  std::string utterance_id;
  std::string speaker_id;
  std::string transcript;
  // Relative to the data root the manifest was built from.
  std::string audio_path;

  bool operator==(const UtteranceRecord&) const = default;
};

// Dense speaker index assignment; the index is the embedding-table row.
class SpeakerRegistry {
 public:
  SpeakerRegistry() = default;
  // Sorts and de-duplicates.
  explicit SpeakerRegistry(std::vector<std::string> speaker_ids);

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t index) const;
  std::optional<int> find(std::string_view speaker_id) const;
  // Throws Error(NotFound) for unknown ids.
  int index_of(std::string_view speaker_id) const;

  // One id per line.
  std::string serialize() const;
  static SpeakerRegistry parse(std::string_view text);

  bool operator==(const SpeakerRegistry&) const = default;

 private:
  std::vector<std::string> ids_;
};

struct Manifest {
  std::vector<UtteranceRecord> records;
  SpeakerRegistry registry;
  // Audio files without transcripts and vice versa, plus empty transcripts.
  std::size_t skipped = 0;
};

// Scans `data_root/<speaker>/<stem>.wav` + `<stem>.txt` pairs. Records are
// ordered by (speaker_id, stem) so the scan is independent of directory order.
Manifest build_manifest(const std::string& data_root);

// `utterance_id \t speaker_id \t audio_path \t transcript` per line.
std::string serialize_manifest(const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> parse_manifest(std::string_view text);
void save_manifest(const std::vector<UtteranceRecord>& records, const std::string& path);
Manifest load_manifest(const std::string& path);

}  // namespace mswave
