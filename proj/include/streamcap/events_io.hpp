#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "streamcap/codec.hpp"

namespace streamcap::io {

// Plain-text vocabulary: one token per line, line number (0-based) = id.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<TokenId> find(std::string_view word) const;
  // Throws InvalidArgument for out-of-vocabulary words.
  TokenId id(std::string_view word) const;
  // Assigns the next id to unseen words.
  TokenId id_or_add(std::string_view word);
  const std::string& word(TokenId id) const;
  int size() const { return static_cast<int>(words_.size()); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Lowercases ASCII, strips ASCII punctuation, splits on whitespace.
std::vector<std::string> normalize_caption(std::string_view caption);

std::vector<TokenId> caption_to_ids(std::string_view caption, Vocabulary& vocab, bool grow);
std::string ids_to_caption(const std::vector<TokenId>& ids, const Vocabulary& vocab);

// One line of an events JSONL file:
// {"video_id": str, "start": sec, "end": sec, "caption": str [, "duration": sec]}
struct EventRecord {
  std::string video_id;
  double start = 0.0;
  double end = 0.0;
  std::string caption;
  std::optional<double> duration;
};

// Throws ParseError carrying the 1-based line number of the first bad line.
// Blank lines are skipped.
std::vector<EventRecord> read_events_jsonl(std::istream& in);
std::vector<EventRecord> read_events_jsonl(const std::filesystem::path& path);
void write_events_jsonl(std::ostream& out, const std::vector<EventRecord>& records);

// Events per video, sorted by video id.
struct VideoEvents {
  std::vector<codec::TimedEvent> events;
  double duration_sec = 0.0;  // explicit "duration" if any record gave one, else the latest end
};
std::map<std::string, VideoEvents> group_by_video(const std::vector<EventRecord>& records,
                                                  Vocabulary& vocab, bool grow_vocab);

EventRecord to_record(const std::string& video_id, const codec::TimedEvent& e, const Vocabulary& vocab);

}  // namespace streamcap::io
