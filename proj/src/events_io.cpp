#include "streamcap/events_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace streamcap::io {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> words) {
  for (auto& w : words) id_or_add(w);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary '" + path.string() + "'");
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (v.find(line)) throw ParseError("duplicate vocabulary entry '" + line + "'", lineno);
    v.id_or_add(line);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary '" + path.string() + "'");
  for (const auto& w : words_) out << w << '\n';
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view word) const {
  if (auto id = find(word)) return *id;
  throw InvalidArgument("word '" + std::string(word) + "' is not in the vocabulary");
}

TokenId Vocabulary::id_or_add(std::string_view word) {
  if (auto id = find(word)) return *id;
  const auto id = static_cast<TokenId>(words_.size());
  words_.emplace_back(word);
  index_.emplace(words_.back(), id);
  return id;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || id >= size()) throw InvalidArgument("word id out of range");
  return words_[id];
}

std::vector<std::string> normalize_caption(std::string_view caption) {
  std::string cleaned;
  cleaned.reserve(caption.size());
  for (char c : caption) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    cleaned.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
  }
  std::vector<std::string> out;
  std::istringstream ss(cleaned);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::vector<TokenId> caption_to_ids(std::string_view caption, Vocabulary& vocab, bool grow) {
  std::vector<TokenId> ids;
  for (const auto& w : normalize_caption(caption)) ids.push_back(grow ? vocab.id_or_add(w) : vocab.id(w));
  return ids;
}

std::string ids_to_caption(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out += ' ';
    out += vocab.word(id);
  }
  return out;
}

std::vector<EventRecord> read_events_jsonl(std::istream& in) {
  std::vector<EventRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      const json j = json::parse(line);
      EventRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.start = j.at("start").get<double>();
      r.end = j.at("end").get<double>();
      r.caption = j.at("caption").get<std::string>();
      if (j.contains("duration")) r.duration = j.at("duration").get<double>();
      if (!std::isfinite(r.start) || !std::isfinite(r.end) || r.start < 0.0 || r.start >= r.end)
        throw ParseError("event needs 0 <= start < end", lineno);
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed event record: ") + e.what(), lineno);
    }
  }
  return out;
}

std::vector<EventRecord> read_events_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return read_events_jsonl(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  }
}

void write_events_jsonl(std::ostream& out, const std::vector<EventRecord>& records) {
  for (const auto& r : records) {
    json j = {{"video_id", r.video_id}, {"start", r.start}, {"end", r.end}, {"caption", r.caption}};
    if (r.duration) j["duration"] = *r.duration;
    out << j.dump() << '\n';
  }
}

std::map<std::string, VideoEvents> group_by_video(const std::vector<EventRecord>& records,
                                                  Vocabulary& vocab, bool grow_vocab) {
  std::map<std::string, VideoEvents> out;
  std::map<std::string, double> explicit_duration;
  for (const auto& r : records) {
    auto& v = out[r.video_id];
    v.events.push_back({r.start, r.end, caption_to_ids(r.caption, vocab, grow_vocab)});
    v.duration_sec = std::max(v.duration_sec, r.end);
    if (r.duration) explicit_duration[r.video_id] = std::max(explicit_duration[r.video_id], *r.duration);
  }
  for (auto& [id, v] : out) {
    if (auto it = explicit_duration.find(id); it != explicit_duration.end())
      v.duration_sec = std::max(v.duration_sec, it->second);
    v.events = codec::sort_by_start(std::move(v.events));
  }
  return out;
}

EventRecord to_record(const std::string& video_id, const codec::TimedEvent& e, const Vocabulary& vocab) {
  return {video_id, e.start_sec, e.end_sec, ids_to_caption(e.words, vocab), std::nullopt};
}

}  // namespace streamcap::io
