#pragma once

#include <span>
#include <vector>

#include "streamcap/types.hpp"

namespace streamcap::codec {

struct TimedEvent {
  double start_sec = 0.0;
  double end_sec = 0.0;
  std::vector<TokenId> words;

  friend bool operator==(const TimedEvent&, const TimedEvent&) = default;
};

// Augmented vocabulary: word ids [0, n_words), then n_time_bins time tokens
// uniformly quantizing [0, duration_sec].
struct VocabSpec {
  int n_words = 0;
  int n_time_bins = 100;
  double duration_sec = 0.0;

  TokenId first_time_token() const { return n_words; }
  TokenId size() const { return n_words + n_time_bins; }
  bool is_time(TokenId t) const { return t >= n_words && t < size(); }
  bool is_word(TokenId t) const { return t >= 0 && t < n_words; }
  double bin_width() const { return duration_sec / n_time_bins; }
};

void validate(const VocabSpec& spec);
// 0 <= start < end <= duration, every word id in range.
void validate(const TimedEvent& event, const VocabSpec& spec);

// Time-token id of the bin containing t (clamped to the last bin).
TokenId quantize_time(double t_sec, const VocabSpec& spec);
// Center of the token's bin, in seconds.
double dequantize_time(TokenId token, const VocabSpec& spec);

// Stable sort by start, then end.
std::vector<TimedEvent> sort_by_start(std::vector<TimedEvent> events);

// [w_s, w_e, words...] per event, events ordered by start time. An event
// whose endpoints land in one bin is widened to two adjacent bins: the end
// moves up a bin, or the start moves down when that keeps both endpoints
// closer and start tokens stay nondecreasing.
std::vector<TokenId> encode_events(std::span<const TimedEvent> events, const VocabSpec& spec);

struct DecodeDiagnostics {
  int dropped_fragments = 0;  // lone time tokens, stray words, w_e <= w_s, invalid ids
  int reordered_times = 0;    // groups that arrived earlier-starting than a previous group

  friend bool operator==(const DecodeDiagnostics&, const DecodeDiagnostics&) = default;
};

struct DecodeResult {
  std::vector<TimedEvent> events;  // start-sorted
  DecodeDiagnostics diagnostics;
};

// Lenient greedy parse of untrusted model output; never throws on content.
DecodeResult decode_tokens(std::span<const TokenId> tokens, const VocabSpec& spec);

}  // namespace streamcap::codec
