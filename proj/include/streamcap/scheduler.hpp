#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "streamcap/codec.hpp"

namespace streamcap::scheduler {

using codec::TimedEvent;

// Decoding points are 1-based frame counts: point d means "after d frames".
struct DecodingSchedule {
  std::vector<int> points;  // strictly increasing, last == T
  int stride_frames = 0;    // 0 when built from a point count
};

// {S, 2S, ...} up to T, with the last point moved to T when T % S != 0.
DecodingSchedule make_decoding_points(int num_frames, int stride);
// `count` points spread uniformly: floor(k * T / count) for k = 1..count.
DecodingSchedule make_decoding_points_by_count(int num_frames, int count);

// Events that have ended by the decoding point (end <= point / fps), start-sorted.
std::vector<TimedEvent> target_set(std::span<const TimedEvent> events, int point_frame, double fps);

struct Split {
  std::vector<TimedEvent> prefix;
  std::vector<TimedEvent> target;
};

// Draws j uniformly from {1..n}: prefix = events[0, j-1), target = the rest,
// so the target is never empty. An empty input returns two empty lists.
Split split_prefix_target(std::span<const TimedEvent> events, std::uint64_t seed);

// Moves each prefix event to the target independently with probability
// drop_prob; the target is re-sorted by start time.
Split augment_prefix(std::vector<TimedEvent> prefix, std::vector<TimedEvent> target,
                     double drop_prob, std::uint64_t seed);

enum class PrefixMode { kNone, kCaptions, kCaptionsAndTime };

std::string_view to_string(PrefixMode m);
PrefixMode parse_prefix_mode(std::string_view name);

std::vector<TokenId> build_prefix_tokens(std::span<const TimedEvent> predictions, PrefixMode mode,
                                         const codec::VocabSpec& spec);

// Start-sorted union of earlier and new predictions. An event is dropped only
// if an earlier one has the same words and the same quantized start and end.
std::vector<TimedEvent> accumulate_predictions(std::span<const TimedEvent> previous,
                                               std::span<const TimedEvent> fresh,
                                               const codec::VocabSpec& spec);

struct DecodingExample {
  int point_frame = 0;
  std::vector<TimedEvent> prefix;
  std::vector<TimedEvent> target;
  std::uint64_t seed = 0;
};

// One training example per decoding point: split the finished events, then
// augment the prefix. Each point gets a seed derived from `seed`.
std::vector<DecodingExample> make_training_examples(std::span<const TimedEvent> events,
                                                    const DecodingSchedule& schedule, double fps,
                                                    double drop_prob, std::uint64_t seed);

}  // namespace streamcap::scheduler
