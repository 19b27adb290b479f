#include "streamcap/scheduler.hpp"

#include <algorithm>
#include <string>

#include "streamcap/rng.hpp"

namespace streamcap::scheduler {

DecodingSchedule make_decoding_points(int num_frames, int stride) {
  if (num_frames < 1) throw InvalidArgument("frame count must be positive");
  if (stride < 1 || stride > num_frames)
    throw InvalidArgument("stride must lie in [1, T], got " + std::to_string(stride));
  DecodingSchedule s;
  s.stride_frames = stride;
  for (int d = stride; d <= num_frames; d += stride) s.points.push_back(d);
  s.points.back() = num_frames;
  return s;
}

DecodingSchedule make_decoding_points_by_count(int num_frames, int count) {
  if (num_frames < 1) throw InvalidArgument("frame count must be positive");
  if (count < 1 || count > num_frames)
    throw InvalidArgument("decoding point count must lie in [1, T], got " + std::to_string(count));
  DecodingSchedule s;
  for (int k = 1; k <= count; ++k)
    s.points.push_back(static_cast<int>(static_cast<long long>(k) * num_frames / count));
  return s;
}

std::vector<TimedEvent> target_set(std::span<const TimedEvent> events, int point_frame, double fps) {
  if (!(fps > 0.0)) throw InvalidArgument("fps must be positive");
  const double cutoff = static_cast<double>(point_frame) / fps;
  std::vector<TimedEvent> out;
  for (const auto& e : events)
    if (e.end_sec <= cutoff) out.push_back(e);
  return codec::sort_by_start(std::move(out));
}

Split split_prefix_target(std::span<const TimedEvent> events, std::uint64_t seed) {
  Split s;
  if (events.empty()) return s;
  Rng rng(seed);
  const auto j = static_cast<std::size_t>(rng.below(events.size()));  // j - 1 in 0-based terms
  s.prefix.assign(events.begin(), events.begin() + static_cast<std::ptrdiff_t>(j));
  s.target.assign(events.begin() + static_cast<std::ptrdiff_t>(j), events.end());
  return s;
}

Split augment_prefix(std::vector<TimedEvent> prefix, std::vector<TimedEvent> target,
                     double drop_prob, std::uint64_t seed) {
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0))
    throw InvalidArgument("drop probability must lie in [0, 1]");
  Rng rng(seed);
  Split s;
  for (auto& e : prefix) {
    if (rng.bernoulli(drop_prob)) target.push_back(std::move(e));
    else s.prefix.push_back(std::move(e));
  }
  s.target = codec::sort_by_start(std::move(target));
  return s;
}

std::string_view to_string(PrefixMode m) {
  switch (m) {
    case PrefixMode::kNone: return "none";
    case PrefixMode::kCaptions: return "captions";
    case PrefixMode::kCaptionsAndTime: return "captions_and_time";
  }
  return "unknown";
}

PrefixMode parse_prefix_mode(std::string_view name) {
  for (auto m : {PrefixMode::kNone, PrefixMode::kCaptions, PrefixMode::kCaptionsAndTime})
    if (to_string(m) == name) return m;
  throw InvalidArgument("unknown prefix mode '" + std::string(name) + "'");
}

std::vector<TokenId> build_prefix_tokens(std::span<const TimedEvent> predictions, PrefixMode mode,
                                         const codec::VocabSpec& spec) {
  switch (mode) {
    case PrefixMode::kNone:
      return {};
    case PrefixMode::kCaptions: {
      std::vector<TokenId> out;
      for (const auto& e : codec::sort_by_start({predictions.begin(), predictions.end()}))
        out.insert(out.end(), e.words.begin(), e.words.end());
      return out;
    }
    case PrefixMode::kCaptionsAndTime:
      return codec::encode_events(predictions, spec);
  }
  return {};
}

std::vector<TimedEvent> accumulate_predictions(std::span<const TimedEvent> previous,
                                               std::span<const TimedEvent> fresh,
                                               const codec::VocabSpec& spec) {
  struct Key {
    TokenId start, end;
    const std::vector<TokenId>* words;
  };
  std::vector<Key> seen;
  std::vector<TimedEvent> out;
  auto add = [&](const TimedEvent& e) {
    const Key k{codec::quantize_time(e.start_sec, spec), codec::quantize_time(e.end_sec, spec), &e.words};
    for (const auto& s : seen)
      if (s.start == k.start && s.end == k.end && *s.words == *k.words) return;
    seen.push_back(k);
    out.push_back(e);
  };
  for (const auto& e : previous) add(e);
  for (const auto& e : fresh) add(e);
  return codec::sort_by_start(std::move(out));
}

std::vector<DecodingExample> make_training_examples(std::span<const TimedEvent> events,
                                                    const DecodingSchedule& schedule, double fps,
                                                    double drop_prob, std::uint64_t seed) {
  std::vector<DecodingExample> out;
  for (int point : schedule.points) {
    DecodingExample ex;
    ex.point_frame = point;
    ex.seed = Rng::derive(seed, static_cast<std::uint64_t>(point));
    auto split = split_prefix_target(target_set(events, point, fps), ex.seed);
    auto aug = augment_prefix(std::move(split.prefix), std::move(split.target), drop_prob,
                              Rng::derive(ex.seed, 1));
    ex.prefix = std::move(aug.prefix);
    ex.target = std::move(aug.target);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace streamcap::scheduler
