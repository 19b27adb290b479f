#include "streamcap/codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace streamcap::codec {

void validate(const VocabSpec& spec) {
  if (spec.n_words < 1) throw InvalidArgument("vocabulary needs at least one word");
  if (spec.n_time_bins < 2) throw InvalidArgument("need at least two time bins");
  if (!(spec.duration_sec > 0.0) || !std::isfinite(spec.duration_sec))
    throw InvalidArgument("video duration must be positive");
}

void validate(const TimedEvent& e, const VocabSpec& spec) {
  if (!std::isfinite(e.start_sec) || !std::isfinite(e.end_sec))
    throw InvalidArgument("event times must be finite");
  if (e.start_sec < 0.0 || e.start_sec >= e.end_sec || e.end_sec > spec.duration_sec)
    throw InvalidArgument("event must satisfy 0 <= start < end <= duration (got " +
                          std::to_string(e.start_sec) + ", " + std::to_string(e.end_sec) + ")");
  for (TokenId w : e.words)
    if (!spec.is_word(w)) throw InvalidArgument("word id " + std::to_string(w) + " out of range");
}

TokenId quantize_time(double t_sec, const VocabSpec& spec) {
  validate(spec);
  if (!(t_sec >= 0.0)) throw InvalidArgument("time must be non-negative");
  const double pos = std::floor(t_sec / spec.duration_sec * spec.n_time_bins);
  const int bin = pos >= spec.n_time_bins ? spec.n_time_bins - 1 : static_cast<int>(pos);
  return spec.first_time_token() + bin;
}

double dequantize_time(TokenId token, const VocabSpec& spec) {
  validate(spec);
  if (!spec.is_time(token)) throw InvalidArgument("token " + std::to_string(token) + " is not a time token");
  const int bin = token - spec.first_time_token();
  return (bin + 0.5) / spec.n_time_bins * spec.duration_sec;
}

std::vector<TimedEvent> sort_by_start(std::vector<TimedEvent> events) {
  std::stable_sort(events.begin(), events.end(), [](const TimedEvent& a, const TimedEvent& b) {
    if (a.start_sec != b.start_sec) return a.start_sec < b.start_sec;
    return a.end_sec < b.end_sec;
  });
  return events;
}

std::vector<TokenId> encode_events(std::span<const TimedEvent> events, const VocabSpec& spec) {
  validate(spec);
  for (const auto& e : events) validate(e, spec);
  const auto sorted = sort_by_start({events.begin(), events.end()});

  std::vector<TokenId> out;
  TokenId last_ws = spec.first_time_token();
  for (const auto& e : sorted) {
    TokenId ws = quantize_time(e.start_sec, spec);
    TokenId we = quantize_time(e.end_sec, spec);
    if (we <= ws) {
      // Same bin: widen to two adjacent bins, by moving the start down or the
      // end up, whichever keeps both endpoints closer. Moving the start down
      // must not put it before an earlier event's start token.
      auto err = [&](TokenId s, TokenId t) {
        return std::max(std::abs(dequantize_time(s, spec) - e.start_sec),
                        std::abs(dequantize_time(t, spec) - e.end_sec));
      };
      const bool can_raise = we + 1 < spec.size();
      const bool can_lower = ws - 1 >= last_ws;
      if (can_lower && (!can_raise || err(ws - 1, ws) < err(ws, ws + 1))) {
        --ws;
      } else if (can_raise) {
        ++we;
      } else {
        --ws;
      }
    }
    last_ws = std::max(last_ws, ws);
    out.push_back(ws);
    out.push_back(we);
    out.insert(out.end(), e.words.begin(), e.words.end());
  }
  return out;
}

DecodeResult decode_tokens(std::span<const TokenId> tokens, const VocabSpec& spec) {
  validate(spec);
  DecodeResult r;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  auto skip_to_time = [&] {
    while (i < n && !spec.is_time(tokens[i])) ++i;
  };

  while (i < n) {
    if (!spec.is_time(tokens[i])) {
      skip_to_time();
      ++r.diagnostics.dropped_fragments;
      continue;
    }
    if (i + 1 >= n || !spec.is_time(tokens[i + 1])) {
      ++i;
      skip_to_time();
      ++r.diagnostics.dropped_fragments;
      continue;
    }
    const TokenId ws = tokens[i];
    const TokenId we = tokens[i + 1];
    i += 2;
    TimedEvent e;
    bool bad = we <= ws;
    while (i < n && !spec.is_time(tokens[i])) {
      if (spec.is_word(tokens[i])) e.words.push_back(tokens[i]);
      else bad = true;
      ++i;
    }
    if (bad) {
      ++r.diagnostics.dropped_fragments;
      continue;
    }
    e.start_sec = dequantize_time(ws, spec);
    e.end_sec = dequantize_time(we, spec);
    r.events.push_back(std::move(e));
  }

  double latest = -1.0;
  for (const auto& e : r.events) {
    if (e.start_sec < latest) ++r.diagnostics.reordered_times;
    latest = std::max(latest, e.start_sec);
  }
  // Start ties keep stream order: the encoder emits them in event order.
  std::stable_sort(r.events.begin(), r.events.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.start_sec < b.start_sec; });
  return r;
}

}  // namespace streamcap::codec
