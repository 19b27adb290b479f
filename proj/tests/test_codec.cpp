#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "streamcap/codec.hpp"

namespace streamcap::codec {
namespace {

VocabSpec spec100() { return VocabSpec{50, 100, 100.0}; }

TEST(Quantize, UniformGridAndClamp) {
  const auto s = spec100();
  EXPECT_EQ(quantize_time(0.0, s), 50);
  EXPECT_EQ(quantize_time(50.0, s), 100);
  EXPECT_EQ(quantize_time(100.0, s), 149);
  EXPECT_EQ(quantize_time(1e6, s), 149);
  EXPECT_THROW(quantize_time(-0.1, s), InvalidArgument);
}

TEST(Dequantize, BinCentersAndMonotone) {
  const auto s = spec100();
  EXPECT_DOUBLE_EQ(dequantize_time(50, s), 0.5);
  EXPECT_DOUBLE_EQ(dequantize_time(149, s), 99.5);
  for (TokenId t = 51; t < 150; ++t) EXPECT_GT(dequantize_time(t, s), dequantize_time(t - 1, s));
  EXPECT_THROW(dequantize_time(49, s), InvalidArgument);
  EXPECT_THROW(dequantize_time(150, s), InvalidArgument);
}

TEST(Quantize, RoundTripWithinOneBin) {
  const auto s = spec100();
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const double t = rng.uniform(0.0, 100.0);
    EXPECT_LE(std::abs(dequantize_time(quantize_time(t, s), s) - t), s.bin_width());
  }
}

TEST(Encode, EmptyAndSorted) {
  const auto s = spec100();
  EXPECT_TRUE(encode_events({}, s).empty());
  const std::vector<TimedEvent> ev{{40, 60, {3, 4}}, {10, 20, {7}}};
  const auto toks = encode_events(ev, s);
  const std::vector<TokenId> want{60, 70, 7, 90, 110, 3, 4};
  EXPECT_EQ(toks, want);
}

TEST(Encode, SameBinEventWidened) {
  const auto s = spec100();
  const std::vector<TimedEvent> ev{{10.1, 10.4, {1}}};
  const auto toks = encode_events(ev, s);
  ASSERT_EQ(toks.size(), 3u);
  EXPECT_EQ(toks[1], toks[0] + 1);
  const std::vector<TimedEvent> near_end{{10.6, 10.9, {1}}};
  const auto t2 = encode_events(near_end, s);
  EXPECT_EQ(t2[1], t2[0] + 1);
  const std::vector<TimedEvent> last{{99.6, 99.9, {1}}};
  const auto t3 = encode_events(last, s);
  EXPECT_EQ(t3[0], 148);
  EXPECT_EQ(t3[1], 149);
}

TEST(Encode, RejectsInvalidEvents) {
  const auto s = spec100();
  const std::vector<TimedEvent> backwards{{20, 10, {1}}};
  EXPECT_THROW(encode_events(backwards, s), InvalidArgument);
  const std::vector<TimedEvent> oob{{10, 120, {1}}};
  EXPECT_THROW(encode_events(oob, s), InvalidArgument);
  const std::vector<TimedEvent> bad_word{{10, 20, {50}}};
  EXPECT_THROW(encode_events(bad_word, s), InvalidArgument);
}

TEST(Encode, RangeSafetyAndSortedGroups) {
  const auto s = spec100();
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ev = oracle::random_events(rng, 1 + static_cast<int>(rng.below(6)), 100.0, 50);
    const auto toks = encode_events(ev, s);
    TokenId last_start = -1;
    for (size_t i = 0; i < toks.size();) {
      ASSERT_TRUE(s.is_time(toks[i]) && s.is_time(toks[i + 1]));
      EXPECT_LT(toks[i], toks[i + 1]);
      EXPECT_GE(toks[i], last_start);
      last_start = toks[i];
      i += 2;
      while (i < toks.size() && s.is_word(toks[i])) ++i;
    }
    for (TokenId t : toks) EXPECT_LT(t, s.size());
  }
}

TEST(Decode, WellFormedAndEmpty) {
  const auto s = spec100();
  const std::vector<TokenId> toks{60, 70, 7, 90, 110, 3, 4};
  const auto r = decode_tokens(toks, s);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_EQ(r.events[0].words, (std::vector<TokenId>{7}));
  EXPECT_DOUBLE_EQ(r.events[0].start_sec, 10.5);
  EXPECT_DOUBLE_EQ(r.events[1].end_sec, 60.5);
  EXPECT_EQ(r.diagnostics, DecodeDiagnostics{});
  const auto e = decode_tokens({}, s);
  EXPECT_TRUE(e.events.empty());
  EXPECT_EQ(e.diagnostics, DecodeDiagnostics{});
}

TEST(Decode, TrailingLoneTimeToken) {
  const auto s = spec100();
  const std::vector<TokenId> toks{60, 70, 7, 90};
  const auto r = decode_tokens(toks, s);
  EXPECT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.diagnostics.dropped_fragments, 1);
}

TEST(Decode, MalformedFragmentsDroppedAndCounted) {
  const auto s = spec100();
  // stray word, reversed times, invalid id, then a valid group
  const std::vector<TokenId> toks{5, 80, 70, 9, -3, 500, 60, 61, 1};
  const auto r = decode_tokens(toks, s);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].words, (std::vector<TokenId>{1}));
  EXPECT_EQ(r.diagnostics.dropped_fragments, 2);  // stray word, then the bad group
}

TEST(Decode, OutOfOrderGroupsSortedAndCounted) {
  const auto s = spec100();
  const std::vector<TokenId> toks{90, 110, 3, 60, 70, 7};
  const auto r = decode_tokens(toks, s);
  ASSERT_EQ(r.events.size(), 2u);
  EXPECT_LT(r.events[0].start_sec, r.events[1].start_sec);
  EXPECT_EQ(r.diagnostics.reordered_times, 1);
}

TEST(RoundTrip, RandomEventLists) {
  const auto s = spec100();
  Rng rng(33);
  for (int trial = 0; trial < 500; ++trial) {
    const auto ev = sort_by_start(oracle::random_events(rng, static_cast<int>(rng.below(8)), 100.0, 50));
    const auto r = decode_tokens(encode_events(ev, s), s);
    ASSERT_EQ(r.events.size(), ev.size());
    for (size_t i = 0; i < ev.size(); ++i) {
      EXPECT_EQ(r.events[i].words, ev[i].words);
      EXPECT_LE(std::abs(r.events[i].start_sec - ev[i].start_sec), 1.0 + 1e-9);
      EXPECT_LE(std::abs(r.events[i].end_sec - ev[i].end_sec), 1.0 + 1e-9);
    }
  }
}

TEST(RoundTrip, ShortEventAtStreamEdgeCanExceedOneBin) {
  // Both endpoints in the last bin: widening moves the start back a bin, and
  // its center then sits 1.5 bins from a start near the end of that bin.
  const auto s = spec100();
  const std::vector<TimedEvent> ev{{99.95, 99.99, {2}}};
  const auto r = decode_tokens(encode_events(ev, s), s);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_NEAR(std::abs(r.events[0].start_sec - 99.95), 1.45, 1e-9);
}

TEST(SortByStart, StableWithEndTieBreak) {
  std::vector<TimedEvent> ev{{5, 9, {1}}, {5, 7, {2}}, {1, 2, {3}}, {5, 7, {4}}};
  const auto s = sort_by_start(ev);
  EXPECT_EQ(s[0].words[0], 3);
  EXPECT_EQ(s[1].words[0], 2);
  EXPECT_EQ(s[2].words[0], 4);
  EXPECT_EQ(s[3].words[0], 1);
}

TEST(VocabSpec, Validation) {
  EXPECT_THROW(validate(VocabSpec{10, 1, 10.0}), InvalidArgument);
  EXPECT_THROW(validate(VocabSpec{10, 100, 0.0}), InvalidArgument);
  EXPECT_NO_THROW(validate(spec100()));
}

}  // namespace
}  // namespace streamcap::codec
