#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "streamcap/sim.hpp"

namespace streamcap::sim {
namespace {

memory::MemoryConfig clustering(int K) {
  memory::MemoryConfig c;
  c.memory_size = K;
  return c;
}

PlantedOptions small(std::uint64_t seed, int concepts = 5) {
  PlantedOptions o;
  o.num_frames = 64;
  o.tokens_per_frame = 16;
  o.dim = 8;
  o.num_concepts = concepts;
  o.noise_sigma = 0.05;
  o.seed = seed;
  return o;
}

TEST(PlantedSpec, ValidAndSeparable) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = make_planted_spec(small(seed));
    EXPECT_NO_THROW(spec.validate());
    EXPECT_EQ(spec.events.size(), 5u);
    EXPECT_GT(spec.min_center_gap(), 6.0 * spec.noise_sigma);
  }
}

TEST(PlantedSpec, RejectsOverlapAndCrowding) {
  auto spec = make_planted_spec(small(1));
  spec.events.push_back({spec.events[0].start_frame, spec.events[0].end_frame, 0});
  EXPECT_THROW(spec.validate(), InvalidArgument);
  auto crowded = make_planted_spec(small(1));
  crowded.concepts[1] = crowded.concepts[0];
  EXPECT_THROW(crowded.validate(), InvalidArgument);
}

TEST(GenStream, ZeroNoiseTokensAreCenters) {
  auto o = small(2);
  o.noise_sigma = 0.0;
  const auto spec = make_planted_spec(o);
  const auto gen = gen_stream(spec, make_codebook(spec));
  for (const auto& e : spec.events) {
    const auto& c = spec.concepts.at(e.concept_id);
    for (int t = e.start_frame; t < e.end_frame; ++t)
      for (int i = 0; i < spec.tokens_per_frame; ++i)
        for (int d = 0; d < spec.dim; ++d) ASSERT_EQ(gen.stream.frames[t](i, d), c[d]);
  }
}

TEST(GenStream, DeterministicInSeed) {
  const auto spec = make_planted_spec(small(3));
  const auto cb = make_codebook(spec);
  const auto a = gen_stream(spec, cb), b = gen_stream(spec, cb);
  for (int t = 0; t < spec.num_frames; ++t) EXPECT_EQ(a.stream.frames[t], b.stream.frames[t]);
  EXPECT_EQ(a.events, b.events);
  const auto other = gen_stream(make_planted_spec(small(4)), cb);
  EXPECT_NE(a.stream.frames[0], other.stream.frames[0]);
}

TEST(GenStream, SegmentMeansNearCenters) {
  const auto spec = make_planted_spec(small(5));
  const auto gen = gen_stream(spec, make_codebook(spec));
  for (const auto& e : spec.events) {
    const int n = e.end_frame - e.start_frame;
    const double tol = 3.0 * spec.noise_sigma / std::sqrt(static_cast<double>(n * spec.tokens_per_frame));
    for (int d = 0; d < spec.dim; ++d) {
      double sum = 0.0;
      for (int t = e.start_frame; t < e.end_frame; ++t) sum += gen.stream.frames[t].col(d).cast<double>().sum();
      EXPECT_NEAR(sum / (n * spec.tokens_per_frame), spec.concepts.at(e.concept_id)[d], tol);
    }
  }
}

TEST(GenStream, GroundTruthEventsValid) {
  const auto spec = make_planted_spec(small(6));
  const auto cb = make_codebook(spec);
  const auto gen = gen_stream(spec, cb);
  const codec::VocabSpec vs{cb.n_words, 100, gen.stream.duration_sec};
  for (const auto& e : gen.events) EXPECT_NO_THROW(codec::validate(e, vs));
  for (size_t i = 1; i < gen.events.size(); ++i) EXPECT_LE(gen.events[i - 1].start_sec, gen.events[i].start_sec);
}

TEST(Codebook, CaptionsAreBijective) {
  const auto spec = make_planted_spec(small(7));
  const auto cb = make_codebook(spec);
  for (const auto& [id, words] : cb.captions) EXPECT_EQ(cb.concept_of(words), id);
  const auto names = codebook_words(cb);
  EXPECT_EQ(static_cast<int>(names.size()), cb.n_words);
  EXPECT_EQ(names[cb.captions.at(2)[0]], "someone2");
}

TEST(OracleDecode, DetectsExactCenterIgnoresBackground) {
  const auto spec = make_planted_spec(small(8));
  const auto cb = make_codebook(spec);
  memory::MemoryState m;
  m.centers.resize(2, spec.dim);
  for (int d = 0; d < spec.dim; ++d) {
    m.centers(0, d) = spec.concepts.at(3)[d];
    m.centers(1, d) = spec.background[d];
  }
  m.weights = Vector::Ones(2);
  m.frames_seen = 10;
  ConceptTimeline tl;
  tl.observe(3, 2);
  tl.observe(3, 5);
  const auto out = oracle_decode(m, cb, 10, 64, 1.0, {}, tl);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].words, cb.captions.at(3));
  EXPECT_EQ(out[0].start_sec, 2.0);
  EXPECT_EQ(out[0].end_sec, 6.0);
  EXPECT_TRUE(oracle_decode(m, cb, 10, 64, 1.0, out, tl).empty());  // already in history

  memory::MemoryState bg = m;
  for (int d = 0; d < spec.dim; ++d) bg.centers(0, d) = spec.background[d];
  EXPECT_TRUE(oracle_decode(bg, cb, 10, 64, 1.0, {}, tl).empty());
}

// True when every concept, at its arrival, is nearer the background than any
// concept shown before it. Otherwise its tokens are absorbed by the heavier,
// earlier center and the clustering memory never forms a center for it.
bool arrivals_nearest_background(const StreamSpec& spec) {
  auto dist = [](const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0.0;
    for (size_t d = 0; d < a.size(); ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
    return s;
  };
  auto events = spec.events;
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.start_frame < b.start_frame; });
  for (size_t i = 0; i < events.size(); ++i) {
    const auto& c = spec.concepts.at(events[i].concept_id);
    for (size_t j = 0; j < i; ++j)
      if (dist(c, spec.concepts.at(events[j].concept_id)) < dist(c, spec.background)) return false;
  }
  return true;
}

TEST(Pipeline, ThreeConceptStreamsRecoveredWhenArrivalsReachBackground) {
  int clean = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto spec = make_planted_spec(small(seed, 3));
    if (!arrivals_nearest_background(spec)) continue;
    ++clean;
    const auto cb = make_codebook(spec);
    const auto r = run_pipeline(gen_stream(spec, cb), cb, clustering(32), scheduler::make_decoding_points(64, 32));
    EXPECT_EQ(concept_recall(r, spec), 1.0) << "seed " << seed;
  }
  EXPECT_GE(clean, 10);
}

TEST(Pipeline, SingleConceptEveryVariantPerfect) {
  auto o = small(10, 1);
  o.full_coverage = true;
  const auto spec = make_planted_spec(o);
  std::vector<memory::MemoryConfig> variants;
  for (auto v : {memory::Variant::kClustering, memory::Variant::kEma, memory::Variant::kSpatialPool,
                 memory::Variant::kTemporalPool, memory::Variant::kPairwiseMerge, memory::Variant::kNone}) {
    auto c = clustering(v == memory::Variant::kClustering || v == memory::Variant::kPairwiseMerge ? 32 : 16);
    c.variant = v;
    variants.push_back(c);
  }
  for (const auto& r : run_experiment(spec, variants, scheduler::make_decoding_points(64, 32))) {
    EXPECT_EQ(r.concept_recall, 1.0) << r.name;
    EXPECT_EQ(r.report.f1_avg, 1.0) << r.name;
  }
}

TEST(Pipeline, ZeroNoiseMemoryHoldsEveryConceptCenter) {
  // Concepts on distinct axes at distance 1 from the origin background: each
  // new concept is nearer the background than any earlier concept, so it
  // takes over a spare background center.
  StreamSpec spec;
  spec.num_frames = 40;
  spec.tokens_per_frame = 4;
  spec.dim = 4;
  spec.noise_sigma = 0.0;
  spec.background = {0, 0, 0, 0};
  for (int k = 0; k < 4; ++k) {
    std::vector<float> c(4, 0.0f);
    c[k] = 1.0f;
    spec.concepts[k] = c;
    spec.events.push_back({4 + 9 * k, 10 + 9 * k, k});
  }
  const auto cb = make_codebook(spec);
  const auto gen = gen_stream(spec, cb);
  memory::StreamingMemory mem(clustering(8), 4, 4);
  for (const auto& f : gen.stream.frames) mem.push(f);
  const auto snap = mem.snapshot();
  for (const auto& [id, c] : spec.concepts) {
    bool found = false;
    for (int k = 0; k < snap.size() && !found; ++k) {
      bool eq = true;
      for (int d = 0; d < 4; ++d) eq &= snap.centers(k, d) == c[d];
      found = eq;
    }
    EXPECT_TRUE(found) << "concept " << id;
  }
}

TEST(Experiment, ReproducibleUnderSeed) {
  const auto spec = make_planted_spec(small(11));
  const std::vector<memory::MemoryConfig> v{clustering(32)};
  const auto s = scheduler::make_decoding_points(64, 32);
  const auto a = run_experiment(spec, v, s), b = run_experiment(spec, v, s);
  EXPECT_EQ(a[0].pipeline.predictions, b[0].pipeline.predictions);
  EXPECT_EQ(a[0].report.to_json().dump(), b[0].report.to_json().dump());
}

}  // namespace
}  // namespace streamcap::sim
