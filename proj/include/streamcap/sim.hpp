#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "streamcap/codec.hpp"
#include "streamcap/memory.hpp"
#include "streamcap/metrics.hpp"
#include "streamcap/scheduler.hpp"

namespace streamcap::sim {

using codec::TimedEvent;

// Frames [start_frame, end_frame) show one concept.
struct PlantedEvent {
  int start_frame = 0;
  int end_frame = 0;
  int concept_id = 0;
};

struct StreamSpec {
  int num_frames = 64;
  int tokens_per_frame = 16;
  int dim = 8;
  double fps = 1.0;
  std::vector<PlantedEvent> events;
  std::map<int, std::vector<float>> concepts;  // concept id -> center
  std::vector<float> background;               // shown when no event is active
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  // Events inside [0, T], non-overlapping, known concepts; all centers
  // (background included) pairwise further apart than 6 * noise_sigma.
  void validate() const;
  double min_center_gap() const;
};

struct PlantedOptions {
  int num_frames = 64;
  int tokens_per_frame = 16;
  int dim = 8;
  int num_concepts = 5;
  double noise_sigma = 0.05;
  double fps = 1.0;
  std::uint64_t seed = 0;
  // One event spanning the whole stream (requires num_concepts == 1).
  bool full_coverage = false;
};

// Random separable concept centers, one event per concept in random order
// with background gaps between events.
StreamSpec make_planted_spec(const PlantedOptions& opts);

struct OracleCodebook {
  std::map<int, std::vector<float>> concepts;
  std::vector<float> background;
  std::map<int, std::vector<TokenId>> captions;  // concept id -> word ids
  double radius = 0.0;
  int n_words = 0;

  // Nearest entry (background included) within the radius; nullopt for
  // background or when nothing is close enough.
  std::optional<int> classify(const float* token, int dim) const;
  std::optional<int> concept_of(const std::vector<TokenId>& words) const;
};

// 3 * sigma * sqrt(D) + half the smallest gap between centers.
double detection_radius(const StreamSpec& spec);

// Concept k is captioned with four words unique to it.
OracleCodebook make_codebook(const StreamSpec& spec);
std::vector<std::string> codebook_words(const OracleCodebook& codebook);

struct GeneratedStream {
  memory::TokenStream stream;
  std::vector<TimedEvent> events;  // start-sorted ground truth
};

// Frame tokens are the active concept's center (background when none) plus
// isotropic gaussian noise. Deterministic in spec.seed.
GeneratedStream gen_stream(const StreamSpec& spec, const OracleCodebook& codebook);

// First and last frame (0-based) at which each concept was observed.
struct ConceptTimeline {
  std::map<int, std::pair<int, int>> span;
  void observe(int concept_id, int frame);
};

// Stand-in for the caption decoder at a decoding point. Detects concepts
// present in memory, and emits an event for each detected concept that is
// finished (not observed in the latest frame, unless this is the final
// point) and not already in history.
std::vector<TimedEvent> oracle_decode(const memory::MemoryState& memory, const OracleCodebook& codebook,
                                      int point_frame, int num_frames, double fps,
                                      const std::vector<TimedEvent>& history,
                                      const ConceptTimeline& timeline);

struct PipelineResult {
  std::vector<TimedEvent> predictions;
  std::vector<int> detected_concepts;  // sorted, unique
  memory::UpdateStats stats;
};

// init -> per-frame update -> decode at points -> accumulate.
PipelineResult run_pipeline(const GeneratedStream& gen, const OracleCodebook& codebook,
                            const memory::MemoryConfig& cfg, const scheduler::DecodingSchedule& schedule);

struct VariantResult {
  std::string name;
  memory::MemoryConfig config;
  metrics::EvalReport report;
  double concept_recall = 0.0;
  PipelineResult pipeline;
};

std::vector<VariantResult> run_experiment(const StreamSpec& spec,
                                          const std::vector<memory::MemoryConfig>& variants,
                                          const scheduler::DecodingSchedule& schedule);

double concept_recall(const PipelineResult& result, const StreamSpec& spec);

}  // namespace streamcap::sim
