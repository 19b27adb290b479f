#include "streamcap/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "streamcap/rng.hpp"

namespace streamcap::sim {

namespace {

double distance(const float* a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < b.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - b[d];
    s += diff * diff;
  }
  return std::sqrt(s);
}

double distance(const std::vector<float>& a, const std::vector<float>& b) { return distance(a.data(), b); }

std::vector<float> gaussian_center(Rng& rng, int dim, double scale) {
  std::vector<float> c(dim);
  for (auto& v : c) v = static_cast<float>(scale * rng.normal());
  return c;
}

}  // namespace

double StreamSpec::min_center_gap() const {
  std::vector<const std::vector<float>*> all{&background};
  for (const auto& [id, c] : concepts) all.push_back(&c);
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) gap = std::min(gap, distance(*all[i], *all[j]));
  return gap;
}

void StreamSpec::validate() const {
  if (num_frames < 1 || tokens_per_frame < 1 || dim < 1) throw InvalidArgument("stream shape must be positive");
  if (!(fps > 0.0)) throw InvalidArgument("fps must be positive");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  if (static_cast<int>(background.size()) != dim) throw InvalidArgument("background center has wrong dimension");
  for (const auto& [id, c] : concepts) {
    if (id < 0) throw InvalidArgument("concept ids must be non-negative");
    if (static_cast<int>(c.size()) != dim) throw InvalidArgument("concept center has wrong dimension");
  }
  std::vector<PlantedEvent> sorted = events;
  std::sort(sorted.begin(), sorted.end(),
            [](const PlantedEvent& a, const PlantedEvent& b) { return a.start_frame < b.start_frame; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& e = sorted[i];
    if (e.start_frame < 0 || e.start_frame >= e.end_frame || e.end_frame > num_frames)
      throw InvalidArgument("planted event outside [0, T] or empty");
    if (!concepts.count(e.concept_id)) throw InvalidArgument("planted event uses an unknown concept");
    if (i > 0 && e.start_frame < sorted[i - 1].end_frame) throw InvalidArgument("planted events overlap");
  }
  if (!(min_center_gap() > 6.0 * noise_sigma))
    throw InvalidArgument("concept centers are not separable at this noise level");
}

StreamSpec make_planted_spec(const PlantedOptions& opts) {
  if (opts.num_concepts < 1) throw InvalidArgument("need at least one concept");
  if (opts.full_coverage && opts.num_concepts != 1)
    throw InvalidArgument("full coverage supports exactly one concept");
  const int segment = opts.num_frames / opts.num_concepts;
  if (!opts.full_coverage && segment < 4) throw InvalidArgument("too many concepts for the stream length");

  Rng rng(Rng::derive(opts.seed, 0x5eed));
  StreamSpec spec;
  spec.num_frames = opts.num_frames;
  spec.tokens_per_frame = opts.tokens_per_frame;
  spec.dim = opts.dim;
  spec.fps = opts.fps;
  spec.noise_sigma = opts.noise_sigma;
  spec.seed = opts.seed;

  const double scale = std::max(1.0, 3.0 * opts.noise_sigma * std::sqrt(static_cast<double>(opts.dim)));
  const double required = 6.0 * opts.noise_sigma * std::sqrt(static_cast<double>(opts.dim));
  for (int attempt = 0;; ++attempt) {
    spec.background = gaussian_center(rng, opts.dim, scale);
    spec.concepts.clear();
    for (int k = 0; k < opts.num_concepts; ++k) spec.concepts[k] = gaussian_center(rng, opts.dim, scale);
    if (spec.min_center_gap() > required) break;
    if (attempt > 10000) throw InvalidArgument("could not draw separable concept centers");
  }

  if (opts.full_coverage) {
    spec.events.push_back({0, opts.num_frames, 0});
  } else {
    std::vector<int> order(opts.num_concepts);
    for (int k = 0; k < opts.num_concepts; ++k) order[k] = k;
    for (int k = opts.num_concepts - 1; k > 0; --k)
      std::swap(order[k], order[rng.below(static_cast<std::uint64_t>(k) + 1)]);
    for (int k = 0; k < opts.num_concepts; ++k) {
      const int seg_start = k * segment;
      const int seg_end = seg_start + segment;
      const int start = seg_start + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(segment / 4)));
      const int length = std::max(2, segment / 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(segment / 4) + 1)));
      spec.events.push_back({start, std::min(start + length, seg_end), order[k]});
    }
  }
  spec.validate();
  return spec;
}

double detection_radius(const StreamSpec& spec) {
  return 3.0 * spec.noise_sigma * std::sqrt(static_cast<double>(spec.dim)) + 0.5 * spec.min_center_gap();
}

OracleCodebook make_codebook(const StreamSpec& spec) {
  OracleCodebook cb;
  cb.concepts = spec.concepts;
  cb.background = spec.background;
  cb.radius = detection_radius(spec);
  int next = 0;
  for (const auto& [id, c] : spec.concepts) {
    auto& words = cb.captions[id];
    for (int w = 0; w < 4; ++w) words.push_back(next++);
  }
  cb.n_words = next;
  return cb;
}

std::vector<std::string> codebook_words(const OracleCodebook& codebook) {
  std::vector<std::string> words(codebook.n_words);
  static const char* kRoles[] = {"someone", "performs", "activity", "scene"};
  for (const auto& [id, ids] : codebook.captions)
    for (std::size_t w = 0; w < ids.size(); ++w)
      words[ids[w]] = std::string(kRoles[w % 4]) + std::to_string(id);
  return words;
}

std::optional<int> OracleCodebook::classify(const float* token, int dim) const {
  if (static_cast<int>(background.size()) != dim) throw InvalidArgument("codebook dimension mismatch");
  std::optional<int> best;
  double best_d = distance(token, background);
  for (const auto& [id, c] : concepts) {
    const double d = distance(token, c);
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  if (!best || best_d > radius) return std::nullopt;
  return best;
}

std::optional<int> OracleCodebook::concept_of(const std::vector<TokenId>& words) const {
  for (const auto& [id, w] : captions)
    if (w == words) return id;
  return std::nullopt;
}

GeneratedStream gen_stream(const StreamSpec& spec, const OracleCodebook& codebook) {
  spec.validate();
  Rng rng(Rng::derive(spec.seed, 0xf4a3e5));
  GeneratedStream g;
  g.stream.fps = spec.fps;
  g.stream.duration_sec = spec.num_frames / spec.fps;
  g.stream.frames.reserve(spec.num_frames);

  std::vector<const std::vector<float>*> active(spec.num_frames, &spec.background);
  for (const auto& e : spec.events)
    for (int t = e.start_frame; t < e.end_frame; ++t) active[t] = &spec.concepts.at(e.concept_id);

  for (int t = 0; t < spec.num_frames; ++t) {
    Matrix f(spec.tokens_per_frame, spec.dim);
    const auto& center = *active[t];
    for (int i = 0; i < spec.tokens_per_frame; ++i)
      for (int d = 0; d < spec.dim; ++d)
        f(i, d) = static_cast<float>(center[d] + spec.noise_sigma * rng.normal());
    g.stream.frames.push_back(std::move(f));
  }

  for (const auto& e : spec.events) {
    auto it = codebook.captions.find(e.concept_id);
    if (it == codebook.captions.end()) throw InvalidArgument("codebook lacks a caption for a planted concept");
    g.events.push_back({e.start_frame / spec.fps, e.end_frame / spec.fps, it->second});
  }
  g.events = codec::sort_by_start(std::move(g.events));
  return g;
}

void ConceptTimeline::observe(int concept_id, int frame) {
  auto [it, inserted] = span.try_emplace(concept_id, frame, frame);
  if (!inserted) {
    it->second.first = std::min(it->second.first, frame);
    it->second.second = std::max(it->second.second, frame);
  }
}

std::vector<TimedEvent> oracle_decode(const memory::MemoryState& memory, const OracleCodebook& codebook,
                                      int point_frame, int num_frames, double fps,
                                      const std::vector<TimedEvent>& history,
                                      const ConceptTimeline& timeline) {
  std::set<int> detected;
  const int dim = static_cast<int>(memory.dim());
  for (Eigen::Index k = 0; k < memory.size(); ++k)
    if (auto c = codebook.classify(memory.centers.row(k).data(), dim)) detected.insert(*c);

  const bool final_point = point_frame >= num_frames;
  std::vector<TimedEvent> out;
  for (int c : detected) {
    const auto& words = codebook.captions.at(c);
    const bool known = std::any_of(history.begin(), history.end(),
                                   [&](const TimedEvent& e) { return e.words == words; });
    if (known) continue;
    auto it = timeline.span.find(c);
    if (it == timeline.span.end()) continue;
    const auto [first, last] = it->second;
    if (!final_point && last >= point_frame - 1) continue;  // still running
    out.push_back({first / fps, (last + 1) / fps, words});
  }
  return codec::sort_by_start(std::move(out));
}

PipelineResult run_pipeline(const GeneratedStream& gen, const OracleCodebook& codebook,
                            const memory::MemoryConfig& cfg, const scheduler::DecodingSchedule& schedule) {
  const auto& s = gen.stream;
  s.validate();
  memory::StreamingMemory mem(cfg, s.tokens_per_frame(), s.dim());
  const codec::VocabSpec vocab{std::max(1, codebook.n_words), 100, s.duration_sec};

  ConceptTimeline timeline;
  PipelineResult r;
  std::size_t next_point = 0;
  for (int t = 0; t < s.num_frames(); ++t) {
    const Matrix& frame = s.frames[t];
    mem.push(frame);
    const Eigen::RowVectorXf mean = frame.colwise().mean();
    if (auto c = codebook.classify(mean.data(), s.dim())) timeline.observe(*c, t);

    while (next_point < schedule.points.size() && schedule.points[next_point] == t + 1) {
      const auto snap = mem.snapshot();
      if (snap.size() > 0) {
        auto fresh = oracle_decode(snap, codebook, t + 1, s.num_frames(), s.fps, r.predictions, timeline);
        r.predictions = scheduler::accumulate_predictions(r.predictions, fresh, vocab);
      }
      ++next_point;
    }
  }
  std::set<int> concepts;
  for (const auto& e : r.predictions)
    if (auto c = codebook.concept_of(e.words)) concepts.insert(*c);
  r.detected_concepts.assign(concepts.begin(), concepts.end());
  r.stats = mem.stats();
  return r;
}

double concept_recall(const PipelineResult& result, const StreamSpec& spec) {
  std::set<int> truth;
  for (const auto& e : spec.events) truth.insert(e.concept_id);
  if (truth.empty()) return 1.0;
  std::size_t hit = 0;
  for (int c : result.detected_concepts) hit += truth.count(c);
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

std::vector<VariantResult> run_experiment(const StreamSpec& spec,
                                          const std::vector<memory::MemoryConfig>& variants,
                                          const scheduler::DecodingSchedule& schedule) {
  const auto codebook = make_codebook(spec);
  const auto gen = gen_stream(spec, codebook);
  std::vector<VariantResult> out;
  for (const auto& cfg : variants) {
    VariantResult v;
    v.name = std::string(memory::to_string(cfg.variant));
    v.config = cfg;
    v.pipeline = run_pipeline(gen, codebook, cfg, schedule);
    v.concept_recall = concept_recall(v.pipeline, spec);
    std::map<std::string, metrics::VideoEvents> videos;
    videos["sim"] = {v.pipeline.predictions, gen.events};
    v.report = metrics::evaluate(videos);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace streamcap::sim
