#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "streamcap/events_io.hpp"
#include "streamcap/grad.hpp"
#include "streamcap/parallel.hpp"
#include "streamcap/rng.hpp"
#include "streamcap/sim.hpp"
#include "streamcap/stream_io.hpp"

namespace streamcap::cli {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json RunConfig::to_json() const {
  return {
      {"memory_size", memory.memory_size},
      {"iterations", memory.iterations},
      {"momentum", memory.momentum},
      {"variant", std::string(memory::to_string(memory.variant))},
      {"ema_decay", memory.ema_decay},
      {"stride", stride},
      {"prefix_mode", std::string(scheduler::to_string(prefix_mode))},
      {"thresholds", thresholds},
      {"seed", seed},
  };
}

namespace {

// Usage error raised after CLI parsing succeeded (bad flag combinations).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> make_logger(const std::string& level) {
  auto logger = spdlog::get("streamcap");
  if (!logger) logger = spdlog::stderr_color_mt("streamcap");
  logger->set_level(spdlog::level::from_str(level));
  return logger;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << text)) throw IoError("cannot write '" + path.string() + "'");
}

void add_memory_flags(CLI::App* cmd, RunConfig& cfg, std::string& variant, bool& no_momentum) {
  cmd->add_option("--memory-size,-K", cfg.memory.memory_size, "Memory size K in tokens")->capture_default_str();
  cmd->add_option("--tau", cfg.memory.iterations, "K-means iterations per frame")->capture_default_str();
  cmd->add_flag("--no-momentum", no_momentum, "Unweighted centroids (every token counts once)");
  cmd->add_option("--variant", variant,
                  "clustering | ema | spatial_pool | temporal_pool | pairwise_merge | none")
      ->capture_default_str();
  cmd->add_option("--ema-decay", cfg.memory.ema_decay, "Decay of the ema variant")->capture_default_str();
  cmd->add_option("--stride", cfg.stride, "Decoding point stride in frames")->capture_default_str();
}

void apply_memory_flags(RunConfig& cfg, const std::string& variant, bool no_momentum) {
  cfg.memory.variant = memory::parse_variant(variant);
  cfg.memory.momentum = !no_momentum;
}

json event_json(const codec::TimedEvent& e, const io::Vocabulary& vocab) {
  return {{"start", e.start_sec}, {"end", e.end_sec}, {"caption", io::ids_to_caption(e.words, vocab)}};
}

// ---------------------------------------------------------------- stream-memory

int cmd_stream_memory(const RunConfig& cfg, const fs::path& input, const fs::path& out_dir,
                      std::ostream& out, spdlog::logger& log) {
  const auto stream = io::read_token_stream(input);
  stream.validate();
  const auto schedule = scheduler::make_decoding_points(stream.num_frames(), cfg.stride);
  memory::StreamingMemory mem(cfg.memory, stream.tokens_per_frame(), stream.dim());
  ensure_dir(out_dir);

  json snapshots = json::object();
  std::size_t next = 0;
  for (int t = 0; t < stream.num_frames(); ++t) {
    mem.push(stream.frames[t]);
    if (next < schedule.points.size() && schedule.points[next] == t + 1) {
      char name[32];
      std::snprintf(name, sizeof(name), "point_%05d.smem", t + 1);
      io::write_snapshot(out_dir / name, mem.snapshot());
      snapshots[std::to_string(t + 1)] = name;
      ++next;
    }
  }
  if (mem.stats().updates_with_fallback > 0)
    log.info("empty-cluster fallback fired on {} of {} frames", mem.stats().updates_with_fallback,
             stream.num_frames());

  json manifest = {
      {"input", input.string()},
      {"frames", stream.num_frames()},
      {"tokens_per_frame", stream.tokens_per_frame()},
      {"dim", stream.dim()},
      {"fps", stream.fps},
      {"config", cfg.to_json()},
      {"decoding_points", schedule.points},
      {"snapshots", snapshots},
      {"empty_cluster_fallbacks", mem.stats().empty_cluster_fallbacks},
      {"frames_with_fallback", mem.stats().updates_with_fallback},
  };
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  out << manifest.dump(2) << "\n";
  return kOk;
}

// ---------------------------------------------------------- make-decoding-examples

int cmd_make_examples(const RunConfig& cfg, const fs::path& events_path, const std::string& out_path,
                      const std::string& vocab_path, int frames, int points, double drop_prob,
                      std::ostream& out) {
  if (frames < 1) throw UsageError("--frames must be positive");
  if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw UsageError("--drop-prob must lie in [0, 1]");
  const auto records = io::read_events_jsonl(events_path);
  io::Vocabulary vocab = vocab_path.empty() ? io::Vocabulary{} : io::Vocabulary::load(vocab_path);
  const auto videos = io::group_by_video(records, vocab, vocab_path.empty());

  const auto schedule = points > 0 ? scheduler::make_decoding_points_by_count(frames, points)
                                   : scheduler::make_decoding_points(frames, cfg.stride);

  std::vector<std::pair<std::string, const io::VideoEvents*>> list;
  for (const auto& [id, v] : videos) list.emplace_back(id, &v);
  std::vector<std::string> lines(list.size());
  parallel_for(list.size(), cfg.threads, [&](std::size_t i) {
    const auto& [id, v] = list[i];
    const double fps = frames / v->duration_sec;
    const auto video_seed = Rng::derive(cfg.seed, std::hash<std::string>{}(id) & 0xffffffffULL, i);
    std::string text;
    for (const auto& ex : scheduler::make_training_examples(v->events, schedule, fps, drop_prob, video_seed)) {
      json prefix = json::array(), target = json::array();
      for (const auto& e : ex.prefix) prefix.push_back(event_json(e, vocab));
      for (const auto& e : ex.target) target.push_back(event_json(e, vocab));
      json rec = {{"video_id", id}, {"point_frame", ex.point_frame}, {"prefix", prefix},
                  {"target", target}, {"seed", ex.seed}};
      text += rec.dump() + "\n";
    }
    lines[i] = std::move(text);
  });

  if (out_path.empty() || out_path == "-") {
    for (const auto& l : lines) out << l;
  } else {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + out_path + "'");
    for (const auto& l : lines) f << l;
    if (!f) throw IoError("write to '" + out_path + "' failed");
  }
  return kOk;
}

// ------------------------------------------------------------------- eval-dense

int cmd_eval(const RunConfig& cfg, const fs::path& pred_path, const fs::path& gt_path,
             const std::string& out_path, std::ostream& out) {
  const auto gt_records = io::read_events_jsonl(gt_path);
  const auto pred_records = io::read_events_jsonl(pred_path);
  io::Vocabulary vocab;
  const auto gts = io::group_by_video(gt_records, vocab, true);
  const auto preds = io::group_by_video(pred_records, vocab, true);

  std::map<std::string, metrics::VideoEvents> videos;
  for (const auto& [id, v] : gts) videos[id].gts = v.events;
  for (const auto& [id, v] : preds) videos[id].preds = v.events;
  const auto report = metrics::evaluate(videos, cfg.thresholds);
  const std::string text = report.to_json().dump(2) + "\n";
  out << text;
  if (!out_path.empty()) write_text(out_path, text);
  return kOk;
}

// --------------------------------------------------------------------- simulate

struct SimFlags {
  int frames = 64;
  int tokens_per_frame = 257;
  int dim = 8;
  int concepts = 5;
  double noise = 0.05;
  double fps = 1.0;
  bool compare = false;
  std::string out_dir;
};

int cmd_simulate(const RunConfig& cfg, const SimFlags& f, std::ostream& out) {
  sim::PlantedOptions opts;
  opts.num_frames = f.frames;
  opts.tokens_per_frame = f.tokens_per_frame;
  opts.dim = f.dim;
  opts.num_concepts = f.concepts;
  opts.noise_sigma = f.noise;
  opts.fps = f.fps;
  opts.seed = cfg.seed;
  const auto spec = sim::make_planted_spec(opts);
  const auto codebook = sim::make_codebook(spec);
  const auto gen = sim::gen_stream(spec, codebook);
  const auto schedule = scheduler::make_decoding_points(spec.num_frames, cfg.stride);

  std::vector<memory::MemoryConfig> variants{cfg.memory};
  if (f.compare) {
    variants.clear();
    for (auto v : {memory::Variant::kClustering, memory::Variant::kEma, memory::Variant::kSpatialPool,
                   memory::Variant::kTemporalPool, memory::Variant::kPairwiseMerge, memory::Variant::kNone}) {
      auto c = cfg.memory;
      c.variant = v;
      variants.push_back(c);
    }
  }
  for (const auto& v : variants) memory::validate(v, spec.tokens_per_frame);

  std::vector<sim::VariantResult> results(variants.size());
  parallel_for(variants.size(), cfg.threads, [&](std::size_t i) {
    sim::VariantResult r;
    r.name = std::string(memory::to_string(variants[i].variant));
    r.config = variants[i];
    r.pipeline = sim::run_pipeline(gen, codebook, variants[i], schedule);
    r.concept_recall = sim::concept_recall(r.pipeline, spec);
    std::map<std::string, metrics::VideoEvents> videos;
    videos["sim"] = {r.pipeline.predictions, gen.events};
    r.report = metrics::evaluate(videos, cfg.thresholds);
    results[i] = std::move(r);
  });

  const fs::path dir = f.out_dir;
  ensure_dir(dir);
  io::write_token_stream(dir / "stream.stk", gen.stream);
  const io::Vocabulary vocab(sim::codebook_words(codebook));
  vocab.save(dir / "vocab.txt");

  auto write_events = [&](const fs::path& path, const std::vector<codec::TimedEvent>& events) {
    std::vector<io::EventRecord> recs;
    for (const auto& e : events) {
      auto r = io::to_record("sim", e, vocab);
      r.duration = gen.stream.duration_sec;
      recs.push_back(std::move(r));
    }
    std::ostringstream ss;
    io::write_events_jsonl(ss, recs);
    write_text(path, ss.str());
  };
  write_events(dir / "gt.jsonl", gen.events);

  json table = json::array();
  for (const auto& r : results) {
    const std::string suffix = f.compare ? "_" + r.name : "";
    write_events(dir / ("pred" + suffix + ".jsonl"), r.pipeline.predictions);
    auto rep = r.report.to_json();
    write_text(dir / ("report" + suffix + ".json"), rep.dump(2) + "\n");
    table.push_back({{"variant", r.name}, {"concept_recall", r.concept_recall}, {"report", rep}});
  }

  json manifest = {
      {"config", cfg.to_json()},
      {"frames", f.frames},
      {"tokens_per_frame", f.tokens_per_frame},
      {"dim", f.dim},
      {"concepts", f.concepts},
      {"noise", f.noise},
      {"fps", f.fps},
      {"decoding_points", schedule.points},
      {"results", table},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  out << table.dump(2) << "\n";
  return kOk;
}

// -------------------------------------------------------------------- gradcheck

int cmd_gradcheck(const RunConfig& cfg, int instances, int trials, double epsilon, int max_k,
                  std::ostream& out) {
  if (!(epsilon > 0.0)) throw UsageError("--epsilon must be positive");
  if (instances < 1 || trials < 1) throw UsageError("--instances and --trials must be positive");
  std::vector<grad::GradCheckReport> reports(instances);
  parallel_for(reports.size(), cfg.threads, [&](std::size_t i) {
    const auto inst = grad::random_instance(Rng::derive(cfg.seed, i), max_k);
    reports[i] = grad::finite_diff_check(inst.state, inst.frame, inst.cfg, epsilon, trials,
                                         Rng::derive(cfg.seed, i, 1));
  });
  double max_err = 0.0;
  int flipped = 0, used = 0;
  for (const auto& r : reports) {
    max_err = std::max(max_err, r.max_rel_error);
    flipped += r.flipped_assignments;
    used += r.trials_used;
  }
  const bool pass = max_err < 1e-3;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6e", max_err);
  out << "max_rel_error=" << buf << " instances=" << instances << " trials_used=" << used
      << " flipped=" << flipped << " " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kOk : kUnexpected;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Streaming memory, decoding-point scheduling and dense-caption evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  RunConfig cfg;
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", cfg.threads, "Worker threads across independent items")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--log-level", cfg.log_level, "trace | debug | info | warn | error | off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
      ->capture_default_str();

  std::string variant = "clustering";
  bool no_momentum = false;
  std::string prefix_mode = "captions";

  auto* sm = app.add_subcommand("stream-memory", "Write memory snapshots at each decoding point");
  std::string sm_input, sm_out;
  sm->add_option("--input,-i", sm_input, "Token-stream file (STK1)")->required();
  sm->add_option("--out,-o", sm_out, "Output directory")->required();
  add_memory_flags(sm, cfg, variant, no_momentum);
  sm->add_option("--prefix-mode", prefix_mode, "none | captions | captions_and_time")->capture_default_str();
  sm->add_option("--thresholds", cfg.thresholds, "IoU thresholds")->delimiter(',');

  auto* mk = app.add_subcommand("make-decoding-examples", "Emit prefix/target training examples");
  std::string mk_events, mk_out, mk_vocab;
  int mk_frames = 64, mk_points = 0;
  double mk_drop = 0.5;
  mk->add_option("--events,-e", mk_events, "Ground-truth events JSONL")->required();
  mk->add_option("--out,-o", mk_out, "Output JSONL (default stdout)");
  mk->add_option("--vocab", mk_vocab, "Vocabulary file; out-of-vocabulary words are an error");
  mk->add_option("--frames", mk_frames, "Frames sampled per video")->capture_default_str();
  mk->add_option("--stride", cfg.stride, "Decoding point stride in frames")->capture_default_str();
  mk->add_option("--points", mk_points, "Use this many uniform decoding points instead of a stride");
  mk->add_option("--drop-prob", mk_drop, "Probability of moving a prefix event to the target")
      ->capture_default_str();

  auto* ev = app.add_subcommand("eval-dense", "Score predictions against ground truth");
  std::string ev_pred, ev_gt, ev_out;
  ev->add_option("--pred,-p", ev_pred, "Predictions JSONL")->required();
  ev->add_option("--gt,-g", ev_gt, "Ground-truth JSONL")->required();
  ev->add_option("--out,-o", ev_out, "Also write the report here");
  ev->add_option("--thresholds", cfg.thresholds, "IoU thresholds")->delimiter(',');

  auto* si = app.add_subcommand("simulate", "Run the planted-cluster pipeline end to end");
  SimFlags sf;
  si->add_option("--frames", sf.frames)->capture_default_str();
  si->add_option("--tokens-per-frame", sf.tokens_per_frame)->capture_default_str();
  si->add_option("--dim", sf.dim)->capture_default_str();
  si->add_option("--concepts", sf.concepts)->capture_default_str();
  si->add_option("--noise", sf.noise)->capture_default_str();
  si->add_option("--fps", sf.fps)->capture_default_str();
  si->add_flag("--compare", sf.compare, "Run every memory variant");
  si->add_option("--out,-o", sf.out_dir, "Output directory")->required();
  add_memory_flags(si, cfg, variant, no_momentum);
  si->add_option("--thresholds", cfg.thresholds, "IoU thresholds")->delimiter(',');

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of the memory backward pass");
  int gc_instances = 100, gc_trials = 20, gc_max_k = 8;
  double gc_eps = 1e-4;
  gc->add_option("--instances", gc_instances)->capture_default_str();
  gc->add_option("--trials", gc_trials, "Perturbations per instance")->capture_default_str();
  gc->add_option("--epsilon", gc_eps)->capture_default_str();
  gc->add_option("--max-k", gc_max_k)->capture_default_str();

  std::vector<std::string> argv_store{"streamcap"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  auto log = make_logger(cfg.log_level);
  try {
    apply_memory_flags(cfg, variant, no_momentum);
    cfg.prefix_mode = scheduler::parse_prefix_mode(prefix_mode);
    for (double t : cfg.thresholds)
      if (!(t > 0.0 && t <= 1.0)) throw UsageError("thresholds must lie in (0, 1]");

    if (sm->parsed()) return cmd_stream_memory(cfg, sm_input, sm_out, out, *log);
    if (mk->parsed())
      return cmd_make_examples(cfg, mk_events, mk_out, mk_vocab, mk_frames, mk_points, mk_drop, out);
    if (ev->parsed()) return cmd_eval(cfg, ev_pred, ev_gt, ev_out, out);
    if (si->parsed()) return cmd_simulate(cfg, sf, out);
    if (gc->parsed()) return cmd_gradcheck(cfg, gc_instances, gc_trials, gc_eps, gc_max_k, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what();
    if (e.line() > 0) err << " (line " << e.line() << ")";
    err << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const DegenerateError& e) {
    err << "degenerate: " << e.what() << "\n";
    return kDegenerate;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kUsage;
}

}  // namespace streamcap::cli
