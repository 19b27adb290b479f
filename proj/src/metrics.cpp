#include "streamcap/metrics.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace streamcap::metrics {

namespace {

using NgramCounts = std::unordered_map<Caption, double, NgramHash>;

// tf-idf vectors of one caption, per n-gram order.
struct Cooked {
  std::array<NgramCounts, kMaxNgram> vec;
  std::array<double, kMaxNgram> norm{};
  double length = 0.0;
};

Cooked cook(const Caption& c, const IdfCorpus& corpus) {
  Cooked out;
  out.length = static_cast<double>(c.size());
  for (int n = 1; n <= kMaxNgram; ++n) {
    auto& v = out.vec[n - 1];
    for (std::size_t i = 0; i + n <= c.size(); ++i) v[Caption(c.begin() + i, c.begin() + i + n)] += 1.0;
    double sq = 0.0;
    for (auto& [g, tf] : v) {
      tf *= corpus.idf(g);
      sq += tf * tf;
    }
    out.norm[n - 1] = std::sqrt(sq);
  }
  return out;
}

// Sum over orders of the clipped, length-penalized cosine.
double similarity(const Cooked& hyp, const Cooked& ref) {
  const double delta = hyp.length - ref.length;
  const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
  double total = 0.0;
  for (int n = 0; n < kMaxNgram; ++n) {
    if (hyp.norm[n] == 0.0 || ref.norm[n] == 0.0) continue;
    double val = 0.0;
    for (const auto& [g, h] : hyp.vec[n]) {
      auto it = ref.vec[n].find(g);
      if (it == ref.vec[n].end()) continue;
      val += std::min(h, it->second) * it->second;
    }
    total += val / (hyp.norm[n] * ref.norm[n]) * penalty;
  }
  return total;
}

double cider_single(const Cooked& hyp, const Cooked& ref, bool hyp_empty) {
  if (hyp_empty) return 0.0;
  return similarity(hyp, ref) / kMaxNgram * kCiderScale;
}

void check_thresholds(const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw InvalidArgument("need at least one IoU threshold");
  for (double t : thresholds)
    if (!(t > 0.0 && t <= 1.0)) throw InvalidArgument("IoU thresholds must lie in (0, 1]");
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

// All pairwise quantities for one video.
class VideoScorer {
 public:
  VideoScorer(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts, const IdfCorpus* corpus)
      : preds_(preds), gts_(gts), corpus_(corpus),
        iou_(preds.size(), std::vector<double>(gts.size(), 0.0)),
        cider_(preds.size(), std::vector<double>(gts.size(), -1.0)) {
    for (std::size_t i = 0; i < preds.size(); ++i)
      for (std::size_t j = 0; j < gts.size(); ++j) iou_[i][j] = temporal_iou(preds[i], gts[j]);
  }

  double iou(std::size_t i, std::size_t j) const { return iou_[i][j]; }

  double cider(std::size_t i, std::size_t j) {
    double& c = cider_[i][j];
    if (c < 0.0) {
      if (pred_cooked_.empty()) {
        for (const auto& p : preds_) pred_cooked_.push_back(cook(p.words, *corpus_));
        for (const auto& g : gts_) gt_cooked_.push_back(cook(g.words, *corpus_));
      }
      c = cider_single(pred_cooked_[i], gt_cooked_[j], preds_[i].words.empty());
    }
    return c;
  }

  // Sum of pair scores and pair count at one threshold.
  std::pair<double, std::size_t> dense_cider_sum(double thr) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < preds_.size(); ++i) {
      bool any = false;
      for (std::size_t j = 0; j < gts_.size(); ++j) {
        if (iou_[i][j] >= thr) {
          sum += cider(i, j);
          ++count;
          any = true;
        }
      }
      if (!any) ++count;
    }
    return {sum, count};
  }

  std::size_t greedy_matches(double thr) const {
    struct Cand {
      double iou;
      std::size_t i, j;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < preds_.size(); ++i)
      for (std::size_t j = 0; j < gts_.size(); ++j)
        if (iou_[i][j] >= thr) cands.push_back({iou_[i][j], i, j});
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.iou != b.iou) return a.iou > b.iou;
      if (a.i != b.i) return a.i < b.i;
      return a.j < b.j;
    });
    std::vector<char> pred_used(preds_.size(), 0), gt_used(gts_.size(), 0);
    std::size_t matched = 0;
    for (const auto& c : cands) {
      if (pred_used[c.i] || gt_used[c.j]) continue;
      pred_used[c.i] = gt_used[c.j] = 1;
      ++matched;
    }
    return matched;
  }

  double soda() {
    if (preds_.empty() || gts_.empty()) return 0.0;
    const auto p_order = start_order(preds_);
    const auto g_order = start_order(gts_);
    std::vector<std::vector<double>> scores(preds_.size(), std::vector<double>(gts_.size(), 0.0));
    for (std::size_t a = 0; a < p_order.size(); ++a)
      for (std::size_t b = 0; b < g_order.size(); ++b) {
        const std::size_t i = p_order[a], j = g_order[b];
        if (iou_[i][j] > 0.0) scores[a][b] = iou_[i][j] * cider(i, j);
      }
    const double total = max_monotone_alignment(scores);
    return harmonic(total / static_cast<double>(preds_.size()), total / static_cast<double>(gts_.size()));
  }

 private:
  static std::vector<std::size_t> start_order(std::span<const TimedEvent> ev) {
    std::vector<std::size_t> idx(ev.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (ev[a].start_sec != ev[b].start_sec) return ev[a].start_sec < ev[b].start_sec;
      return ev[a].end_sec < ev[b].end_sec;
    });
    return idx;
  }

  std::span<const TimedEvent> preds_;
  std::span<const TimedEvent> gts_;
  const IdfCorpus* corpus_;
  std::vector<std::vector<double>> iou_;
  std::vector<std::vector<double>> cider_;
  std::vector<Cooked> pred_cooked_;
  std::vector<Cooked> gt_cooked_;
};

double f1_from_counts(std::size_t matched, std::size_t n_pred, std::size_t n_gt) {
  if (n_pred == 0 && n_gt == 0) return 1.0;
  if (n_pred == 0 || n_gt == 0) return 0.0;
  return harmonic(static_cast<double>(matched) / n_pred, static_cast<double>(matched) / n_gt);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double temporal_iou(const Interval& a, const Interval& b) {
  if (!(a.start_sec < a.end_sec) || !(b.start_sec < b.end_sec))
    throw InvalidArgument("temporal_iou: intervals need start < end");
  const double inter = std::min(a.end_sec, b.end_sec) - std::max(a.start_sec, b.start_sec);
  if (inter <= 0.0) return 0.0;
  const double uni = std::max(a.end_sec, b.end_sec) - std::min(a.start_sec, b.start_sec);
  return inter / uni;
}

double temporal_iou(const TimedEvent& a, const TimedEvent& b) {
  return temporal_iou(Interval{a.start_sec, a.end_sec}, Interval{b.start_sec, b.end_sec});
}

std::size_t NgramHash::operator()(const Caption& g) const noexcept {
  std::size_t h = 0xcbf29ce484222325ULL;
  for (TokenId t : g) {
    h ^= static_cast<std::size_t>(static_cast<std::uint32_t>(t));
    h *= 0x100000001b3ULL;
  }
  return h;
}

int IdfCorpus::document_frequency(const Caption& g) const {
  auto it = df_.find(g);
  return it == df_.end() ? 0 : it->second;
}

double IdfCorpus::idf(const Caption& g) const {
  return log_docs_ - std::log(std::max(1.0, static_cast<double>(document_frequency(g))));
}

IdfCorpus build_idf(std::span<const Caption> references) {
  if (references.empty()) throw InvalidArgument("build_idf: empty reference set");
  IdfCorpus c;
  c.num_documents_ = references.size();
  c.log_docs_ = std::log(static_cast<double>(references.size()));
  for (const auto& ref : references) {
    std::unordered_set<Caption, NgramHash> seen;
    for (int n = 1; n <= kMaxNgram; ++n)
      for (std::size_t i = 0; i + n <= ref.size(); ++i) seen.emplace(ref.begin() + i, ref.begin() + i + n);
    for (const auto& g : seen) ++c.df_[g];
  }
  return c;
}

double cider_d(const Caption& candidate, std::span<const Caption> references, const IdfCorpus& corpus) {
  if (candidate.empty() || references.empty()) return 0.0;
  const Cooked hyp = cook(candidate, corpus);
  double total = 0.0;
  for (const auto& r : references) total += similarity(hyp, cook(r, corpus));
  return total / kMaxNgram / static_cast<double>(references.size()) * kCiderScale;
}

std::vector<PositivePair> match_at_threshold(std::span<const TimedEvent> preds,
                                             std::span<const TimedEvent> gts, double thr) {
  if (!(thr > 0.0 && thr <= 1.0)) throw InvalidArgument("IoU threshold must lie in (0, 1]");
  std::vector<PositivePair> out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (temporal_iou(preds[i], gts[j]) >= thr) {
        out.push_back({i, j});
        any = true;
      }
    }
    if (!any) out.push_back({i, std::nullopt});
  }
  return out;
}

ThresholdScores dense_cider(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts,
                            const IdfCorpus& corpus, const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  ThresholdScores s{thresholds, {}, 0.0};
  VideoScorer scorer(preds, gts, &corpus);
  for (double thr : thresholds) {
    const auto [sum, count] = scorer.dense_cider_sum(thr);
    s.values.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }
  s.average = mean(s.values);
  return s;
}

ThresholdScores f1_localization(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts,
                                const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  ThresholdScores s{thresholds, {}, 0.0};
  VideoScorer scorer(preds, gts, nullptr);
  for (double thr : thresholds)
    s.values.push_back(f1_from_counts(scorer.greedy_matches(thr), preds.size(), gts.size()));
  s.average = mean(s.values);
  return s;
}

double max_monotone_alignment(const std::vector<std::vector<double>>& scores) {
  const std::size_t n = scores.size();
  const std::size_t m = n ? scores[0].size() : 0;
  // best[i][j]: best alignment of the first i preds with the first j gts.
  std::vector<std::vector<double>> best(n + 1, std::vector<double>(m + 1, 0.0));
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      best[i][j] = std::max({best[i - 1][j], best[i][j - 1], best[i - 1][j - 1] + scores[i - 1][j - 1]});
  return best[n][m];
}

double soda_c(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts, const IdfCorpus& corpus) {
  VideoScorer scorer(preds, gts, &corpus);
  return scorer.soda();
}

std::string format_threshold(double thr) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), thr);
  (void)ec;
  return std::string(buf, end);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cider = nlohmann::json::object();
  nlohmann::json f1 = nlohmann::json::object();
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    cider[format_threshold(thresholds[t])] = cider_by_threshold[t];
    f1[format_threshold(thresholds[t])] = f1_by_threshold[t];
  }
  cider["avg"] = cider_avg;
  f1["avg"] = f1_avg;
  return {{"cider", cider}, {"f1", f1},          {"soda_c", soda_c},
          {"n_pred", n_pred}, {"n_gt", n_gt}, {"cider_scale", kCiderScale}};
}

EvalReport evaluate(const std::map<std::string, VideoEvents>& videos, const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  EvalReport r;
  r.thresholds = thresholds;

  std::vector<Caption> refs;
  for (const auto& [id, v] : videos) {
    r.n_pred += v.preds.size();
    r.n_gt += v.gts.size();
    for (const auto& g : v.gts) refs.push_back(g.words);
  }

  std::vector<double> cider_sum(thresholds.size(), 0.0);
  std::vector<std::size_t> pair_count(thresholds.size(), 0), matched(thresholds.size(), 0);
  double soda_sum = 0.0;
  std::size_t soda_videos = 0;

  std::optional<IdfCorpus> corpus;
  if (!refs.empty()) corpus = build_idf(refs);

  for (const auto& [id, v] : videos) {
    VideoScorer scorer(v.preds, v.gts, corpus ? &*corpus : nullptr);
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      if (corpus) {
        const auto [sum, count] = scorer.dense_cider_sum(thresholds[t]);
        cider_sum[t] += sum;
        pair_count[t] += count;
      }
      matched[t] += scorer.greedy_matches(thresholds[t]);
    }
    if (!v.gts.empty()) {
      soda_sum += scorer.soda();
      ++soda_videos;
    }
  }

  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    r.cider_by_threshold.push_back(pair_count[t] ? cider_sum[t] / static_cast<double>(pair_count[t]) : 0.0);
    r.f1_by_threshold.push_back(f1_from_counts(matched[t], r.n_pred, r.n_gt));
  }
  r.cider_avg = mean(r.cider_by_threshold);
  r.f1_avg = mean(r.f1_by_threshold);
  r.soda_c = soda_videos ? soda_sum / static_cast<double>(soda_videos) : 0.0;
  return r;
}

}  // namespace streamcap::metrics
