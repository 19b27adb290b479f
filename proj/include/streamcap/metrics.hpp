#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "streamcap/codec.hpp"

namespace streamcap::metrics {

using codec::TimedEvent;
using Caption = std::vector<TokenId>;

inline constexpr int kMaxNgram = 4;
inline constexpr double kCiderSigma = 6.0;
inline constexpr double kCiderScale = 10.0;
inline const std::vector<double> kDefaultThresholds = {0.3, 0.5, 0.7, 0.9};

struct Interval {
  double start_sec = 0.0;
  double end_sec = 0.0;
};

// |a n b| / |a u b|; throws InvalidArgument unless start < end for both.
double temporal_iou(const Interval& a, const Interval& b);
double temporal_iou(const TimedEvent& a, const TimedEvent& b);

struct NgramHash {
  std::size_t operator()(const Caption& g) const noexcept;
};

// Document frequencies of every 1..4-gram over a reference caption set.
class IdfCorpus {
 public:
  std::size_t num_documents() const { return num_documents_; }
  // Number of captions containing g; 0 when unseen.
  int document_frequency(const Caption& g) const;
  // log(N / max(1, df)): unseen n-grams are floored to df = 1.
  double idf(const Caption& g) const;
  std::size_t num_ngrams() const { return df_.size(); }

 private:
  friend IdfCorpus build_idf(std::span<const Caption> references);
  std::size_t num_documents_ = 0;
  double log_docs_ = 0.0;
  std::unordered_map<Caption, int, NgramHash> df_;
};

// Throws InvalidArgument on an empty reference set.
IdfCorpus build_idf(std::span<const Caption> references);

// CIDEr-D: per n-gram order, clipped tf-idf cosine times a gaussian length
// penalty (sigma 6), averaged over orders and references, times 10.
double cider_d(const Caption& candidate, std::span<const Caption> references, const IdfCorpus& corpus);

struct PositivePair {
  std::size_t pred = 0;
  std::optional<std::size_t> gt;  // empty: prediction without any positive match
};

// Every (pred, gt) with IoU >= thr; predictions with no such gt get one
// (pred, none) entry.
std::vector<PositivePair> match_at_threshold(std::span<const TimedEvent> preds,
                                             std::span<const TimedEvent> gts, double thr);

struct ThresholdScores {
  std::vector<double> thresholds;
  std::vector<double> values;
  double average = 0.0;
};

// Mean CIDEr-D over positive pairs, per threshold; unmatched predictions score 0.
ThresholdScores dense_cider(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts,
                            const IdfCorpus& corpus,
                            const std::vector<double>& thresholds = kDefaultThresholds);

// Greedy one-to-one matching by descending IoU; F1 of matched/n_pred and
// matched/n_gt. Both sides empty scores 1, one side empty scores 0.
ThresholdScores f1_localization(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts,
                                const std::vector<double>& thresholds = kDefaultThresholds);

// Best order-preserving one-to-one alignment of the start-sorted sequences
// under pair score IoU * CIDEr-D; harmonic mean of score/n_pred and
// score/n_gt. Bounded by 10.
double soda_c(std::span<const TimedEvent> preds, std::span<const TimedEvent> gts, const IdfCorpus& corpus);

// Exposed for testing: the DP over a precomputed (n_pred, n_gt) score matrix.
double max_monotone_alignment(const std::vector<std::vector<double>>& scores);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> cider_by_threshold;
  double cider_avg = 0.0;
  std::vector<double> f1_by_threshold;
  double f1_avg = 0.0;
  double soda_c = 0.0;
  std::size_t n_pred = 0;
  std::size_t n_gt = 0;

  nlohmann::json to_json() const;
};

struct VideoEvents {
  std::vector<TimedEvent> preds;
  std::vector<TimedEvent> gts;
};

// Dataset-level report. CIDEr pools positive pairs over videos, F1 pools
// match counts, SODA_c is the mean over videos that have ground truth. The
// IDF corpus is every ground-truth caption.
EvalReport evaluate(const std::map<std::string, VideoEvents>& videos,
                    const std::vector<double>& thresholds = kDefaultThresholds);

// Shortest round-trip decimal form, e.g. 0.3 -> "0.3".
std::string format_threshold(double thr);

}  // namespace streamcap::metrics
