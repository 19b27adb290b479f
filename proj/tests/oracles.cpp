#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace oracle {

Rows to_rows(const streamcap::Matrix& m) {
  Rows out(m.rows(), std::vector<double>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

Rows sq_dist(const Rows& x, const Rows& c) {
  Rows d(x.size(), std::vector<double>(c.size(), 0.0));
  for (size_t i = 0; i < x.size(); ++i) {
    for (size_t k = 0; k < c.size(); ++k) {
      double s = 0.0;
      for (size_t j = 0; j < x[i].size(); ++j) {
        const double diff = x[i][j] - c[k][j];
        s += diff * diff;
      }
      d[i][k] = s;
    }
  }
  return d;
}

KMeans weighted_kmeans(const Rows& x, const std::vector<double>& w, int K, int tau, bool momentum) {
  KMeans r;
  r.centers.assign(x.begin(), x.begin() + K);
  r.weights.assign(w.begin(), w.begin() + K);
  const size_t D = x.empty() ? 0 : x[0].size();

  for (int it = 0; it < tau; ++it) {
    const Rows d = sq_dist(x, r.centers);
    std::vector<int> owner(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (d[i][k] < d[i][best]) best = k;
      owner[i] = best;
    }
    Rows next = r.centers;
    std::vector<double> next_w = r.weights;
    for (int k = 0; k < K; ++k) {
      double total_w = 0.0, denom = 0.0;
      std::vector<double> acc(D, 0.0);
      int members = 0;
      for (size_t i = 0; i < x.size(); ++i) {
        if (owner[i] != k) continue;
        ++members;
        total_w += w[i];
        const double s = momentum ? w[i] : 1.0;
        denom += s;
        for (size_t j = 0; j < D; ++j) acc[j] += s * x[i][j];
      }
      if (members == 0) continue;
      for (size_t j = 0; j < D; ++j) next[k][j] = acc[j] / denom;
      next_w[k] = total_w;
    }
    r.centers = next;
    r.weights = next_w;
  }
  return r;
}

KMeans memory_update(const streamcap::memory::MemoryState& state, const streamcap::Matrix& frame,
                     int tau, bool momentum) {
  Rows x = to_rows(state.centers);
  const Rows f = to_rows(frame);
  x.insert(x.end(), f.begin(), f.end());
  std::vector<double> w;
  for (int k = 0; k < state.weights.size(); ++k) w.push_back(state.weights[k]);
  for (size_t i = 0; i < f.size(); ++i) w.push_back(1.0);
  return weighted_kmeans(x, w, static_cast<int>(state.centers.rows()), tau, momentum);
}

int document_frequency(const Caption& ngram, const std::vector<Caption>& refs) {
  int df = 0;
  const size_t n = ngram.size();
  for (const auto& r : refs) {
    bool found = false;
    for (size_t i = 0; !found && i + n <= r.size(); ++i)
      found = std::equal(ngram.begin(), ngram.end(), r.begin() + i);
    if (found) ++df;
  }
  return df;
}

namespace {

std::map<Caption, double> counts(const Caption& c, size_t n) {
  std::map<Caption, double> m;
  for (size_t i = 0; i + n <= c.size(); ++i) m[Caption(c.begin() + i, c.begin() + i + n)] += 1.0;
  return m;
}

}  // namespace

double cider_d(const Caption& cand, const std::vector<Caption>& refs, const std::vector<Caption>& corpus) {
  if (cand.empty() || refs.empty()) return 0.0;
  const double N = static_cast<double>(corpus.size());
  auto idf = [&](const Caption& g) {
    const int df = document_frequency(g, corpus);
    return std::log(N) - std::log(static_cast<double>(std::max(df, 1)));
  };

  double score = 0.0;
  for (const auto& ref : refs) {
    const double delta = static_cast<double>(cand.size()) - static_cast<double>(ref.size());
    const double penalty = std::exp(-delta * delta / 72.0);
    double per_ref = 0.0;
    for (size_t n = 1; n <= 4; ++n) {
      auto vc = counts(cand, n);
      auto vr = counts(ref, n);
      double nc = 0.0, nr = 0.0;
      for (auto& [g, v] : vc) {
        v *= idf(g);
        nc += v * v;
      }
      for (auto& [g, v] : vr) {
        v *= idf(g);
        nr += v * v;
      }
      if (nc == 0.0 || nr == 0.0) continue;
      double dot = 0.0;
      for (const auto& [g, v] : vc) {
        if (!vr.count(g)) continue;
        dot += std::min(v, vr[g]) * vr[g];
      }
      per_ref += dot / (std::sqrt(nc) * std::sqrt(nr)) * penalty;
    }
    score += per_ref / 4.0;
  }
  return score / static_cast<double>(refs.size()) * 10.0;
}

namespace {

double enumerate(const std::vector<std::vector<double>>& s, size_t i, size_t next_j) {
  if (i == s.size()) return 0.0;
  double best = enumerate(s, i + 1, next_j);  // leave prediction i unmatched
  for (size_t j = next_j; j < s[i].size(); ++j) best = std::max(best, s[i][j] + enumerate(s, i + 1, j + 1));
  return best;
}

}  // namespace

double best_monotone_alignment(const std::vector<std::vector<double>>& scores) {
  return enumerate(scores, 0, 0);
}

Caption random_caption(streamcap::Rng& rng, int min_len, int max_len, int alphabet) {
  const int len = min_len + static_cast<int>(rng.below(max_len - min_len + 1));
  Caption c(len);
  for (auto& t : c) t = static_cast<streamcap::TokenId>(rng.below(alphabet));
  return c;
}

streamcap::Matrix random_matrix(streamcap::Rng& rng, int rows, int cols, double scale) {
  streamcap::Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<float>(scale * rng.normal());
  return m;
}

std::vector<streamcap::codec::TimedEvent> random_events(streamcap::Rng& rng, int n, double duration,
                                                        int n_words, int max_words) {
  std::vector<streamcap::codec::TimedEvent> out;
  for (int i = 0; i < n; ++i) {
    double a = rng.uniform(0.0, duration), b = rng.uniform(0.0, duration);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-3) b = std::min(duration, a + 1e-3);
    if (b <= a) a = b - 1e-3;
    streamcap::codec::TimedEvent e{a, b, {}};
    const int len = 1 + static_cast<int>(rng.below(max_words));
    for (int w = 0; w < len; ++w) e.words.push_back(static_cast<streamcap::TokenId>(rng.below(n_words)));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace oracle
