#ifndef MRPERC_STATS_HPP
#define MRPERC_STATS_HPP

#include <cmath>
#include <cstdint>
#include <map>

namespace mrperc {

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Running sums for a sample mean. Sums are plain doubles; determinism comes
// from the fixed block merge order in run_trials.
struct MeanAccumulator {
  std::uint64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
  }
  void merge(const MeanAccumulator& o) {
    n += o.n;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double variance() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double v = (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return v > 0.0 ? v : 0.0;
  }
  double se() const { return n ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
  Estimate estimate() const { return {mean(), se()}; }
};

// Binomial proportion with its standard error.
inline Estimate proportion(std::uint64_t hits, std::uint64_t trials) {
  if (trials == 0) return {};
  const double f = static_cast<double>(hits) / static_cast<double>(trials);
  return {f, std::sqrt(f * (1.0 - f) / static_cast<double>(trials))};
}

// Empirical law of an integer-valued statistic.
struct Histogram {
  std::map<std::int64_t, std::uint64_t> counts;
  std::uint64_t total = 0;

  void add(std::int64_t x, std::uint64_t times = 1) {
    counts[x] += times;
    total += times;
  }
  void merge(const Histogram& o) {
    for (const auto& [x, c] : o.counts) counts[x] += c;
    total += o.total;
  }
  double prob(std::int64_t x) const {
    const auto it = counts.find(x);
    return (it == counts.end() || total == 0)
               ? 0.0
               : static_cast<double>(it->second) / static_cast<double>(total);
  }
};

// Total-variation distance between two empirical laws.
inline double tv_distance(const Histogram& a, const Histogram& b) {
  std::map<std::int64_t, bool> keys;
  for (const auto& kv : a.counts) keys[kv.first] = true;
  for (const auto& kv : b.counts) keys[kv.first] = true;
  double s = 0.0;
  for (const auto& kv : keys) s += std::abs(a.prob(kv.first) - b.prob(kv.first));
  return 0.5 * s;
}

// Noise scale for tv_distance under equal laws: half the sum over support
// points of the two-sample standard error of the cell frequency.
inline double tv_noise_scale(const Histogram& a, const Histogram& b) {
  std::map<std::int64_t, bool> keys;
  for (const auto& kv : a.counts) keys[kv.first] = true;
  for (const auto& kv : b.counts) keys[kv.first] = true;
  const double na = static_cast<double>(a.total);
  const double nb = static_cast<double>(b.total);
  double s = 0.0;
  for (const auto& kv : keys) {
    const double pa = a.prob(kv.first);
    const double pb = b.prob(kv.first);
    s += std::sqrt(pa * (1.0 - pa) / na + pb * (1.0 - pb) / nb);
  }
  return 0.5 * s;
}

}  // namespace mrperc

#endif  // MRPERC_STATS_HPP
