#pragma once

// Dataset loading (SVMlight / LIBSVM sparse text format), deterministic
// splits and sample streams, distribution-drift resampling, and a synthetic
// Gaussian-blob generator for experiments.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "quantopt/core.hpp"

namespace quantopt {

struct Dataset {
  std::vector<LabeledPoint> points;
  size_t dim = 0;

  size_t size() const { return points.size(); }
  int64_t positives() const {
    int64_t c = 0;
    for (const auto& p : points) c += p.label > 0 ? 1 : 0;
    return c;
  }
  double pos_fraction() const {
    return points.empty() ? 0.0 : static_cast<double>(positives()) / points.size();
  }
  ClassPrior prior() const { return ClassPrior::of(pos_fraction()); }
};

// Parse failure carrying every offending line.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), line_errors_(std::move(errors)) {}

  const std::vector<std::string>& line_errors() const { return line_errors_; }

 private:
  static std::string join(const std::vector<std::string>& errors) {
    constexpr size_t kShown = 10;
    std::string msg = "failed to parse dataset:";
    for (size_t i = 0; i < errors.size() && i < kShown; ++i) {
      msg += "\n  ";
      msg += errors[i];
    }
    if (errors.size() > kShown)
      msg += "\n  ... and " + std::to_string(errors.size() - kShown) + " more";
    return msg;
  }
  std::vector<std::string> line_errors_;
};

namespace detail {

// from_chars does not accept an explicit '+'; SVMlight labels carry one.
inline std::string_view strip_plus(std::string_view sv) {
  if (sv.size() > 1 && sv.front() == '+') sv.remove_prefix(1);
  return sv;
}

inline bool parse_double(std::string_view sv, double& out) {
  sv = strip_plus(sv);
  const char* first = sv.data();
  const char* last = sv.data() + sv.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

inline bool parse_long(std::string_view sv, long long& out) {
  sv = strip_plus(sv);
  const char* first = sv.data();
  const char* last = sv.data() + sv.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace detail

// SVMlight / LIBSVM text: one "<label> <index>:<value> ..." record per line,
// 1-based feature indices (converted to 0-based), labels +1/-1 with 0 and 1
// accepted ({0 -> -1}). '#' starts a comment; qid tokens are ignored. Errors
// are collected across the whole input and reported together with line
// numbers.
inline Dataset parse_svmlight(std::istream& in) {
  Dataset ds;
  std::vector<std::string> errors;
  std::string line;
  size_t line_no = 0;
  uint32_t max_index = 0;
  bool any_feature = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string tok;
    if (!(tokens >> tok)) continue;  // blank or comment-only line

    auto fail = [&](const std::string& what) {
      errors.push_back("line " + std::to_string(line_no) + ": " + what);
    };

    long long label_val = 0;
    double label_dbl = 0.0;
    if (detail::parse_long(tok, label_val)) {
      // integer label
    } else if (detail::parse_double(tok, label_dbl) && label_dbl == static_cast<long long>(label_dbl)) {
      label_val = static_cast<long long>(label_dbl);
    } else {
      fail("malformed label '" + tok + "'");
      continue;
    }
    if (label_val != 1 && label_val != -1 && label_val != 0) {
      fail("unsupported label " + std::to_string(label_val) + " (binary data required)");
      continue;
    }

    LabeledPoint pt;
    pt.label = label_val == 0 ? -1 : static_cast<int>(label_val);
    bool line_ok = true;
    while (tokens >> tok) {
      if (tok.rfind("qid:", 0) == 0) continue;
      auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size()) {
        fail("malformed feature token '" + tok + "'");
        line_ok = false;
        break;
      }
      long long idx = 0;
      double val = 0.0;
      if (!detail::parse_long(std::string_view(tok).substr(0, colon), idx) || idx < 1) {
        fail("feature index must be a positive integer in '" + tok + "'");
        line_ok = false;
        break;
      }
      if (!detail::parse_double(std::string_view(tok).substr(colon + 1), val) ||
          !std::isfinite(val)) {
        fail("feature value must be finite in '" + tok + "'");
        line_ok = false;
        break;
      }
      pt.features.push_back({static_cast<uint32_t>(idx - 1), val});
    }
    if (!line_ok) continue;

    std::sort(pt.features.begin(), pt.features.end(),
              [](const Feature& a, const Feature& b) { return a.index < b.index; });
    for (size_t i = 1; i < pt.features.size(); ++i) {
      if (pt.features[i].index == pt.features[i - 1].index) {
        fail("duplicate feature index " + std::to_string(pt.features[i].index + 1));
        line_ok = false;
        break;
      }
    }
    if (!line_ok) continue;

    if (!pt.features.empty()) {
      any_feature = true;
      max_index = std::max(max_index, pt.features.back().index);
    }
    ds.points.push_back(std::move(pt));
  }

  if (ds.points.empty()) errors.push_back("no data points found");
  if (!errors.empty()) throw ParseError(std::move(errors));
  ds.dim = any_feature ? static_cast<size_t>(max_index) + 1 : 0;
  return ds;
}

inline Dataset parse_svmlight(const std::string& text) {
  std::istringstream in(text);
  return parse_svmlight(in);
}

inline Dataset load_svmlight_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  return parse_svmlight(in);
}

inline void serialize_svmlight(const Dataset& ds, std::ostream& out) {
  char buf[64];
  for (const auto& pt : ds.points) {
    out << (pt.label > 0 ? "+1" : "-1");
    for (const auto& f : pt.features) {
      std::snprintf(buf, sizeof(buf), "%.17g", f.value);
      out << ' ' << (f.index + 1) << ':' << buf;
    }
    out << '\n';
  }
}

inline std::string serialize_svmlight(const Dataset& ds) {
  std::ostringstream out;
  serialize_svmlight(ds, out);
  return out.str();
}

// Per-feature max-abs scaling into [-1, 1]. Features never seen keep scale 1.
inline Dataset scale_features_maxabs(Dataset ds) {
  std::vector<double> maxabs(ds.dim, 0.0);
  for (const auto& pt : ds.points)
    for (const auto& f : pt.features) maxabs[f.index] = std::max(maxabs[f.index], std::abs(f.value));
  for (auto& pt : ds.points)
    for (auto& f : pt.features)
      if (maxabs[f.index] > 0.0) f.value /= maxabs[f.index];
  return ds;
}

// Deterministic shuffled split; sizes are round(train_frac * n) and the rest.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double train_frac,
                                                    uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw std::invalid_argument("train fraction must lie strictly inside (0, 1)");
  size_t n = ds.points.size();
  size_t train_n = static_cast<size_t>(std::llround(train_frac * static_cast<double>(n)));
  if (train_n == 0 || train_n >= n)
    throw std::invalid_argument("split would leave an empty train or test side");

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5717));
  rng.shuffle(order);

  Dataset train, test;
  train.dim = test.dim = ds.dim;
  train.points.reserve(train_n);
  test.points.reserve(n - train_n);
  for (size_t i = 0; i < n; ++i)
    (i < train_n ? train : test).points.push_back(ds.points[order[i]]);
  return {std::move(train), std::move(test)};
}

enum class StreamOrder { IidWithReplacement, ShuffledEpochs };

struct StreamConfig {
  uint64_t seed = 0;
  StreamOrder order = StreamOrder::IidWithReplacement;
};

// Infinite stream of draws from a dataset: either iid with replacement or
// repeated full passes, each pass a fresh seeded permutation.
class SampleStream {
 public:
  SampleStream(const Dataset& ds, StreamConfig cfg)
      : data_(&ds), cfg_(cfg), rng_(derive_seed(cfg.seed, 0xd47a)) {
    if (ds.points.empty()) throw std::invalid_argument("stream over an empty dataset");
    if (cfg.order == StreamOrder::ShuffledEpochs) {
      perm_.resize(ds.points.size());
      for (size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
      reshuffle();
    }
  }

  const LabeledPoint* next() {
    const auto& pts = data_->points;
    if (cfg_.order == StreamOrder::IidWithReplacement)
      return &pts[rng_.uniform_index(pts.size())];
    if (cursor_ == perm_.size()) reshuffle();
    return &pts[perm_[cursor_++]];
  }

 private:
  void reshuffle() {
    rng_.shuffle(perm_);
    cursor_ = 0;
  }

  const Dataset* data_;
  StreamConfig cfg_;
  Rng rng_;
  std::vector<size_t> perm_;
  size_t cursor_ = 0;
};

// Bounds any stream to a fixed number of samples.
template <class Stream>
class TakeStream {
 public:
  TakeStream(Stream& inner, int64_t limit) : inner_(&inner), left_(limit) {}

  const LabeledPoint* next() {
    if (left_ <= 0) return nullptr;
    --left_;
    return inner_->next();
  }

 private:
  Stream* inner_;
  int64_t left_;
};

// Resample to a target prevalence: a target_p coin picks the class, then a
// uniform draw picks a member within the class.
inline Dataset drift_resample(const Dataset& ds, double target_p, size_t size, uint64_t seed) {
  if (!(target_p > 0.0 && target_p < 1.0))
    throw std::invalid_argument("drift target prevalence must lie inside (0, 1)");
  if (size == 0) throw std::invalid_argument("drift resample size must be positive");
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < ds.points.size(); ++i)
    (ds.points[i].label > 0 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("drift resample requires both classes present");

  Rng rng(derive_seed(seed, 0xd21f7));
  Dataset out;
  out.dim = ds.dim;
  out.points.reserve(size);
  for (size_t i = 0; i < size; ++i) {
    const auto& pool = rng.bernoulli(target_p) ? pos : neg;
    out.points.push_back(ds.points[pool[rng.uniform_index(pool.size())]]);
  }
  return out;
}

// Two Gaussian blobs in the plane, positives around +center, negatives
// around -center, P(positive) = pos_fraction. Points are dense 2-feature
// records, so linear models through the origin can separate them.
struct BlobConfig {
  size_t count = 1000;
  double pos_fraction = 0.3;
  Vec2 center{1.5, 1.5};
  double sigma = 0.7;
  uint64_t seed = 1;
};

inline Dataset make_gaussian_blobs(const BlobConfig& cfg) {
  if (cfg.count == 0) throw std::invalid_argument("blob count must be positive");
  Rng rng(derive_seed(cfg.seed, 0xb10b));
  Dataset ds;
  ds.dim = 2;
  ds.points.reserve(cfg.count);
  for (size_t i = 0; i < cfg.count; ++i) {
    bool positive = rng.bernoulli(cfg.pos_fraction);
    double sx = positive ? cfg.center.x : -cfg.center.x;
    double sy = positive ? cfg.center.y : -cfg.center.y;
    LabeledPoint pt;
    pt.label = positive ? 1 : -1;
    pt.features = {{0, sx + cfg.sigma * rng.normal()}, {1, sy + cfg.sigma * rng.normal()}};
    ds.points.push_back(std::move(pt));
  }
  return ds;
}

}  // namespace quantopt
