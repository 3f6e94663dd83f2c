#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace csqr {

// Exit-code taxonomy used by the CLI: config_error -> 2, data_error -> 3,
// numeric_error -> 4.  Library preconditions throw std::invalid_argument /
// std::domain_error, which the CLI treats as usage errors.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class diverged_error : public numeric_error {
 public:
  diverged_error(const std::string& what, int epoch)
      : numeric_error(what), epoch_(epoch) {}
  explicit diverged_error(int epoch)
      : numeric_error("training loss became non-finite at epoch " +
                      std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point a, Point b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct BBox {
  double xmin = 0.0, ymin = 0.0, xmax = 1.0, ymax = 1.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  Point center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
};

// Min-max map of raw coordinates onto the unit square.  Degenerate axes
// (all points identical) map to 0.5.
Point scale_point(const BBox& box, Point p);

// Inverse logit, e^x / (1 + e^x), evaluated without overflow.
double expit(double x);

// Standard normal quantile function (Wichura's AS 241 rational
// approximation; absolute error well below 1e-9 on (0,1)).
double norm_quantile(double p);

// splitmix64 step, used to derive independent seed streams.
std::uint64_t splitmix64(std::uint64_t& state);

// Deterministic seed derivation: mixes a master seed with stream tags so
// replicate / stream RNGs are independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag_a,
                          std::uint64_t tag_b = 0);

// RNG wrapper: all draws reduce to uniforms from mt19937_64, with normals
// taken through the inverse CDF so every stream is reproducible from its
// seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() { return norm_quantile(uniform()); }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // Fisher-Yates; stable across platforms, unlike std::shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(engine_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Shortest decimal representation that round-trips the double exactly;
// used everywhere a number is written to CSV/JSON/SVG so reruns are
// byte-identical.
std::string format_double(double v);

// Strict parse of a full numeric field ('.') as used by the CSV reader.
double parse_double(const std::string& field, const std::string& context);

}  // namespace csqr
