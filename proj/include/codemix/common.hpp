#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace codemix {

// Error taxonomy. Parse/Schema/Config map to the distinct failure modes the
// file loaders and CLI report; TrainError covers non-finite losses and other
// aborts inside training loops.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TransliterationError : public std::runtime_error {
 public:
  TransliterationError(const std::string& message, std::string original)
      : std::runtime_error(message), original_text(std::move(original)) {}
  std::string original_text;
};

// Deterministic RNG. mt19937_64 has a standard-specified output sequence;
// the bounded/real/gaussian draws are hand-rolled so results do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n). Rejection sampling to avoid modulo bias.
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be > 0");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return mean + stddev * u * m;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent stream seed from components, e.g. (seed, epoch, index).
  static uint64_t derive(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t x = a * 0x9E3779B97F4A7C15ull + b;
    x = splitmix(x) + c;
    return splitmix(x);
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a, used for data/config fingerprints in manifests and checkpoints.
inline uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string hex64(uint64_t value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);
uint64_t file_fingerprint(const std::string& path);

// Warnings go to stderr so artifact files stay deterministic.
void log_warning(const std::string& message);
void log_info(const std::string& message);

}  // namespace codemix
