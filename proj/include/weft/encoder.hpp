#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "weft/error.hpp"

namespace weft {

using FeatureVector = std::vector<double>;

struct EncoderConfig {
  int dim = 2048;
  int ngram_min = 1;
  int ngram_max = 2;

  void validate() const {
    if (dim < 1) throw config_error("encoder dim must be >= 1");
    if (ngram_min < 1 || ngram_max < ngram_min)
      throw config_error("encoder n-gram orders must satisfy 1 <= min <= max");
  }
};

namespace detail {

// FNV-1a, 64 bit. Two fixed offset bases: one for the bucket, one for the
// sign. Both are recorded in the encoder description so feature files can
// be reproduced elsewhere.
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
constexpr std::uint64_t kBucketBasis = 14695981039346656037ULL;
constexpr std::uint64_t kSignBasis = 1099511628211ULL ^ 14695981039346656037ULL;

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

} // namespace detail

// Frozen stand-in for a pretrained representation layer: lowercase,
// split on non-alphanumeric bytes, hash token n-grams into `dim` buckets
// with a +/-1 sign from a second hash, then L2-normalize. Deterministic
// across runs and platforms; empty text maps to the zero vector.
class HashingEncoder {
public:
  explicit HashingEncoder(const EncoderConfig& cfg = {}) : cfg_(cfg) {
    cfg_.validate();
  }

  const EncoderConfig& config() const { return cfg_; }

  // ASCII-only classification so the token stream never depends on the
  // process locale; any other byte is a boundary.
  static bool is_token_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9');
  }

  std::vector<std::string> tokenize(const std::string& text) const {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
      if (is_token_byte(c)) {
        const bool upper = c >= 'A' && c <= 'Z';
        cur.push_back(static_cast<char>(upper ? c - 'A' + 'a' : c));
      } else if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
  }

  FeatureVector encode(const std::string& text) const {
    FeatureVector v(static_cast<std::size_t>(cfg_.dim), 0.0);
    const auto tokens = tokenize(text);
    for (std::size_t start = 0; start < tokens.size(); ++start) {
      std::string gram;
      for (int n = 1; n <= cfg_.ngram_max && start + n <= tokens.size(); ++n) {
        if (n > 1) gram.push_back(' ');
        gram += tokens[start + n - 1];
        if (n < cfg_.ngram_min) continue;
        const auto bucket = detail::fnv1a(gram, detail::kBucketBasis) %
                            static_cast<std::uint64_t>(cfg_.dim);
        const double sign =
            (detail::fnv1a(gram, detail::kSignBasis) & 1ULL) ? 1.0 : -1.0;
        v[static_cast<std::size_t>(bucket)] += sign;
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

  nlohmann::json describe() const {
    return {{"kind", "hashing-ngram"},
            {"dim", cfg_.dim},
            {"ngram_min", cfg_.ngram_min},
            {"ngram_max", cfg_.ngram_max},
            {"hash", "fnv1a-64"},
            {"bucket_basis", detail::kBucketBasis},
            {"sign_basis", detail::kSignBasis}};
  }

private:
  EncoderConfig cfg_;
};

// Adapter seam for externally computed embeddings: newline-delimited rows,
// example_id followed by exactly `expected_dim` reals, space separated.
inline std::map<std::string, FeatureVector>
load_precomputed(const std::string& path, int expected_dim) {
  if (expected_dim < 1) throw config_error("embedding dimension must be >= 1");
  std::ifstream in(path);
  if (!in) throw data_error("cannot open embedding file: " + path);

  std::map<std::string, FeatureVector> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id;
    if (!(row >> id))
      throw parse_error("line " + std::to_string(line_no) + ": missing example_id");
    FeatureVector v;
    v.reserve(static_cast<std::size_t>(expected_dim));
    double x = 0.0;
    while (row >> x) v.push_back(x);
    if (!row.eof())
      throw data_error("line " + std::to_string(line_no) +
                       ": non-numeric token in embedding row '" + id + "'");
    if (static_cast<int>(v.size()) != expected_dim)
      throw config_error("line " + std::to_string(line_no) + ": row '" + id +
                         "' has " + std::to_string(v.size()) +
                         " values, configured dimension is " +
                         std::to_string(expected_dim));
    for (double val : v)
      if (!std::isfinite(val))
        throw data_error("line " + std::to_string(line_no) + ": row '" + id +
                         "' contains a non-finite value");
    if (!table.emplace(id, std::move(v)).second)
      throw integrity_error("duplicate embedding row for example_id '" + id + "'");
  }
  return table;
}

inline void write_precomputed(const std::string& path,
                              const std::map<std::string, FeatureVector>& table) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write embedding file: " + path);
  out.precision(17);
  for (const auto& [id, v] : table) {
    out << id;
    for (double x : v) out << ' ' << x;
    out << '\n';
  }
}

} // namespace weft
