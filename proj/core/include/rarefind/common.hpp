/*
 * Copyright 2026 The Rarefind Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef RAREFIND_COMMON_HPP_
#define RAREFIND_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rarefind {

// Error names are part of the public contract: the CLI prints them verbatim
// and the store records them in diagnostics.
enum class Errc {
  kInvalidArgument,
  kIo,
  kMalformedRow,
  kMissingRequiredColumn,
  kEmptyNarrative,
  kEmptySample,
  kMissingId,
  kDuplicateId,
  kDimensionMismatch,
  kEmptyVocabulary,
  kTooFewPoints,
  kNonUnitInput,
  kEmptyReference,
  kInsufficientCandidates,
  kTooFewReviewers,
  kNoCandidates,
  kUnfinishedRound,
  kStopConditionMet,
  kEmptyClass,
  kSingleClass,
  kTooManyFeaturesForExact,
  kEmptyBackground,
  kDegenerate,
  kIncompleteRound,
  kUnadjudicatedDisputes,
  kCorruptManifest,
  kLockedByAnotherProcess,
  kUnknownComplaint,
  kUnknownRound,
  kClosedRound,
  kNotDisputed,
  kNoCompletedRound,
  kReadOnly,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

// splitmix64 finalizer; used for seed derivation and hash mixing.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream tag.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) noexcept {
  return mix64(base ^ mix64(tag + 0x632be59bd9b4e019ULL));
}

// Seeded 64-bit hash of a byte string (FNV-1a core, splitmix finalizer).
std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed = 0) noexcept;

// Lowercase hex SHA-256, used for manifest and log-batch integrity checks.
std::string content_digest(std::string_view bytes);

// Platform-independent pseudo random generator. The standard distributions are
// implementation defined, so everything stochastic in the engine draws through
// this class to keep seeded runs byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) noexcept;

  // Uniform in [0, 1).
  double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Worker cap for data-parallel loops. 0 means hardware concurrency.
void set_max_threads(std::size_t threads);
std::size_t max_threads();

// Runs body(i) for i in [0, n) on up to max_threads() workers. Each index is
// visited exactly once; callers write results by index so output order never
// depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// UTC "YYYY-MM-DDTHH:MM:SSZ" for the current instant.
std::string utc_now_iso8601();

std::string read_file(const std::string& path);
// Writes through a temporary file and rename so readers never see a torn file.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace rarefind

#endif  // RAREFIND_COMMON_HPP_
