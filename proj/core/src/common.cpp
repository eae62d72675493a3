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

#include "rarefind/common.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

namespace rarefind {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kIo: return "IoError";
    case Errc::kMalformedRow: return "MalformedRow";
    case Errc::kMissingRequiredColumn: return "MissingRequiredColumn";
    case Errc::kEmptyNarrative: return "EmptyNarrative";
    case Errc::kEmptySample: return "EmptySample";
    case Errc::kMissingId: return "MissingId";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kEmptyVocabulary: return "EmptyVocabulary";
    case Errc::kTooFewPoints: return "TooFewPoints";
    case Errc::kNonUnitInput: return "NonUnitInput";
    case Errc::kEmptyReference: return "EmptyReference";
    case Errc::kInsufficientCandidates: return "InsufficientCandidates";
    case Errc::kTooFewReviewers: return "TooFewReviewers";
    case Errc::kNoCandidates: return "NoCandidates";
    case Errc::kUnfinishedRound: return "UnfinishedRound";
    case Errc::kStopConditionMet: return "StopConditionMet";
    case Errc::kEmptyClass: return "EmptyClass";
    case Errc::kSingleClass: return "SingleClass";
    case Errc::kTooManyFeaturesForExact: return "TooManyFeaturesForExact";
    case Errc::kEmptyBackground: return "EmptyBackground";
    case Errc::kDegenerate: return "Degenerate";
    case Errc::kIncompleteRound: return "IncompleteRound";
    case Errc::kUnadjudicatedDisputes: return "UnadjudicatedDisputes";
    case Errc::kCorruptManifest: return "CorruptManifest";
    case Errc::kLockedByAnotherProcess: return "LockedByAnotherProcess";
    case Errc::kUnknownComplaint: return "UnknownComplaint";
    case Errc::kUnknownRound: return "UnknownRound";
    case Errc::kClosedRound: return "ClosedRound";
    case Errc::kNotDisputed: return "NotDisputed";
    case Errc::kNoCompletedRound: return "NoCompletedRound";
    case Errc::kReadOnly: return "ReadOnly";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message),
      code_(code) {}

std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h ^ bytes.size());
}

std::string content_digest(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::kIo, "SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

std::size_t Rng::uniform_index(std::size_t n) noexcept {
  // Lemire's nearly-divisionless bounded draw with rejection.
  const std::uint64_t range = n;
  std::uint64_t x = next();
  __uint128_t m = static_cast<__uint128_t>(x) * range;
  std::uint64_t low = static_cast<std::uint64_t>(m);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      x = next();
      m = static_cast<__uint128_t>(x) * range;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::size_t>(m >> 64);
}

namespace {
std::atomic<std::size_t> g_max_threads{0};
}

void set_max_threads(std::size_t threads) { g_max_threads = threads; }

std::size_t max_threads() {
  std::size_t t = g_max_threads.load();
  if (t == 0) t = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return t;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(max_threads(), n);
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto run = [&] {
    constexpr std::size_t kChunk = 16;
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t begin = next.fetch_add(kChunk);
      if (begin >= n) break;
      const std::size_t end = std::min(n, begin + kChunk);
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(Errc::kIo, "cannot write " + tmp);
  std::size_t off = 0;
  while (off < content.size()) {
    const ssize_t w = ::write(fd, content.data() + off, content.size() - off);
    if (w < 0) {
      ::close(fd);
      throw Error(Errc::kIo, "write failed for " + tmp);
    }
    off += static_cast<std::size_t>(w);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(Errc::kIo, "rename failed for " + path + ": " + ec.message());
}

}  // namespace rarefind
