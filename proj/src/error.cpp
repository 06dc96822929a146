#include "vpat/error.hpp"

#include <cmath>
#include <sstream>

#include "vpat/rng.hpp"

namespace vpat {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kRejectedControl: return "rejected-control";
    case ErrorCode::kTwinMiss: return "twin-miss";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kNoData: return "no-data";
    case ErrorCode::kOverlap: return "overlap";
    case ErrorCode::kDuplicateMapping: return "duplicate-mapping";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kUndefined: return "undefined";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kTooShort: return "too-short";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kRejected: return "rejected";
    case ErrorCode::kAlignment: return "alignment";
    case ErrorCode::kUnknownSession: return "unknown-session";
    case ErrorCode::kScheme: return "scheme";
    case ErrorCode::kGrouping: return "grouping";
    case ErrorCode::kNotApplicable: return "not-applicable";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kDanglingReference: return "dangling-reference";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMismatch: return "mismatch";
  }
  return "unknown";
}

double Rng::exponential(double rate) {
  // 1 - u is in (0, 1], so the log is finite.
  return -std::log(1.0 - uniform()) / rate;
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
}

}  // namespace vpat
