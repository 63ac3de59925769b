#pragma once

#include <stdexcept>
#include <string>

namespace icpp {

enum class ErrorKind {
  InvalidArgument,
  InvalidRegion,
  OutOfRegion,
  PatternUnsupported,
  EnumerationBudget,
  DegenerateStatistics,
  InfeasibleStart,
  TooFewPoints,
  RankDeficient,
  SelectionFailed,
  Ingestion,
  Config,
  Internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::InvalidRegion: return "invalid region";
    case ErrorKind::OutOfRegion: return "out of region";
    case ErrorKind::PatternUnsupported: return "pattern unsupported";
    case ErrorKind::EnumerationBudget: return "enumeration budget exceeded";
    case ErrorKind::DegenerateStatistics: return "degenerate statistics";
    case ErrorKind::InfeasibleStart: return "infeasible start";
    case ErrorKind::TooFewPoints: return "too few points";
    case ErrorKind::RankDeficient: return "rank deficient";
    case ErrorKind::SelectionFailed: return "selection failed";
    case ErrorKind::Ingestion: return "ingestion error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Internal: return "internal error";
  }
  return "error";
}

}  // namespace icpp
