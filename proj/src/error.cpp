#include "homog2s/error.hpp"

#include <atomic>
#include <thread>

#include "homog2s/parallel.hpp"

namespace homog2s {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParameterOutOfRange:
      return "parameter-out-of-range";
    case ErrorKind::DegenerateJacobian:
      return "degenerate-jacobian";
    case ErrorKind::NoConvergence:
      return "no-convergence";
    case ErrorKind::MisalignedGrid:
      return "misaligned-grid";
    case ErrorKind::ResolutionMismatch:
      return "resolution-mismatch";
    case ErrorKind::NonFiniteCoefficient:
      return "non-finite-coefficient";
    case ErrorKind::NegativeReaction:
      return "negative-reaction";
    case ErrorKind::MaxIterationsExceeded:
      return "max-iterations-exceeded";
    case ErrorKind::InvertedElement:
      return "inverted-element";
    case ErrorKind::CoercivityViolation:
      return "coercivity-violation";
    case ErrorKind::Tiling:
      return "tiling";
    case ErrorKind::Config:
      return "config";
    case ErrorKind::Io:
      return "io";
  }
  return "unknown";
}

namespace {
std::atomic<int> g_jobs{0};
}

int default_jobs() {
  const int j = g_jobs.load();
  if (j > 0) return j;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_jobs(int jobs) { g_jobs.store(jobs); }

}  // namespace homog2s
