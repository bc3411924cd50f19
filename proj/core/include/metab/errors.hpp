#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metab {

// Exit codes shared with the CLI: 2 parse/validation, 3 infeasible bin,
// 4 non-convergence.
enum class ExitCode : int {
  ok = 0,
  usage = 1,
  validation = 2,
  infeasible = 3,
  no_convergence = 4,
};

// Malformed input, broken table invariants, bad arguments.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A bin whose conditional mean is not strictly interior to the bin.
// `bin` is 1-based (top bin = 1); 0 means the offending bin is unknown.
class InfeasibleBinError : public std::runtime_error {
public:
  explicit InfeasibleBinError(const std::string& what, std::size_t bin = 0)
      : std::runtime_error(what), bin_(bin) {}
  std::size_t bin() const noexcept { return bin_; }

private:
  std::size_t bin_;
};

// An iterative routine hit its cap without meeting the relaxed tolerance.
class ConvergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace metab
