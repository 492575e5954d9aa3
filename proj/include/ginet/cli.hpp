#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ginet/training.hpp"

namespace ginet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInsufficientData = 3;
inline constexpr int kExitNumeric = 4;

struct BenchRow {
  std::size_t length = 0;
  std::uint64_t full_ops = 0;
  std::uint64_t probsparse_ops = 0;
  double full_ms = 0.0;
  double probsparse_ms = 0.0;
};

/// Self-attention on random Q/K/V of shape [1, heads, L, d_model / heads],
/// full vs ProbSparse (sampled measure, default factor). Op counts cover the
/// attention kernel only, not the projections.
std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& lengths, std::size_t d_model,
                                      std::size_t heads, std::uint64_t seed, std::size_t factor = 5);

/// Static line plot of predicted vs true horizon-averaged SoC, one point per
/// window in report order.
std::string render_prediction_svg(const EvalReport& report);

/// GINET_THREADS if set to a positive integer, else the hardware thread count.
std::size_t thread_budget();

/// Maps library exceptions onto the exit-code contract.
int exit_code_for(const std::exception& e);

/// Entry point for the `ginet` command; writes human output to `out` and
/// diagnostics to `err`.
int run_cli(int argc, const char* const argv[], std::ostream& out, std::ostream& err);

}  // namespace ginet
