#pragma once

#include <cstdint>
#include <vector>

#include "estimate.hpp"
#include "lattice.hpp"

namespace kcsm {

/// Which of the three two-zero patterns of the event A holds (besides the
/// empty origin): {1,2}, {-1,1} or {-2,-1} empty.
enum class AWitness : uint8_t { RightPair, StraddlePair, LeftPair };

/// 1d configuration conditioned on A: origin empty and three consecutive
/// zeros, one of which at the origin.
struct ConditionedConfig {
  SpinConfig config;
  AWitness witness;
};

/// A-membership of the 5-site window around the origin.
bool in_A(const SpinConfig& c);

/// mu(A) = q^3 (1 + 2p): exact mass of A on the 5-site window.
double mu_A(const Params& params);

/// Window law of mu^(3) = mu(.|A): probability of each of the 2^5 window
/// assignments (bit i = occupancy of site i-2), zero outside A.
std::vector<double> mu3_window_law(const Params& params);

/// Sample from mu^(3) on a periodic ring: the 5-site window around the origin
/// follows the exact conditional law, all other sites are i.i.d. Bernoulli.
ConditionedConfig sample_mu3(const Params& params, int64_t ring, Rng& rng);

enum class AuxMove : uint8_t { JumpRight, JumpLeft, Swap };

/// The enabled moves of the auxiliary dynamics: jump right if eta_1 = 0, jump
/// left if eta_{-1} = 0, swap if eta_1 = 1 or eta_{-1} = 1. Exactly two are
/// enabled for every configuration in A.
std::vector<AuxMove> enabled_moves(const ConditionedConfig& c);

struct AuxPath {
  std::vector<double> move_times;
  std::vector<AuxMove> moves;
  std::vector<int64_t> n_after;  // label index after each move
  std::vector<int64_t> x_after;  // tracer displacement after each move
  std::vector<double> sample_times;
  std::vector<int64_t> x_samples;
  std::vector<int64_t> n_samples_path;
  uint64_t seed = 0;
  int64_t violations = 0;  // post-move configurations found outside A
};

struct AuxOptions {
  int64_t ring = 4096;
  bool record_moves = false;
};

/// Continuous-time auxiliary dynamics started from c0 in A: the two enabled
/// moves fire at rate 1 each. X changes only on jumps; N changes by +-1 on
/// every move (+1 for the forward move: jump right when eta_1=0, swap
/// otherwise). Asserts the configuration stays in A.
AuxPath simulate_aux(const ConditionedConfig& c0, double horizon,
                     const std::vector<double>& sample_times, uint64_t seed,
                     const AuxOptions& opts = {});

/// Dbar = lim E[X_t^2]/(2t) over an ensemble of auxiliary paths.
EstimateReport estimate_Dbar(const std::vector<AuxPath>& paths,
                             const FitOptions& opts = {});

/// k-zeros reconstruction bound (worked case k = 3):
/// e1.De1 >= ((1+2p)/4) q^4 Dbar.
double kzeros_lower_bound(const EstimateReport& dbar, const Params& params);

}  // namespace kcsm
