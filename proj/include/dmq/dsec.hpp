#pragma once

#include "dmq/linalg.hpp"
#include "dmq/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dmq {

/// Sample-based distribution-shift check. Rows of `reference` (D1, may be empty) and
/// `probe` (D2, nonempty) are state features. The regularizer is
/// lambda_r / policy_count * ||theta_1 - theta_2||^2.
struct DsecQuery {
  Matrix reference;
  Matrix probe;
  double eps1 = 0.0;
  double eps2 = 0.0;
  double lambda_r = 0.0;
  int policy_count = 1;
};

struct DsecVerdict {
  bool triggered = false;
  /// D1 was empty: the check triggers unconditionally and `value`/`direction` are absent.
  bool empty_reference = false;
  std::optional<double> value;
  std::optional<Vector> direction;
  /// M1 = mean(phi phi^T over D1) + lambda_r / policy_count * I.
  SymMatrix m1;
  /// M2 = mean(phi phi^T over D2).
  SymMatrix m2;
  int policy_count = 1;

  /// policy_count * M1: the per-policy-sum form lambda_r I + sum_pi (1/N) sum_i phi phi^T
  /// when |D1| = N * policy_count.
  Matrix unnormalized_reference() const { return static_cast<double>(policy_count) * m1.matrix(); }
};

struct ConstrainedMax {
  double value = 0.0;
  Vector direction;
};

/// max x^T B x subject to x^T A x <= budget for A positive definite, via the top
/// eigenpair of A^{-1/2} B A^{-1/2}. The direction attains the value on the boundary.
ConstrainedMax constrained_quadratic_max(const SymMatrix& constraint, const SymMatrix& objective, double budget);

DsecVerdict dsec_check(const DsecQuery& query);

/// Reference solver for d <= 4: searches the boundary of {x : x^T M1 x = eps1}
/// (Cholesky parametrization, angular grid plus pattern-search refinement). Test
/// oracle for dsec_check; returns the maximized x^T M2 x. Throws UnsupportedError
/// for d > 4 and for an empty D1.
double dsec_bruteforce(const DsecQuery& query);

struct PotentialStep {
  int index = 0;
  double value = 0.0;
  double det_before = 0.0;
  double det_after = 0.0;
};

struct PotentialResult {
  int dim = 0;
  std::vector<int> admitted;
  std::vector<PotentialStep> log;
};

/// 2 d ln(d / lambda_r).
double potential_bound(int dim, double lambda_r);

/// Matrix admission process: M_t is admitted iff some x has x^T M_t x >= eps_t and
/// x^T (lambda_r I + sum of admitted) x <= eps_s. Requires 0 < eps_s <= eps_t / d,
/// PSD inputs and ||M_t||_F <= 1.
PotentialResult potential_process(std::span<const SymMatrix> stream, double eps_s, double eps_t, double lambda_r);

/// Random PSD matrices G G^T (rank uniform in [1, d]) scaled to Frobenius norm in (0.05, 1].
std::vector<SymMatrix> random_psd_stream(int dim, int steps, Rng& rng);

}  // namespace dmq
