#include "dmq/dsec.hpp"

#include "dmq/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dmq {

namespace {

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw InputError(std::string("dsec: ") + name + " must be positive and finite");
}

Eigen::Index validate(const DsecQuery& q) {
  if (q.probe.rows() == 0) throw InputError("dsec: probe set D2 must be nonempty");
  const Eigen::Index d = q.probe.cols();
  if (d == 0) throw InputError("dsec: zero-dimensional features");
  if (q.reference.rows() > 0 && q.reference.cols() != d) {
    throw InputError("dsec: D1 features have dimension " + std::to_string(q.reference.cols()) + ", D2 has " +
                     std::to_string(d));
  }
  if (!q.probe.allFinite() || !q.reference.allFinite()) throw InputError("dsec: non-finite feature");
  require_positive(q.eps1, "eps1");
  require_positive(q.eps2, "eps2");
  require_positive(q.lambda_r, "lambda_r");
  if (q.policy_count < 1) throw InputError("dsec: policy_count must be >= 1");
  return d;
}

double determinant_pd(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw NotPsdError("potential_process: accumulated matrix is not positive definite");
  const Vector diag = llt.matrixL().toDenseMatrix().diagonal();
  const double root = diag.prod();
  return root * root;
}

// Unit vector from d-1 hyperspherical angles.
Vector sphere_point(const Vector& angles, Eigen::Index d) {
  Vector u(d);
  double sin_prod = 1.0;
  for (Eigen::Index i = 0; i + 1 < d; ++i) {
    u(i) = sin_prod * std::cos(angles(i));
    sin_prod *= std::sin(angles(i));
  }
  u(d - 1) = sin_prod;
  return u;
}

}  // namespace

ConstrainedMax constrained_quadratic_max(const SymMatrix& constraint, const SymMatrix& objective, double budget) {
  if (constraint.dim() != objective.dim()) throw InputError("constrained_quadratic_max: dimension mismatch");
  const SymMatrix whitening = inv_sqrt_psd(constraint);
  const SymMatrix reduced =
      SymMatrix::symmetrized(whitening.matrix() * objective.matrix() * whitening.matrix());
  const TopEigenpair top = top_eig(reduced);
  return ConstrainedMax{budget * top.value, std::sqrt(budget) * (whitening.matrix() * top.vector)};
}

DsecVerdict dsec_check(const DsecQuery& query) {
  const Eigen::Index d = validate(query);
  const double ridge = query.lambda_r / static_cast<double>(query.policy_count);

  Matrix m1 = mean_outer_product(query.reference, d);
  m1.diagonal().array() += ridge;

  DsecVerdict verdict;
  verdict.policy_count = query.policy_count;
  verdict.m1 = SymMatrix::symmetrized(m1);
  verdict.m2 = SymMatrix::symmetrized(mean_outer_product(query.probe, d));

  if (query.reference.rows() == 0) {
    verdict.triggered = true;
    verdict.empty_reference = true;
    return verdict;
  }
  ConstrainedMax best = constrained_quadratic_max(verdict.m1, verdict.m2, query.eps1);
  verdict.value = best.value;
  verdict.direction = std::move(best.direction);
  verdict.triggered = *verdict.value >= query.eps2;
  return verdict;
}

double dsec_bruteforce(const DsecQuery& query) {
  const Eigen::Index d = validate(query);
  if (d > 4) throw UnsupportedError("dsec_bruteforce: reference solver supports d <= 4 only");
  if (query.reference.rows() == 0) throw UnsupportedError("dsec_bruteforce: objective is unbounded for empty D1");

  // Plain accumulation, deliberately not sharing code with dsec_check.
  Matrix m1 = Matrix::Zero(d, d);
  Matrix m2 = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < query.reference.rows(); ++i) {
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) m1(r, c) += query.reference(i, r) * query.reference(i, c);
  }
  m1 /= static_cast<double>(query.reference.rows());
  for (Eigen::Index r = 0; r < d; ++r) m1(r, r) += query.lambda_r / query.policy_count;
  for (Eigen::Index i = 0; i < query.probe.rows(); ++i) {
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) m2(r, c) += query.probe(i, r) * query.probe(i, c);
  }
  m2 /= static_cast<double>(query.probe.rows());

  // x = sqrt(eps1) L^{-T} u sweeps the ellipsoid boundary as u sweeps the unit sphere.
  const Eigen::LLT<Matrix> llt(m1);
  const auto upper = llt.matrixU();
  const double scale = std::sqrt(query.eps1);
  auto objective = [&](const Vector& angles) {
    const Vector x = scale * upper.solve(sphere_point(angles, d));
    return x.dot(m2 * x);
  };

  if (d == 1) return objective(Vector(0));

  const Eigen::Index n_angles = d - 1;
  const int grid = d == 2 ? 4096 : (d == 3 ? 256 : 64);
  Vector range = Vector::Constant(n_angles, std::numbers::pi);
  range(n_angles - 1) = 2.0 * std::numbers::pi;

  Vector best_angles = Vector::Zero(n_angles);
  double best = -1.0;
  std::vector<int> counter(static_cast<std::size_t>(n_angles), 0);
  Vector angles(n_angles);
  const auto cells = [&](Eigen::Index i) { return i == n_angles - 1 ? 2 * grid : grid; };
  while (true) {
    for (Eigen::Index i = 0; i < n_angles; ++i) angles(i) = range(i) * counter[i] / cells(i);
    const double f = objective(angles);
    if (f > best) {
      best = f;
      best_angles = angles;
    }
    Eigen::Index i = 0;
    for (; i < n_angles; ++i) {
      if (++counter[i] < cells(i)) break;
      counter[i] = 0;
    }
    if (i == n_angles) break;
  }

  double step = std::numbers::pi / grid;
  while (step > 1e-13) {
    bool improved = false;
    for (Eigen::Index i = 0; i < n_angles; ++i) {
      for (double sign : {1.0, -1.0}) {
        Vector trial = best_angles;
        trial(i) += sign * step;
        const double f = objective(trial);
        if (f > best) {
          best = f;
          best_angles = trial;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

double potential_bound(int dim, double lambda_r) { return 2.0 * dim * std::log(dim / lambda_r); }

PotentialResult potential_process(std::span<const SymMatrix> stream, double eps_s, double eps_t, double lambda_r) {
  PotentialResult out;
  if (!(eps_t > 0.0) || !(lambda_r > 0.0)) throw ParameterError("potential_process: eps_t and lambda_r must be positive");
  if (stream.empty()) return out;
  const Eigen::Index d = stream.front().dim();
  out.dim = static_cast<int>(d);
  if (!(eps_s > 0.0) || eps_s > eps_t / static_cast<double>(d) * (1.0 + 1e-12)) {
    throw ParameterError("potential_process: requires 0 < eps_s <= eps_t / d");
  }

  Matrix accumulated = lambda_r * Matrix::Identity(d, d);
  double det = determinant_pd(accumulated);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const SymMatrix& m = stream[t];
    if (m.dim() != d) throw InputError("potential_process: dimension mismatch in stream");
    if (m.matrix().norm() > 1.0 + 1e-12) throw InputError("potential_process: matrix Frobenius norm exceeds 1");
    if (sym_eig(m).values.minCoeff() < -1e-10) throw NotPsdError("potential_process: stream matrix is not PSD");

    const double v = constrained_quadratic_max(SymMatrix::symmetrized(accumulated), m, eps_s).value;
    if (v < eps_t) continue;
    accumulated += m.matrix();
    const double det_after = determinant_pd(accumulated);
    out.admitted.push_back(static_cast<int>(t));
    out.log.push_back(PotentialStep{static_cast<int>(t), v, det, det_after});
    det = det_after;
  }
  return out;
}

std::vector<SymMatrix> random_psd_stream(int dim, int steps, Rng& rng) {
  if (dim < 1 || steps < 0) throw ParameterError("random_psd_stream: dim >= 1 and steps >= 0 required");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> rank_dist(1, dim);
  std::uniform_real_distribution<double> norm_dist(0.05, 1.0);
  std::vector<SymMatrix> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const int rank = rank_dist(rng);
    Matrix g(dim, rank);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    Matrix m = g * g.transpose();
    m *= norm_dist(rng) / m.norm();
    out.push_back(SymMatrix::symmetrized(m));
  }
  return out;
}

}  // namespace dmq
