#pragma once

// Weighted determinant maximization over block-diagonal PSD variables:
//
//   minimize   <C, X> - sum_i c_i log det X_i
//   subject to A(X) = b,  X = Diag(X_1, ..., X_n) >= 0
//
// solved with a primal-dual path-following method in the N_inf(gamma)
// neighborhood of the weighted central path X_i Z_i = max(c_i, nu) I.

#include "srdkit/linalg.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace srdkit::maxdet {

template <typename Scalar>
struct BlockSpec {
  Index size = 0;
  Scalar weight = Scalar(0);
};

/// Symmetric block-diagonal matrix stored block by block.
template <typename Scalar>
struct BlockDiag {
  std::vector<Matrix<Scalar>> blocks;

  static BlockDiag zeros(const std::vector<BlockSpec<Scalar>>& specs) {
    BlockDiag out;
    out.blocks.reserve(specs.size());
    for (const auto& s : specs) out.blocks.push_back(Matrix<Scalar>::Zero(s.size, s.size));
    return out;
  }

  static BlockDiag identity(const std::vector<BlockSpec<Scalar>>& specs, Scalar scale = Scalar(1)) {
    BlockDiag out;
    out.blocks.reserve(specs.size());
    for (const auto& s : specs) out.blocks.push_back(Matrix<Scalar>::Identity(s.size, s.size) * scale);
    return out;
  }

  Index num_blocks() const { return static_cast<Index>(blocks.size()); }
  Matrix<Scalar>& operator[](Index i) { return blocks[static_cast<std::size_t>(i)]; }
  const Matrix<Scalar>& operator[](Index i) const { return blocks[static_cast<std::size_t>(i)]; }

  BlockDiag& operator+=(const BlockDiag& o) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] += o.blocks[i];
    return *this;
  }
  BlockDiag& operator-=(const BlockDiag& o) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i] -= o.blocks[i];
    return *this;
  }
  BlockDiag& operator*=(Scalar a) {
    for (auto& b : blocks) b *= a;
    return *this;
  }
};

template <typename Scalar>
BlockDiag<Scalar> operator+(BlockDiag<Scalar> a, const BlockDiag<Scalar>& b) { return a += b; }
template <typename Scalar>
BlockDiag<Scalar> operator-(BlockDiag<Scalar> a, const BlockDiag<Scalar>& b) { return a -= b; }
template <typename Scalar>
BlockDiag<Scalar> operator*(Scalar s, BlockDiag<Scalar> a) { return a *= s; }

template <typename Scalar>
Scalar inner(const BlockDiag<Scalar>& a, const BlockDiag<Scalar>& b) {
  Scalar acc(0);
  for (std::size_t i = 0; i < a.blocks.size(); ++i) acc += a.blocks[i].cwiseProduct(b.blocks[i]).sum();
  return acc;
}

template <typename Scalar>
Scalar frobenius_norm(const BlockDiag<Scalar>& a) {
  return std::sqrt(inner(a, a));
}

template <typename Scalar>
BlockDiag<Scalar> symmetrize(BlockDiag<Scalar> a) {
  for (auto& b : a.blocks) b = srdkit::symmetrize(b);
  return a;
}

/// Entry (row <= col) of a symmetric coefficient matrix.
template <typename Scalar>
struct SymEntry {
  Index row = 0;
  Index col = 0;
  Scalar value = Scalar(0);
};

/// Coefficient matrix of one equality row restricted to one block.
template <typename Scalar>
struct Term {
  Index block = 0;
  std::vector<SymEntry<Scalar>> entries;

  Scalar dot(const Matrix<Scalar>& m) const {
    Scalar acc(0);
    for (const auto& e : entries)
      acc += e.row == e.col ? e.value * m(e.row, e.row) : e.value * (m(e.row, e.col) + m(e.col, e.row));
    return acc;
  }

  void add_to(Matrix<Scalar>& m, Scalar scale) const {
    for (const auto& e : entries) {
      m(e.row, e.col) += scale * e.value;
      if (e.row != e.col) m(e.col, e.row) += scale * e.value;
    }
  }

  Matrix<Scalar> dense(Index size) const {
    Matrix<Scalar> m = Matrix<Scalar>::Zero(size, size);
    add_to(m, Scalar(1));
    return m;
  }
};

/// Builds a term from the symmetric part of a dense coefficient matrix; exact zeros are skipped.
template <typename Scalar>
Term<Scalar> make_term(Index block, const Matrix<Scalar>& coeff) {
  Term<Scalar> t;
  t.block = block;
  const Matrix<Scalar> sym = srdkit::symmetrize(coeff);
  for (Index c = 0; c < sym.cols(); ++c)
    for (Index r = 0; r <= c; ++r)
      if (sym(r, c) != Scalar(0)) t.entries.push_back({r, c, sym(r, c)});
  return t;
}

template <typename Scalar>
using EqRow = std::vector<Term<Scalar>>;

/// Sparse linear map from symmetric block-diagonal matrices to R^m.
template <typename Scalar>
struct EqualityMap {
  std::vector<EqRow<Scalar>> rows;

  Index size() const { return static_cast<Index>(rows.size()); }

  Index add_row(EqRow<Scalar> row) {
    rows.push_back(std::move(row));
    return size() - 1;
  }

  Vector<Scalar> apply(const BlockDiag<Scalar>& x) const {
    Vector<Scalar> out(size());
    for (Index j = 0; j < size(); ++j) {
      Scalar acc(0);
      for (const auto& t : rows[static_cast<std::size_t>(j)]) acc += t.dot(x[t.block]);
      out(j) = acc;
    }
    return out;
  }

  BlockDiag<Scalar> adjoint(const Vector<Scalar>& y, const std::vector<BlockSpec<Scalar>>& specs) const {
    auto out = BlockDiag<Scalar>::zeros(specs);
    for (Index j = 0; j < size(); ++j)
      for (const auto& t : rows[static_cast<std::size_t>(j)]) t.add_to(out[t.block], y(j));
    return out;
  }
};

template <typename Scalar>
struct MaxDetProblem {
  std::vector<BlockSpec<Scalar>> blocks;
  BlockDiag<Scalar> cost;
  EqualityMap<Scalar> eq_map;
  Vector<Scalar> rhs;
  // Constraints only couple neighbouring time steps; the reduced Newton
  // system is then factorized with a sparse Cholesky instead of a dense one.
  bool time_chained = false;
  // Strictly feasible primal point supplied by the problem builder.
  std::optional<BlockDiag<Scalar>> hint;

  Index num_blocks() const { return static_cast<Index>(blocks.size()); }
  Index num_constraints() const { return eq_map.size(); }

  Index total_size() const {
    Index n = 0;
    for (const auto& b : blocks) n += b.size;
    return n;
  }

  std::vector<Scalar> weights() const {
    std::vector<Scalar> w;
    w.reserve(blocks.size());
    for (const auto& b : blocks) w.push_back(b.weight);
    return w;
  }

  void validate() const {
    if (cost.num_blocks() != num_blocks()) throw std::invalid_argument("cost does not match block structure");
    if (rhs.size() != num_constraints()) throw std::invalid_argument("rhs length differs from number of rows");
    for (Index i = 0; i < num_blocks(); ++i) {
      const auto& spec = blocks[static_cast<std::size_t>(i)];
      if (spec.size <= 0) throw std::invalid_argument("block sizes must be positive");
      if (!(spec.weight >= Scalar(0))) throw std::invalid_argument("block weights must be nonnegative");
      const auto& c = cost[i];
      if (c.rows() != spec.size || c.cols() != spec.size)
        throw std::invalid_argument("cost block " + std::to_string(i) + " has the wrong size");
      if (c != c.transpose()) throw std::invalid_argument("cost block " + std::to_string(i) + " is not symmetric");
    }
    for (const auto& row : eq_map.rows)
      for (const auto& t : row) {
        if (t.block < 0 || t.block >= num_blocks()) throw std::invalid_argument("equality term references unknown block");
        const Index n = blocks[static_cast<std::size_t>(t.block)].size;
        for (const auto& e : t.entries)
          if (e.row < 0 || e.col < e.row || e.col >= n)
            throw std::invalid_argument("equality entry outside upper triangle of its block");
      }
  }
};

struct SolverConfig {
  double gamma = 0.3;
  double sigma = 0.3;
  double eps = 1e-8;
  int max_iters = 200;
  double rank_tol = 1e-5;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0,1)");
    if (!(sigma > 0 && sigma < 1)) throw std::invalid_argument("sigma must lie in (0,1)");
    if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
    if (max_iters <= 0) throw std::invalid_argument("max_iters must be positive");
    if (!(rank_tol > 0)) throw std::invalid_argument("rank_tol must be positive");
  }
};

enum class SolverStatus { Optimal, MaxIters, NumericalFailure, Infeasible };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Optimal: return "optimal";
    case SolverStatus::MaxIters: return "max_iters";
    case SolverStatus::NumericalFailure: return "numerical_failure";
    case SolverStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// <X,Z> has reached sum_{i in I} c_i N_i: the gap is closed and mu is undefined.
class GapClosed : public std::domain_error {
 public:
  explicit GapClosed(const std::string& what) : std::domain_error(what) {}
};

template <typename Scalar>
struct State {
  BlockDiag<Scalar> X;
  Vector<Scalar> y;
  BlockDiag<Scalar> Z;
};

template <typename Scalar>
struct Direction {
  BlockDiag<Scalar> dX;
  Vector<Scalar> dy;
  BlockDiag<Scalar> dZ;
};

template <typename Scalar>
struct KktResiduals {
  Scalar primal_res = Scalar(0);  // ||A(X) - b||
  Scalar dual_res = Scalar(0);    // ||A*(y) + Z - C||_F
  Scalar min_eig_X = Scalar(0);
  Scalar min_eig_Z = Scalar(0);
  Scalar gap = Scalar(0);  // primal objective - dual objective
};

struct IterationLog {
  int iteration = 0;
  double mu = 0;
  double d_inf = 0;
  double primal_res = 0;
  double dual_res = 0;
  double gap = 0;
  double alpha = 0;
};

using IterationSink = std::function<void(const IterationLog&)>;

template <typename Scalar>
struct SolverSolution {
  BlockDiag<Scalar> X;
  Vector<Scalar> y;
  BlockDiag<Scalar> Z;
  Scalar mu = Scalar(0);
  Scalar mu0 = Scalar(0);
  Scalar objective = Scalar(0);
  Scalar dual_objective = Scalar(0);
  int iterations = 0;
  SolverStatus status = SolverStatus::NumericalFailure;
  std::string message;
  KktResiduals<Scalar> residuals;
};

// ---------------------------------------------------------------------------
// Centrality measures

/// Split of the blocks into I* (c_i >= nu) and the rest, with mu = nu.
struct GapSplit {
  double mu = 0;
  std::vector<bool> in_istar;
};

namespace detail {

template <typename Scalar>
Scalar weighted_floor(const std::vector<Scalar>& weights, const std::vector<Index>& sizes) {
  Scalar acc(0);
  for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * Scalar(sizes[i]);
  return acc;
}

template <typename Scalar>
std::vector<Index> block_sizes(const BlockDiag<Scalar>& x) {
  std::vector<Index> sizes;
  sizes.reserve(x.blocks.size());
  for (const auto& b : x.blocks) sizes.push_back(b.rows());
  return sizes;
}

// Solves <X,Z> = sum_i max(c_i, nu) N_i by scanning breakpoints of c sorted descending.
template <typename Scalar>
std::pair<Scalar, std::vector<bool>> solve_nu(Scalar s, const std::vector<Scalar>& c, const std::vector<Index>& sizes) {
  const Scalar floor = weighted_floor(c, sizes);
  if (!(s > floor)) throw GapClosed("<X,Z> does not exceed sum c_i N_i");
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] > c[b]; });

  Scalar top(0);
  Index rest = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  std::vector<bool> in_istar(c.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Scalar nu = (s - top) / Scalar(rest);
    if (nu >= c[order[k]]) return {nu, in_istar};
    in_istar[order[k]] = true;
    top += c[order[k]] * Scalar(sizes[order[k]]);
    rest -= sizes[order[k]];
  }
  throw GapClosed("<X,Z> does not exceed sum c_i N_i");
}

}  // namespace detail

/// Eigenvalues (ascending) of X Z for X, Z positive definite.
template <typename Scalar>
Vector<Scalar> product_eigenvalues(const Matrix<Scalar>& x, const Matrix<Scalar>& z) {
  Eigen::LLT<Matrix<Scalar>> llt(x);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("X block is not positive definite");
  const Matrix<Scalar> L = llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(srdkit::symmetrize(L.transpose() * z * L), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

template <typename Scalar>
GapSplit gap_split(const BlockDiag<Scalar>& x, const BlockDiag<Scalar>& z, const std::vector<Scalar>& weights) {
  auto [nu, istar] = detail::solve_nu(inner(x, z), weights, detail::block_sizes(x));
  return {static_cast<double>(nu), std::move(istar)};
}

/// Extended normalized duality gap mu(X, Z). Throws GapClosed when <X,Z> <= sum_{i in I} c_i N_i.
template <typename Scalar>
Scalar extended_duality_gap(const BlockDiag<Scalar>& x, const BlockDiag<Scalar>& z, const std::vector<Scalar>& weights) {
  const auto sizes = detail::block_sizes(x);
  auto [nu, istar] = detail::solve_nu(inner(x, z), weights, sizes);
  Scalar num = inner(x, z);
  Index den = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (istar[i])
      num -= weights[i] * Scalar(sizes[i]);
    else
      den += sizes[i];
  }
  (void)nu;
  return num / Scalar(den);
}

/// d_inf(X, Z): largest shortfall of lambda_min(X_i Z_i) below its central-path target.
template <typename Scalar>
Scalar neighborhood_distance(const BlockDiag<Scalar>& x, const BlockDiag<Scalar>& z, const std::vector<Scalar>& weights,
                             const GapSplit& split) {
  Scalar d = -std::numeric_limits<Scalar>::infinity();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const Scalar target = split.in_istar[i] ? weights[i] : Scalar(split.mu);
    d = std::max(d, target - product_eigenvalues(x.blocks[i], z.blocks[i])(0));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling

/// Scaling point W with W Z W = X, computed as X^{1/2} (X^{1/2} Z X^{1/2})^{-1/2} X^{1/2}.
template <typename Scalar>
Matrix<Scalar> nt_scaling_point(const Matrix<Scalar>& x, const Matrix<Scalar>& z) {
  const Matrix<Scalar> xh = sqrt_spd(x);
  return srdkit::symmetrize(xh * inv_sqrt_spd(srdkit::symmetrize(xh * z * xh)) * xh);
}

/// NT scaling matrix P = W^{-1/2}; P X P = P^{-1} Z P^{-1}.
template <typename Scalar>
Matrix<Scalar> nt_scaling(const Matrix<Scalar>& x, const Matrix<Scalar>& z) {
  return inv_sqrt_spd(nt_scaling_point(x, z));
}

// ---------------------------------------------------------------------------
// Reduced (Schur complement) system  M_jk = <A_j, G A_k G>

namespace detail {

template <typename Scalar>
struct TermRef {
  Index row;
  const Term<Scalar>* term;
};

template <typename Scalar>
std::vector<std::vector<TermRef<Scalar>>> terms_by_block(const MaxDetProblem<Scalar>& p) {
  std::vector<std::vector<TermRef<Scalar>>> out(static_cast<std::size_t>(p.num_blocks()));
  for (Index j = 0; j < p.num_constraints(); ++j)
    for (const auto& t : p.eq_map.rows[static_cast<std::size_t>(j)])
      out[static_cast<std::size_t>(t.block)].push_back({j, &t});
  return out;
}

// G A G for a symmetric coefficient given by its upper-triangular entries.
template <typename Scalar>
Matrix<Scalar> congruence(const Term<Scalar>& t, const Matrix<Scalar>& g) {
  const Index n = g.rows();
  if (static_cast<Index>(t.entries.size()) > 2 * n) return g * t.dense(n) * g;
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, n);
  for (const auto& e : t.entries) {
    out.noalias() += e.value * g.col(e.row) * g.row(e.col);
    if (e.row != e.col) out.noalias() += e.value * g.col(e.col) * g.row(e.row);
  }
  return out;
}

template <typename Scalar, typename Sink>
void assemble_schur(const std::vector<std::vector<TermRef<Scalar>>>& by_block, const BlockDiag<Scalar>& g, Sink&& sink) {
  for (std::size_t b = 0; b < by_block.size(); ++b) {
    const auto& refs = by_block[b];
    for (const auto& rk : refs) {
      const Matrix<Scalar> gag = congruence(*rk.term, g.blocks[b]);
      for (const auto& rj : refs) sink(rj.row, rk.row, rj.term->dot(gag));
    }
  }
}

template <typename Scalar>
Vector<Scalar> solve_dense(Matrix<Scalar> m, const Vector<Scalar>& rhs) {
  Eigen::LLT<Matrix<Scalar>> llt(m);
  if (llt.info() != Eigen::Success) {
    const Scalar scale = std::max(Scalar(1), m.diagonal().cwiseAbs().maxCoeff());
    m.diagonal().array() += Scalar(1e-12) * scale;
    llt.compute(m);
    if (llt.info() != Eigen::Success) throw NumericalError("reduced Newton system is singular");
  }
  return llt.solve(rhs);
}

template <typename Scalar>
Vector<Scalar> solve_sparse(Eigen::SparseMatrix<Scalar> m, const Vector<Scalar>& rhs) {
  auto factor_ok = [](const Eigen::SimplicialLDLT<Eigen::SparseMatrix<Scalar>>& f) {
    return f.info() == Eigen::Success && f.vectorD().size() > 0 && f.vectorD().minCoeff() > Scalar(0);
  };
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<Scalar>> ldlt(m);
  if (!factor_ok(ldlt)) {
    Scalar scale(1);
    for (Index i = 0; i < m.rows(); ++i) scale = std::max(scale, std::abs(Scalar(m.coeff(i, i))));
    Eigen::SparseMatrix<Scalar> reg(m.rows(), m.cols());
    reg.setIdentity();
    m += reg * (Scalar(1e-12) * scale);
    ldlt.compute(m);
    if (!factor_ok(ldlt)) throw NumericalError("reduced Newton system is singular");
  }
  return ldlt.solve(rhs);
}

// Solves <A_j, G A*(v) G> = rhs_j for v.
template <typename Scalar>
Vector<Scalar> solve_reduced(const MaxDetProblem<Scalar>& p, const std::vector<std::vector<TermRef<Scalar>>>& by_block,
                             const BlockDiag<Scalar>& g, const Vector<Scalar>& rhs) {
  const Index m = p.num_constraints();
  if (m == 0) return Vector<Scalar>(0);
  if (p.time_chained) {
    std::vector<Eigen::Triplet<Scalar>> trip;
    assemble_schur(by_block, g, [&](Index j, Index k, Scalar v) { trip.emplace_back(j, k, v); });
    Eigen::SparseMatrix<Scalar> mat(m, m);
    mat.setFromTriplets(trip.begin(), trip.end());
    return solve_sparse(std::move(mat), rhs);
  }
  Matrix<Scalar> mat = Matrix<Scalar>::Zero(m, m);
  assemble_schur(by_block, g, [&](Index j, Index k, Scalar v) { mat(j, k) += v; });
  return solve_dense(std::move(mat), rhs);
}

template <typename Scalar>
bool all_positive_definite(const BlockDiag<Scalar>& x) {
  for (const auto& b : x.blocks)
    if (!is_positive_definite(b)) return false;
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Objectives and residuals

template <typename Scalar>
Scalar primal_objective(const MaxDetProblem<Scalar>& p, const BlockDiag<Scalar>& x) {
  Scalar obj = inner(p.cost, x);
  for (Index i = 0; i < p.num_blocks(); ++i) {
    const Scalar c = p.blocks[static_cast<std::size_t>(i)].weight;
    if (c > Scalar(0)) obj -= c * log_det_spd(x[i]);
  }
  return obj;
}

/// <b,y> + sum c_i (log det Z_i + N_i - N_i log c_i): the Lagrange dual of the primal objective.
template <typename Scalar>
Scalar dual_objective(const MaxDetProblem<Scalar>& p, const Vector<Scalar>& y, const BlockDiag<Scalar>& z) {
  Scalar obj = p.rhs.dot(y);
  for (Index i = 0; i < p.num_blocks(); ++i) {
    const auto& spec = p.blocks[static_cast<std::size_t>(i)];
    if (spec.weight > Scalar(0))
      obj += spec.weight * (log_det_spd(z[i]) + Scalar(spec.size) * (Scalar(1) - std::log(spec.weight)));
  }
  return obj;
}

template <typename Scalar>
KktResiduals<Scalar> kkt_residuals(const State<Scalar>& s, const MaxDetProblem<Scalar>& p) {
  KktResiduals<Scalar> r;
  r.primal_res = (p.eq_map.apply(s.X) - p.rhs).norm();
  r.dual_res = frobenius_norm(p.eq_map.adjoint(s.y, p.blocks) + s.Z - p.cost);
  r.min_eig_X = std::numeric_limits<Scalar>::infinity();
  r.min_eig_Z = std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < p.num_blocks(); ++i) {
    r.min_eig_X = std::min(r.min_eig_X, min_eigenvalue(s.X[i]));
    r.min_eig_Z = std::min(r.min_eig_Z, min_eigenvalue(s.Z[i]));
  }
  if (r.min_eig_X > Scalar(0) && r.min_eig_Z > Scalar(0))
    r.gap = primal_objective(p, s.X) - dual_objective(p, s.y, s.Z);
  else
    r.gap = std::numeric_limits<Scalar>::quiet_NaN();
  return r;
}

// ---------------------------------------------------------------------------
// Newton direction

/// NT Newton direction towards X_i Z_i = targets_i I. The complementarity
/// equation H_P(X dZ + dX Z) = w I - H_P(X Z) with P = W^{-1/2} is equivalent
/// to dX + W dZ W = w Z^{-1} - X, which is eliminated into an m x m system.
template <typename Scalar>
Direction<Scalar> newton_direction(const State<Scalar>& s, const std::vector<Scalar>& targets,
                                   const MaxDetProblem<Scalar>& p) {
  const auto by_block = detail::terms_by_block(p);
  const Index nb = p.num_blocks();
  BlockDiag<Scalar> w_scale, h;
  w_scale.blocks.resize(static_cast<std::size_t>(nb));
  h.blocks.resize(static_cast<std::size_t>(nb));

  const Vector<Scalar> r_p = p.rhs - p.eq_map.apply(s.X);
  const BlockDiag<Scalar> r_d = p.cost - p.eq_map.adjoint(s.y, p.blocks) - s.Z;
  for (Index i = 0; i < nb; ++i) {
    try {
      w_scale[i] = nt_scaling_point(s.X[i], s.Z[i]);
      h[i] = srdkit::symmetrize(targets[static_cast<std::size_t>(i)] * inverse_spd(s.Z[i]) - s.X[i] -
                                w_scale[i] * r_d[i] * w_scale[i]);
    } catch (const NotPositiveDefinite& e) {
      throw NumericalError(std::string("scaling failed on block ") + std::to_string(i) + ": " + e.what());
    }
  }

  Direction<Scalar> d;
  d.dy = detail::solve_reduced(p, by_block, w_scale, Vector<Scalar>(r_p - p.eq_map.apply(h)));
  const BlockDiag<Scalar> aty = p.eq_map.adjoint(d.dy, p.blocks);
  d.dZ = symmetrize(r_d - aty);
  d.dX = h;
  for (Index i = 0; i < nb; ++i) d.dX[i] = srdkit::symmetrize(h[i] + w_scale[i] * aty[i] * w_scale[i]);
  return d;
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

// X = tI + A*(v) with A(X) = b, for the first t that makes X positive definite.
template <typename Scalar>
std::optional<BlockDiag<Scalar>> self_initialize(const MaxDetProblem<Scalar>& p) {
  const auto by_block = terms_by_block(p);
  const auto ident = BlockDiag<Scalar>::identity(p.blocks);
  for (Scalar t : {Scalar(1), Scalar(10), Scalar(100), Scalar(1000), Scalar(0.1), Scalar(0.01)}) {
    BlockDiag<Scalar> x = BlockDiag<Scalar>::identity(p.blocks, t);
    if (p.num_constraints() > 0) {
      Vector<Scalar> v;
      try {
        v = solve_reduced(p, by_block, ident, Vector<Scalar>(p.rhs - p.eq_map.apply(x)));
      } catch (const NumericalError&) {
        return std::nullopt;
      }
      x += p.eq_map.adjoint(v, p.blocks);
    }
    if (all_positive_definite(x)) return x;
  }
  return std::nullopt;
}

template <typename Scalar>
Scalar barrier_value(const MaxDetProblem<Scalar>& p, const BlockDiag<Scalar>& x, const std::vector<Scalar>& w) {
  Scalar v = inner(p.cost, x);
  for (Index i = 0; i < p.num_blocks(); ++i) v -= w[static_cast<std::size_t>(i)] * log_det_spd(x[i]);
  return v;
}

}  // namespace detail

/// Centers a strictly feasible primal point on the nu = 1 barrier problem by
/// damped Newton steps until (X, y, Z) lies in N_inf(gamma).
template <typename Scalar>
State<Scalar> initial_point(const MaxDetProblem<Scalar>& p, const std::optional<BlockDiag<Scalar>>& hint,
                            const SolverConfig& cfg = {}) {
  std::optional<BlockDiag<Scalar>> start = hint ? hint : p.hint;
  if (!start) start = detail::self_initialize(p);
  if (!start) throw InfeasibleError("no strictly feasible starting point found");
  BlockDiag<Scalar> x = symmetrize(*start);

  if (x.num_blocks() != p.num_blocks()) throw InfeasibleError("hint does not match block structure");
  const Scalar tol = Scalar(1e-8) * (Scalar(1) + p.rhs.norm());
  if ((p.eq_map.apply(x) - p.rhs).norm() > tol) throw InfeasibleError("hint violates the equality constraints");
  if (!detail::all_positive_definite(x)) throw InfeasibleError("hint is not positive definite");

  const std::vector<Scalar> c = p.weights();
  std::vector<Scalar> w(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) w[i] = std::max(c[i], Scalar(1));
  const Scalar floor = detail::weighted_floor(c, detail::block_sizes(x));
  const auto by_block = detail::terms_by_block(p);
  const Scalar gamma = Scalar(cfg.gamma);

  for (int it = 0; it < 500; ++it) {
    BlockDiag<Scalar> g = x;
    for (Index i = 0; i < p.num_blocks(); ++i) g[i] /= std::sqrt(w[static_cast<std::size_t>(i)]);

    // Newton step for min <C,X> - sum w_i log det X_i  s.t. A(X) = b:
    //   dX = G (A*(y) - C) G + X,  A(dX) = b - A(X).
    BlockDiag<Scalar> gcg = p.cost;
    for (Index i = 0; i < p.num_blocks(); ++i) gcg[i] = g[i] * p.cost[i] * g[i];
    const Vector<Scalar> rhs = p.rhs - Scalar(2) * p.eq_map.apply(x) + p.eq_map.apply(gcg);
    const Vector<Scalar> y = detail::solve_reduced(p, by_block, g, rhs);
    const BlockDiag<Scalar> aty = p.eq_map.adjoint(y, p.blocks);
    BlockDiag<Scalar> z = symmetrize(p.cost - aty);
    BlockDiag<Scalar> dx = x;
    Scalar decrement2(0);
    for (Index i = 0; i < p.num_blocks(); ++i) {
      dx[i] = srdkit::symmetrize(g[i] * (aty[i] - p.cost[i]) * g[i] + x[i]);
      Eigen::LLT<Matrix<Scalar>> llt(x[i]);
      const Matrix<Scalar> scaled = llt.matrixL().solve(llt.matrixL().solve(dx[i]).transpose());
      decrement2 += w[static_cast<std::size_t>(i)] * scaled.squaredNorm();
    }

    if (detail::all_positive_definite(z)) {
      const Scalar s = inner(x, z);
      if (s <= floor * (Scalar(1) + Scalar(1e-12))) {
        if (decrement2 < Scalar(1e-20) * std::max<Scalar>(Scalar(1), Scalar(p.total_size())))
          return {std::move(x), y, std::move(z)};
      } else {
        const GapSplit split = gap_split(x, z, c);
        const Scalar mu = Scalar(split.mu);
        if (neighborhood_distance(x, z, c, split) <= gamma * mu && decrement2 < Scalar(0.25))
          return {std::move(x), y, std::move(z)};
      }
    }

    Scalar t(1);
    const Scalar f0 = detail::barrier_value(p, x, w);
    for (;; t *= Scalar(0.5)) {
      if (t < Scalar(1e-14)) throw NumericalError("centering line search failed");
      BlockDiag<Scalar> cand = x;
      for (Index i = 0; i < p.num_blocks(); ++i) cand[i] += t * dx[i];
      if (!detail::all_positive_definite(cand)) continue;
      if (detail::barrier_value(p, cand, w) <= f0 - Scalar(1e-4) * t * decrement2 + Scalar(1e-12) * std::abs(f0) ||
          decrement2 < Scalar(1e-18)) {
        x = symmetrize(std::move(cand));
        break;
      }
    }
  }
  throw NumericalError("centering did not reach the central-path neighborhood");
}

// ---------------------------------------------------------------------------
// Presolve

namespace detail {

struct PresolveResult {
  std::vector<Index> kept;  // original row indices of retained rows
};

// Rows that own a coordinate no other remaining row touches are independent
// of the rest; they are peeled off repeatedly and the leftover core is
// checked with a rank-revealing QR.
template <typename Scalar>
PresolveResult presolve_rows(const MaxDetProblem<Scalar>& p) {
  const Index m = p.num_constraints();
  std::vector<Index> offset(static_cast<std::size_t>(p.num_blocks()) + 1, 0);
  for (Index i = 0; i < p.num_blocks(); ++i) {
    const Index n = p.blocks[static_cast<std::size_t>(i)].size;
    offset[static_cast<std::size_t>(i) + 1] = offset[static_cast<std::size_t>(i)] + n * n;
  }
  auto coord = [&](Index block, const SymEntry<Scalar>& e) {
    return offset[static_cast<std::size_t>(block)] + e.col * p.blocks[static_cast<std::size_t>(block)].size + e.row;
  };
  std::vector<Index> count(static_cast<std::size_t>(offset.back()), 0);
  for (const auto& row : p.eq_map.rows)
    for (const auto& t : row)
      for (const auto& e : t.entries) ++count[static_cast<std::size_t>(coord(t.block, e))];

  std::vector<bool> peeled(static_cast<std::size_t>(m), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (Index j = 0; j < m; ++j) {
      if (peeled[static_cast<std::size_t>(j)]) continue;
      bool owns = false;
      for (const auto& t : p.eq_map.rows[static_cast<std::size_t>(j)])
        for (const auto& e : t.entries)
          if (e.value != Scalar(0) && count[static_cast<std::size_t>(coord(t.block, e))] == 1) owns = true;
      if (!owns) continue;
      peeled[static_cast<std::size_t>(j)] = true;
      changed = true;
      for (const auto& t : p.eq_map.rows[static_cast<std::size_t>(j)])
        for (const auto& e : t.entries) --count[static_cast<std::size_t>(coord(t.block, e))];
    }
  }

  std::vector<Index> core;
  for (Index j = 0; j < m; ++j)
    if (!peeled[static_cast<std::size_t>(j)]) core.push_back(j);

  PresolveResult out;
  std::vector<bool> keep = peeled;
  if (!core.empty()) {
    // Columns of the dense core matrix are rows of A in svec coordinates.
    const Index dim = offset.back();
    Matrix<Scalar> at = Matrix<Scalar>::Zero(dim, static_cast<Index>(core.size()));
    for (std::size_t k = 0; k < core.size(); ++k)
      for (const auto& t : p.eq_map.rows[static_cast<std::size_t>(core[k])])
        for (const auto& e : t.entries) {
          const Scalar scale = e.row == e.col ? Scalar(1) : std::sqrt(Scalar(2));
          at(coord(t.block, e), static_cast<Index>(k)) += scale * e.value;
        }
    Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(at);
    qr.setThreshold(Scalar(1e-10));
    const Index rank = qr.rank();
    std::vector<Index> independent, dependent;
    for (Index k = 0; k < static_cast<Index>(core.size()); ++k) {
      const Index col = qr.colsPermutation().indices()(k);
      (k < rank ? independent : dependent).push_back(col);
    }
    for (Index k : independent) keep[static_cast<std::size_t>(core[static_cast<std::size_t>(k)])] = true;
    if (!dependent.empty()) {
      Matrix<Scalar> basis(dim, static_cast<Index>(independent.size()));
      Vector<Scalar> b_basis(static_cast<Index>(independent.size()));
      for (std::size_t k = 0; k < independent.size(); ++k) {
        basis.col(static_cast<Index>(k)) = at.col(independent[k]);
        b_basis(static_cast<Index>(k)) = p.rhs(core[static_cast<std::size_t>(independent[k])]);
      }
      for (Index k : dependent) {
        const Vector<Scalar> coef = basis.colPivHouseholderQr().solve(Vector<Scalar>(at.col(k)));
        const Scalar implied = coef.dot(b_basis);
        const Scalar actual = p.rhs(core[static_cast<std::size_t>(k)]);
        if (std::abs(implied - actual) > Scalar(1e-9) * (Scalar(1) + std::abs(actual)))
          throw InfeasibleError("equality constraints are inconsistent");
      }
    }
  }
  for (Index j = 0; j < m; ++j)
    if (keep[static_cast<std::size_t>(j)]) out.kept.push_back(j);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Path following

/// Solves the max-det problem. Never throws for infeasible or numerically
/// difficult instances; the outcome is reported through `status`.
template <typename Scalar>
SolverSolution<Scalar> solve(const MaxDetProblem<Scalar>& problem, const SolverConfig& cfg = {},
                             const IterationSink& sink = {}) {
  cfg.validate();
  problem.validate();

  SolverSolution<Scalar> sol;
  const Index m_orig = problem.num_constraints();

  MaxDetProblem<Scalar> p = problem;
  std::vector<Index> kept;
  try {
    kept = detail::presolve_rows(problem).kept;
  } catch (const InfeasibleError& e) {
    sol.status = SolverStatus::Infeasible;
    sol.message = e.what();
    return sol;
  }
  if (static_cast<Index>(kept.size()) != m_orig) {
    p.eq_map.rows.clear();
    p.rhs.resize(static_cast<Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
      p.eq_map.rows.push_back(problem.eq_map.rows[static_cast<std::size_t>(kept[k])]);
      p.rhs(static_cast<Index>(k)) = problem.rhs(kept[k]);
    }
  }

  auto finish = [&](State<Scalar>&& st, SolverStatus status, std::string msg) {
    sol.X = std::move(st.X);
    sol.Z = std::move(st.Z);
    sol.y = Vector<Scalar>::Zero(m_orig);
    for (std::size_t k = 0; k < kept.size(); ++k) sol.y(kept[k]) = st.y(static_cast<Index>(k));
    sol.status = status;
    sol.message = std::move(msg);
    State<Scalar> full{sol.X, sol.y, sol.Z};
    sol.residuals = kkt_residuals(full, problem);
    if (sol.residuals.min_eig_X > Scalar(0)) sol.objective = primal_objective(problem, sol.X);
    if (sol.residuals.min_eig_Z > Scalar(0)) sol.dual_objective = dual_objective(problem, sol.y, sol.Z);
    return sol;
  };

  State<Scalar> st;
  try {
    st = initial_point<Scalar>(p, std::nullopt, cfg);
  } catch (const InfeasibleError& e) {
    sol.status = SolverStatus::Infeasible;
    sol.message = e.what();
    return sol;
  } catch (const NumericalError& e) {
    sol.status = SolverStatus::NumericalFailure;
    sol.message = std::string("initialization: ") + e.what();
    return sol;
  }

  const std::vector<Scalar> c = p.weights();
  const auto sizes = detail::block_sizes(st.X);
  const Scalar floor = detail::weighted_floor(c, sizes);
  const Scalar n_total = Scalar(p.total_size());
  const bool has_unweighted = std::any_of(c.begin(), c.end(), [](Scalar v) { return v == Scalar(0); });
  const Scalar gamma = Scalar(cfg.gamma);
  const Scalar sigma = Scalar(cfg.sigma);
  const Scalar eps = Scalar(cfg.eps);

  auto closed = [&](const State<Scalar>& s) { return !(inner(s.X, s.Z) > floor * (Scalar(1) + Scalar(1e-12))); };
  auto true_gap = [&](const State<Scalar>& s) { return primal_objective(p, s.X) - dual_objective(p, s.y, s.Z); };

  Scalar mu = closed(st) ? Scalar(0) : Scalar(gap_split(st.X, st.Z, c).mu);
  const Scalar mu0 = mu;
  sol.mu0 = mu0;
  const Scalar gap_tol = eps * n_total * std::max(mu0, Scalar(1));

  for (int k = 0;; ++k) {
    sol.iterations = k;
    sol.mu = mu;
    if (mu <= eps * mu0 || (!has_unweighted && true_gap(st) <= gap_tol)) {
      const Scalar tol = Scalar(1e-7);
      const auto r = kkt_residuals(st, p);
      if (r.primal_res > tol * (Scalar(1) + p.rhs.norm()) || r.dual_res > tol * (Scalar(1) + frobenius_norm(p.cost)))
        return finish(std::move(st), SolverStatus::NumericalFailure, "converged gap but residuals above tolerance");
      return finish(std::move(st), SolverStatus::Optimal, "");
    }
    if (k >= cfg.max_iters) return finish(std::move(st), SolverStatus::MaxIters, "iteration limit reached");

    const GapSplit split = gap_split(st.X, st.Z, c);
    std::vector<Scalar> targets(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) targets[i] = split.in_istar[i] ? c[i] : sigma * mu;

    Direction<Scalar> d;
    try {
      d = newton_direction(st, targets, p);
    } catch (const NumericalError& e) {
      const auto r = kkt_residuals(st, p);
      return finish(std::move(st), SolverStatus::NumericalFailure,
                    "iteration " + std::to_string(k) + ": " + e.what() + " (primal_res=" +
                        std::to_string(static_cast<double>(r.primal_res)) +
                        ", dual_res=" + std::to_string(static_cast<double>(r.dual_res)) + ")");
    }

    bool accepted = false;
    Scalar alpha(1);
    Scalar mu_new(0), d_new(0);
    State<Scalar> cand;
    for (; alpha >= Scalar(1e-10); alpha *= Scalar(0.8)) {
      cand.X = st.X + alpha * d.dX;
      cand.y = st.y + alpha * d.dy;
      cand.Z = st.Z + alpha * d.dZ;
      if (!detail::all_positive_definite(cand.X) || !detail::all_positive_definite(cand.Z)) continue;
      if (closed(cand)) {
        // Only step onto the closed-gap boundary when the iterate is optimal there.
        if (true_gap(cand) <= gap_tol) {
          mu_new = Scalar(0);
          d_new = Scalar(0);
          accepted = true;
          break;
        }
        continue;
      }
      const GapSplit cs = gap_split(cand.X, cand.Z, c);
      mu_new = Scalar(cs.mu);
      d_new = neighborhood_distance(cand.X, cand.Z, c, cs);
      if (d_new <= gamma * mu_new && mu_new <= mu) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      const auto r = kkt_residuals(st, p);
      return finish(std::move(st), SolverStatus::NumericalFailure,
                    "iteration " + std::to_string(k) + ": no step keeps the iterate in the neighborhood (primal_res=" +
                        std::to_string(static_cast<double>(r.primal_res)) +
                        ", dual_res=" + std::to_string(static_cast<double>(r.dual_res)) + ")");
    }
    st = std::move(cand);
    mu = mu_new;
    if (sink) {
      const auto r = kkt_residuals(st, p);
      sink({k + 1, static_cast<double>(mu), static_cast<double>(d_new), static_cast<double>(r.primal_res),
            static_cast<double>(r.dual_res), static_cast<double>(r.gap), static_cast<double>(alpha)});
    }
  }
}

}  // namespace srdkit::maxdet
