#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

#include "bearshape/error.hpp"

namespace bearshape {

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd lambda_in;  // >= 0 at a KKT point
  std::vector<int> active;    // inequality rows in the final working set
  int iterations = 0;
  bool converged = false;
};

/// min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in, from a feasible x0.
/// Primal active-set method; H must be positive definite on the null space of the working set.
/// Working-set subproblems are solved in the null space so redundant active rows are harmless.
inline QpResult solve_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& a_eq,
                         const Eigen::VectorXd& b_eq, const Eigen::MatrixXd& a_in, const Eigen::VectorXd& b_in,
                         const Eigen::VectorXd& x0, int max_iter = 500, double tol = 1e-10) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = static_cast<int>(g.size());
  const int me = static_cast<int>(a_eq.rows());
  const int mi = static_cast<int>(a_in.rows());
  if (me > 0 && (a_eq * x0 - b_eq).cwiseAbs().maxCoeff() > 1e-8)
    throw Error(ErrorCode::kInfeasibleStart, "QP start violates equality constraints");
  if (mi > 0 && (a_in * x0 - b_in).maxCoeff() > 1e-8)
    throw Error(ErrorCode::kInfeasibleStart, "QP start violates inequality constraints");

  QpResult res;
  res.x = x0;
  std::vector<bool> in_set(mi, false);
  for (int k = 0; k < mi; ++k) {
    if (a_in.row(k) * x0 >= b_in[k] - 1e-12) in_set[k] = true;
  }

  auto working = [&] {
    std::vector<int> rows;
    for (int k = 0; k < mi; ++k)
      if (in_set[k]) rows.push_back(k);
    MatrixXd a(me + static_cast<int>(rows.size()), n);
    if (me > 0) a.topRows(me) = a_eq;
    for (std::size_t r = 0; r < rows.size(); ++r) a.row(me + static_cast<int>(r)) = a_in.row(rows[r]);
    return std::make_pair(a, rows);
  };

  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    auto [aw, rows] = working();
    const VectorXd grad = h * res.x + g;
    MatrixXd z;
    if (aw.rows() == 0) {
      z = MatrixXd::Identity(n, n);
    } else {
      Eigen::ColPivHouseholderQR<MatrixXd> qr(aw.transpose());
      qr.setThreshold(1e-12);
      const int rank = static_cast<int>(qr.rank());
      const MatrixXd q = qr.householderQ() * MatrixXd::Identity(n, n);
      z = q.rightCols(n - rank);
    }
    VectorXd p = VectorXd::Zero(n);
    if (z.cols() > 0) {
      const MatrixXd hz = z.transpose() * h * z;
      Eigen::LDLT<MatrixXd> ldlt(hz);
      p = -z * ldlt.solve(z.transpose() * grad);
    }
    const double scale = std::max(1.0, res.x.norm());
    if (p.norm() <= tol * scale) {
      // Stationary on the working set: check inequality multipliers.
      VectorXd lambda = VectorXd::Zero(aw.rows());
      if (aw.rows() > 0) lambda = aw.transpose().completeOrthogonalDecomposition().solve(-grad);
      int worst = -1;
      double most_negative = -1e-12 * std::max(1.0, grad.norm());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (lambda[me + static_cast<int>(r)] < most_negative) {
          most_negative = lambda[me + static_cast<int>(r)];
          worst = rows[r];
        }
      }
      if (worst < 0) {
        res.converged = true;
        res.lambda_eq = lambda.head(me);
        res.lambda_in = VectorXd::Zero(mi);
        for (std::size_t r = 0; r < rows.size(); ++r) res.lambda_in[rows[r]] = lambda[me + static_cast<int>(r)];
        res.active = rows;
        return res;
      }
      in_set[worst] = false;
      continue;
    }
    // Longest feasible step along p, up to 1.
    double step = 1.0;
    int blocking = -1;
    for (int k = 0; k < mi; ++k) {
      if (in_set[k]) continue;
      const double ap = a_in.row(k) * p;
      if (ap <= 1e-14) continue;
      const double room = std::max(0.0, b_in[k] - a_in.row(k) * res.x);
      if (room / ap < step) {
        step = room / ap;
        blocking = k;
      }
    }
    res.x += step * p;
    if (blocking >= 0) in_set[blocking] = true;
  }
  res.active.clear();
  for (int k = 0; k < mi; ++k)
    if (in_set[k]) res.active.push_back(k);
  return res;
}

}  // namespace bearshape
