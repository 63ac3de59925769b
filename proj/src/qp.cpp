#include "icpp/qp.hpp"

#include "icpp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icpp {
namespace {

Eigen::MatrixXd working_matrix(const QpProblem& qp, const std::vector<int>& ws) {
  Eigen::MatrixXd C(qp.E.rows() + static_cast<Eigen::Index>(ws.size()), qp.H.cols());
  if (qp.E.rows() > 0) C.topRows(qp.E.rows()) = qp.E;
  for (std::size_t i = 0; i < ws.size(); ++i) C.row(qp.E.rows() + static_cast<Eigen::Index>(i)) = qp.G.row(ws[i]);
  return C;
}

bool independent_of(const Eigen::MatrixXd& C, const Eigen::RowVectorXd& row) {
  if (C.rows() == 0) return row.norm() > 0.0;
  Eigen::MatrixXd S(C.rows() + 1, C.cols());
  S.topRows(C.rows()) = C;
  S.bottomRows(1) = row;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(S.transpose());
  qr.setThreshold(1e-10);
  return qr.rank() == S.rows();
}

struct KktSolve {
  Eigen::VectorXd step;
  Eigen::VectorXd multipliers;
};

// [H −Cᵀ; C 0] [p; λ] = [−r; 0]
KktSolve solve_kkt(const Eigen::MatrixXd& H, const Eigen::MatrixXd& C, const Eigen::VectorXd& r,
                   double ridge, bool& ridge_added) {
  const Eigen::Index n = H.rows();
  const Eigen::Index m = C.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = H;
  K.topRightCorner(n, m) = -C.transpose();
  K.bottomLeftCorner(m, n) = C;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.head(n) = -r;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) {
    ridge_added = true;
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    K.topLeftCorner(n, n).diagonal().array() += ridge * scale;
    lu.compute(K);
  }
  const Eigen::VectorXd sol = lu.solve(rhs);
  return {sol.head(n), sol.tail(m)};
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const Eigen::VectorXd& x0, const QpOptions& options) {
  const Eigen::Index n = qp.H.rows();
  if (qp.H.cols() != n || qp.f.size() != n || x0.size() != n || (qp.E.rows() > 0 && qp.E.cols() != n) ||
      qp.e.size() != qp.E.rows() || qp.g.size() != qp.G.rows() || (qp.G.rows() > 0 && qp.G.cols() != n)) {
    throw Error(ErrorKind::InvalidArgument, "QP dimensions are inconsistent");
  }
  const double feas_tol = 1e-8 * (1.0 + x0.cwiseAbs().maxCoeff());
  if (qp.E.rows() > 0 && (qp.E * x0 - qp.e).cwiseAbs().maxCoeff() > feas_tol) {
    throw Error(ErrorKind::InfeasibleStart, "QP start violates equality constraints");
  }
  if (qp.G.rows() > 0 && (qp.G * x0 - qp.g).minCoeff() < -feas_tol) {
    throw Error(ErrorKind::InfeasibleStart, "QP start violates inequality constraints");
  }

  QpResult res;
  Eigen::VectorXd x = x0;
  std::vector<int> ws;
  {
    Eigen::MatrixXd C = working_matrix(qp, ws);
    for (Eigen::Index i = 0; i < qp.G.rows(); ++i) {
      if (std::abs(qp.G.row(i).dot(x) - qp.g[i]) <= feas_tol && independent_of(C, qp.G.row(i))) {
        ws.push_back(static_cast<int>(i));
        C = working_matrix(qp, ws);
      }
    }
  }

  const Eigen::Index n_eq = qp.E.rows();
  Eigen::VectorXd lambda;
  for (int it = 0; it < options.max_iters; ++it) {
    res.iterations = it + 1;
    const Eigen::MatrixXd C = working_matrix(qp, ws);
    const Eigen::VectorXd r = qp.H * x + qp.f;
    const KktSolve kkt = solve_kkt(qp.H, C, r, options.ridge, res.ridge_added);
    const double step_norm = kkt.step.cwiseAbs().maxCoeff();
    if (step_norm <= options.tol * (1.0 + x.cwiseAbs().maxCoeff())) {
      lambda = kkt.multipliers;
      // The step is zero: multipliers here solve H x + f = Cᵀλ.
      Eigen::Index worst = -1;
      double most_negative = -options.tol * (1.0 + r.cwiseAbs().maxCoeff());
      for (std::size_t i = 0; i < ws.size(); ++i) {
        const double li = lambda[n_eq + static_cast<Eigen::Index>(i)];
        if (li < most_negative) {
          most_negative = li;
          worst = static_cast<Eigen::Index>(i);
        }
      }
      if (worst < 0) {
        res.converged = true;
        break;
      }
      ws.erase(ws.begin() + worst);
      continue;
    }
    // Ratio test against constraints outside the working set.
    double alpha = 1.0;
    int blocking = -1;
    for (Eigen::Index i = 0; i < qp.G.rows(); ++i) {
      if (std::find(ws.begin(), ws.end(), static_cast<int>(i)) != ws.end()) continue;
      const double gp = qp.G.row(i).dot(kkt.step);
      if (gp < -1e-14 * (1.0 + qp.G.row(i).cwiseAbs().maxCoeff())) {
        const double slack = std::max(0.0, qp.G.row(i).dot(x) - qp.g[i]);
        const double a = slack / -gp;
        if (a < alpha) {
          alpha = a;
          blocking = static_cast<int>(i);
        }
      }
    }
    x += alpha * kkt.step;
    if (blocking >= 0) ws.push_back(blocking);
  }

  // Final multipliers and stationarity residual.
  const Eigen::MatrixXd C = working_matrix(qp, ws);
  const Eigen::VectorXd r = qp.H * x + qp.f;
  Eigen::VectorXd mult = Eigen::VectorXd::Zero(C.rows());
  if (C.rows() > 0) mult = C.transpose().colPivHouseholderQr().solve(r);
  res.kkt_residual = (r - C.transpose() * mult).cwiseAbs().maxCoeff();
  res.eq_multipliers = mult.head(n_eq);
  res.ineq_multipliers = Eigen::VectorXd::Zero(qp.G.rows());
  for (std::size_t i = 0; i < ws.size(); ++i) res.ineq_multipliers[ws[i]] = mult[n_eq + static_cast<Eigen::Index>(i)];
  res.working_set = ws;
  res.x = x;
  return res;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& B, const Eigen::VectorXd& y) {
  const Eigen::Index n = B.cols();
  QpProblem qp;
  qp.H = B.transpose() * B;
  qp.f = -(B.transpose() * y);
  qp.E.resize(0, n);
  qp.e.resize(0);
  qp.G = Eigen::MatrixXd::Identity(n, n);
  qp.g = Eigen::VectorXd::Zero(n);
  QpOptions opt;
  opt.max_iters = 20 * static_cast<int>(n) + 100;
  QpResult r = solve_qp(qp, Eigen::VectorXd::Zero(n), opt);
  return r.x.cwiseMax(0.0);
}

}  // namespace icpp
