#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace donorpl {

struct LmOptions {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 0.3;
  double max_damping = 1e16;
  double cost_rtol = 1e-8;     // stop when the relative cost reduction falls below this
  double step_tol = 1e-10;     // or the internal step norm does
  double fd_relative_step = 1e-5;
  double fd_absolute_floor = 1e-8;
  // trial steps with |dx_k| > max_step * scale_k are rejected (damping raised)
  double max_step = std::numeric_limits<double>::infinity();
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;    // at x
  double initial_cost = 0.0;   // sum of squared residuals
  double cost = 0.0;
  int iterations = 0;          // Jacobian evaluations
  int evaluations = 0;
  bool converged = false;
  std::string stop_reason;
  std::vector<double> cost_history;  // after each accepted step, starts with initial
};

/// Thrown by residual functions for points outside the parameter domain;
/// the optimizer treats such trial steps as rejected.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Central-difference Jacobian. Step for parameter k is
/// rel * max(|x_k|, scale_k), never below floor.
template <class Residual>
Eigen::MatrixXd central_jacobian(Residual&& f, const Eigen::VectorXd& x, const Eigen::VectorXd& scale,
                                 double rel, double floor, Eigen::Index rows) {
  Eigen::MatrixXd jac(rows, x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = std::max(rel * std::max(std::abs(x[k]), scale[k]), floor);
    probe[k] = x[k] + h;
    const Eigen::VectorXd up = f(probe);
    probe[k] = x[k] - h;
    const Eigen::VectorXd down = f(probe);
    probe[k] = x[k];
    jac.col(k) = (up - down) / (2.0 * h);
  }
  return jac;
}

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal
/// scaling) minimizing ||f(x)||^2.
template <class Residual>
LmResult levenberg_marquardt(Residual&& f, Eigen::VectorXd x0, const Eigen::VectorXd& scale,
                             const LmOptions& opt = {}) {
  if (scale.size() != x0.size()) throw std::invalid_argument("levenberg_marquardt: scale size mismatch");
  LmResult res;
  res.x = std::move(x0);
  res.residuals = f(res.x);
  ++res.evaluations;
  res.cost = res.initial_cost = res.residuals.squaredNorm();
  res.cost_history.push_back(res.cost);
  const Eigen::Index n_res = res.residuals.size();
  const Eigen::Index n_par = res.x.size();

  auto jacobian = [&](const Eigen::VectorXd& x) {
    res.evaluations += static_cast<int>(2 * n_par);
    return central_jacobian(f, x, scale, opt.fd_relative_step, opt.fd_absolute_floor, n_res);
  };

  if (n_par == 0) {
    res.converged = true;
    res.stop_reason = "no free parameters";
    res.jacobian = Eigen::MatrixXd(n_res, 0);
    return res;
  }
  if (!(res.cost > std::numeric_limits<double>::min())) {
    res.jacobian = jacobian(res.x);
    res.converged = true;
    res.stop_reason = "zero residual";
    return res;
  }

  double damping = opt.initial_damping;
  res.jacobian = jacobian(res.x);
  while (res.iterations < opt.max_iterations) {
    ++res.iterations;
    const Eigen::MatrixXd& jac = res.jacobian;
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd gradient = jac.transpose() * res.residuals;
    Eigen::VectorXd diag = normal.diagonal();
    const double diag_floor = std::max(diag.maxCoeff(), 1.0) * 1e-15;
    for (Eigen::Index k = 0; k < n_par; ++k) diag[k] = std::max(diag[k], diag_floor);

    bool accepted = false;
    Eigen::VectorXd step;
    double new_cost = res.cost;
    Eigen::VectorXd new_residuals;
    while (damping <= opt.max_damping) {
      Eigen::MatrixXd lhs = normal;
      lhs.diagonal() += damping * diag;
      step = lhs.ldlt().solve(-gradient);
      if (!step.allFinite() || (step.array().abs() > opt.max_step * scale.array()).any()) {
        damping *= opt.damping_increase;
        continue;
      }
      try {
        new_residuals = f(res.x + step);
        ++res.evaluations;
        new_cost = new_residuals.squaredNorm();
      } catch (const DomainError&) {
        new_cost = std::numeric_limits<double>::infinity();
      }
      if (std::isfinite(new_cost) && new_cost < res.cost) {
        accepted = true;
        break;
      }
      damping *= opt.damping_increase;
    }

    if (!accepted) {
      res.converged = true;
      res.stop_reason = "no further reduction at maximum damping";
      break;
    }

    const double reduction = (res.cost - new_cost) / res.cost;
    res.x += step;
    res.residuals = std::move(new_residuals);
    res.cost = new_cost;
    res.cost_history.push_back(res.cost);
    damping = std::max(damping * opt.damping_decrease, 1e-15);
    res.jacobian = jacobian(res.x);

    if (reduction < opt.cost_rtol) {
      res.converged = true;
      res.stop_reason = "relative cost reduction below tolerance";
      break;
    }
    if (step.norm() < opt.step_tol) {
      res.converged = true;
      res.stop_reason = "step norm below tolerance";
      break;
    }
    if (!(res.cost > std::numeric_limits<double>::min())) {
      res.converged = true;
      res.stop_reason = "zero residual";
      break;
    }
  }
  if (!res.converged) res.stop_reason = "maximum iterations reached";
  return res;
}

}  // namespace donorpl
