#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "error.hpp"

namespace ttransport {

struct LogisticOptions {
    double l2 = 1.0;                 // penalty 0.5*l2*||beta||^2 on standardized coefficients
    double gradient_tolerance = 1e-8;
    std::size_t max_iterations = 10000;
};

// L2-regularized logistic regression fit by damped Newton iterations on
// standardized features. The intercept is not penalized.
class LogisticModel {
public:
    double predict_proba(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        return sigmoid(intercept_ + ((x - mean_).cwiseQuotient(scale_)).dot(coef_));
    }

    Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd z = linear_predictor(x);
        return z.unaryExpr([](double v) { return sigmoid(v); });
    }

    Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& x) const {
        if (x.cols() != coef_.size())
            throw Error("feature width mismatch: model has " + std::to_string(coef_.size()) + ", input has " +
                        std::to_string(x.cols()));
        Eigen::MatrixXd z = (x.rowwise() - mean_).array().rowwise() / scale_.array();
        return (z * coef_).array() + intercept_;
    }

    /// Coefficients on the standardized scale.
    const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
    double intercept() const noexcept { return intercept_; }
    std::size_t iterations() const noexcept { return iterations_; }
    double gradient_norm() const noexcept { return gradient_norm_; }
    bool trained() const noexcept { return trained_; }

    static double sigmoid(double z) noexcept {
        if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
        const double e = std::exp(z);
        return e / (1.0 + e);
    }

    static double softplus(double z) noexcept {
        return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }

    friend LogisticModel fit_logistic(const Eigen::MatrixXd&, const Eigen::VectorXd&, const LogisticOptions&);

private:
    Eigen::RowVectorXd mean_;
    Eigen::RowVectorXd scale_;
    Eigen::VectorXd coef_;
    double intercept_ = 0.0;
    std::size_t iterations_ = 0;
    double gradient_norm_ = 0.0;
    bool trained_ = false;
};

/// Labels must be 0/1 with both classes present. Throws ConvergenceError when the
/// gradient norm is still above tolerance after max_iterations Newton steps.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const LogisticOptions& opt = {}) {
    const Eigen::Index n = x.rows(), d = x.cols();
    if (n == 0 || y.size() != n) throw Error("logistic regression needs aligned, nonempty data");
    const double positives = y.sum();
    if (positives <= 0.0 || positives >= static_cast<double>(n))
        throw Error("degenerate single-class input: both classes must be present");

    LogisticModel m;
    m.mean_ = x.colwise().mean();
    m.scale_ = ((x.rowwise() - m.mean_).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index j = 0; j < d; ++j)
        if (!(m.scale_(j) > 0.0)) m.scale_(j) = 1.0;

    // Augmented design [1, Z].
    Eigen::MatrixXd a(n, d + 1);
    a.col(0).setOnes();
    a.rightCols(d) = (x.rowwise() - m.mean_).array().rowwise() / m.scale_.array();

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(d + 1);
    const double prior = positives / static_cast<double>(n);
    theta(0) = std::log(prior / (1.0 - prior));

    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, opt.l2);
    penalty(0) = 0.0;

    auto objective = [&](const Eigen::VectorXd& t) {
        const Eigen::VectorXd z = a * t;
        double f = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) f += LogisticModel::softplus(z(i)) - y(i) * z(i);
        return f + 0.5 * (penalty.array() * t.array().square()).sum();
    };

    double f = objective(theta);
    Eigen::VectorXd grad(d + 1);
    std::size_t it = 0;
    for (;; ++it) {
        const Eigen::VectorXd z = a * theta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = LogisticModel::sigmoid(z(i));
            w(i) = p(i) * (1.0 - p(i));
        }
        grad = a.transpose() * (p - y) + penalty.cwiseProduct(theta);
        const double gnorm = grad.norm();
        if (gnorm <= opt.gradient_tolerance) break;
        if (it >= opt.max_iterations)
            throw ConvergenceError("logistic regression did not converge after " + std::to_string(it) +
                                       " iterations (gradient norm " + std::to_string(gnorm) + ")",
                                   gnorm);

        Eigen::MatrixXd h = a.transpose() * w.asDiagonal() * a;
        h.diagonal() += penalty;
        h.diagonal().array() += 1e-12;
        const Eigen::VectorXd step = h.ldlt().solve(-grad);

        // Backtracking on the objective. Once the predicted decrease is below
        // the resolution of f the comparison is meaningless; take the full step.
        const double predicted = grad.dot(step);
        Eigen::VectorXd candidate = theta + step;
        double fc = objective(candidate);
        if (-predicted > 1e-13 * (1.0 + std::abs(f))) {
            double t = 1.0;
            while (fc > f + 1e-4 * t * predicted && t > 1e-10) {
                t *= 0.5;
                candidate = theta + t * step;
                fc = objective(candidate);
            }
            if (!(t > 1e-10)) {
                candidate = theta + step;
                fc = objective(candidate);
            }
        }
        theta = std::move(candidate);
        f = fc;
    }

    m.intercept_ = theta(0);
    m.coef_ = theta.tail(d);
    m.iterations_ = it;
    m.gradient_norm_ = grad.norm();
    m.trained_ = true;
    return m;
}

} // namespace ttransport
