#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "childgrad/model.hpp"
#include "childgrad/random.hpp"

namespace childgrad {

// Gradient noise model for one masked SGD update.
struct NoiseModel {
    std::vector<double> grad_mean;  // dL/dw, length k
    double sigma_g = 1.0;           // per-example gradient noise std
    std::size_t batch_size = 1;
    double p = 1.0;                 // reserve probability
    double eta = 0.1;

    std::size_t dim() const { return grad_mean.size(); }
    void validate() const;
};

struct Moments {
    std::vector<double> mean;
    std::vector<double> variance;  // covariance diagonal
};

// Closed-form mean and covariance diagonal of the masked update:
//   E[dw] = -eta g,  Var[dw_i] = eta^2 sigma_g^2 / (p |B|) + (1 - p) eta^2 g_i^2 / p.
Moments theorem1_covariance(const NoiseModel& noise);

// Monte Carlo estimate of the same moments. Each trial draws |B| per-example
// gradients from N(g, sigma_g^2 I), averages them, applies a Bernoulli(p) mask
// with 1/p rescaling and multiplies by -eta. Variance is the unbiased sample
// variance.
Moments simulate_update_covariance(const NoiseModel& noise, std::size_t trials, Rng& rng);

// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

// CDF of the chi-square distribution with k degrees of freedom.
double chi2_cdf(double k, double x);

// x with chi2_cdf(k, x) = q, by bisection to 1e-10 absolute.
double chi2_quantile(double k, double q);

struct BoundInputs {
    double epsilon = 1.0;
    double delta = 0.05;
    std::size_t k = 1;
    double sigma2 = 1.0;
    double sigma0_2 = 1.0;
    std::vector<double> w;
    std::vector<double> w0;
    std::size_t sample_count = 2;

    double distance2() const;  // ||w - w0||^2
    void validate() const;
};

// Largest admissible sharpness: 2 eps / (F_k^{-1}(1 - delta) sigma^2).
double escape_rho_bound(const BoundInputs& in);

// sqrt((k log(1 + ||w-w0||^2 / d^2 (1 + sqrt(log|S| / k))^2) + 4 log(|S|/delta)) / (2(|S| - 1)))
// with d^2 = sigma0^2 - ||w-w0||^2 / k.
double bound_remainder(const BoundInputs& in);

// (k sigma0^2 - ||w-w0||^2) eps / (k F_k^{-1}(1 - delta) sigma^2) + R.
double generalization_bound(const BoundInputs& in);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// Largest-magnitude Hessian eigenvalue by power iteration. Hessian-vector
// products are central differences of the gradient with h = 1e-4 / ||v||.
// Returns the Rayleigh quotient after `iters` iterations.
double power_iteration(const GradientFn& grad, std::span<const double> point, std::size_t iters, Rng& rng);

// power_iteration on the mean training loss of a model over a dataset.
double sharpness_power_iteration(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                                 std::size_t iters, Rng& rng);

}  // namespace childgrad
