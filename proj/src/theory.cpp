#include "childgrad/theory.hpp"

#include <cmath>
#include <limits>

#include "childgrad/error.hpp"
#include "childgrad/numeric.hpp"

namespace childgrad {

void NoiseModel::validate() const {
    if (grad_mean.empty()) throw ConfigError("noise model: dimension must be at least 1");
    if (!(sigma_g > 0.0)) throw ConfigError("noise model: sigma_g must be positive");
    if (batch_size == 0) throw ConfigError("noise model: batch size must be at least 1");
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("noise model: p must lie in (0, 1]");
    if (!(eta > 0.0)) throw ConfigError("noise model: eta must be positive");
}

Moments theorem1_covariance(const NoiseModel& noise) {
    noise.validate();
    const double eta2 = noise.eta * noise.eta;
    const double base = eta2 * noise.sigma_g * noise.sigma_g / (noise.p * static_cast<double>(noise.batch_size));
    Moments out;
    out.mean.resize(noise.dim());
    out.variance.resize(noise.dim());
    for (std::size_t i = 0; i < noise.dim(); ++i) {
        const double g = noise.grad_mean[i];
        out.mean[i] = -noise.eta * g;
        out.variance[i] = base + (1.0 - noise.p) * eta2 * g * g / noise.p;
    }
    return out;
}

Moments simulate_update_covariance(const NoiseModel& noise, std::size_t trials, Rng& rng) {
    noise.validate();
    if (trials < 2) throw ConfigError("simulation needs at least two trials");
    const std::size_t k = noise.dim();
    const double inv_b = 1.0 / static_cast<double>(noise.batch_size);
    const double inv_p = 1.0 / noise.p;
    // Welford accumulators per coordinate.
    std::vector<double> mean(k, 0.0);
    std::vector<double> m2(k, 0.0);
    std::vector<double> batch_sum(k);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::fill(batch_sum.begin(), batch_sum.end(), 0.0);
        for (std::size_t b = 0; b < noise.batch_size; ++b) {
            for (std::size_t i = 0; i < k; ++i) batch_sum[i] += rng.normal(noise.grad_mean[i], noise.sigma_g);
        }
        const double n = static_cast<double>(trial + 1);
        for (std::size_t i = 0; i < k; ++i) {
            const double g = batch_sum[i] * inv_b;
            const double masked = rng.bernoulli(noise.p) ? g * inv_p : 0.0;
            const double dw = -noise.eta * masked;
            const double delta = dw - mean[i];
            mean[i] += delta / n;
            m2[i] += delta * (dw - mean[i]);
        }
    }
    Moments out;
    out.mean = std::move(mean);
    out.variance.resize(k);
    for (std::size_t i = 0; i < k; ++i) out.variance[i] = m2[i] / static_cast<double>(trials - 1);
    return out;
}

namespace {

constexpr int kMaxGammaIter = 10000;
constexpr double kGammaEps = 1e-16;

// Series expansion of P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < kMaxGammaIter; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kGammaEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) by modified Lentz, valid for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kGammaEps;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxGammaIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kGammaEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0)) throw ConfigError("incomplete gamma: a must be positive");
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_fraction(a, x);
}

double chi2_cdf(double k, double x) {
    return regularized_gamma_p(0.5 * k, 0.5 * x);
}

double chi2_quantile(double k, double q) {
    if (!(k >= 1.0)) throw ConfigError("chi2 quantile: k must be at least 1");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("chi2 quantile: q must lie in (0, 1)");
    double lo = 0.0;
    double hi = k + 40.0 * std::sqrt(k) + 40.0;
    while (chi2_cdf(k, hi) < q) hi *= 2.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(k, mid) < q) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double BoundInputs::distance2() const {
    std::vector<double> sq(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = w[i] - w0[i];
        sq[i] = d * d;
    }
    return pairwise_sum(sq);
}

void BoundInputs::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("bound: epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("bound: delta must lie in (0, 1)");
    if (k == 0) throw ConfigError("bound: k must be at least 1");
    if (!(sigma2 > 0.0) || !(sigma0_2 > 0.0)) throw ConfigError("bound: variances must be positive");
    if (w.size() != w0.size()) throw ShapeError("bound: w and w0 are not aligned");
    if (sample_count < 2) throw ConfigError("bound: |S| must be at least 2");
}

double escape_rho_bound(const BoundInputs& in) {
    in.validate();
    const double k = static_cast<double>(in.k);
    return 2.0 * in.epsilon / (chi2_quantile(k, 1.0 - in.delta) * in.sigma2);
}

double bound_remainder(const BoundInputs& in) {
    in.validate();
    const double k = static_cast<double>(in.k);
    const double dist2 = in.distance2();
    const double slack = k * in.sigma0_2 - dist2;
    if (!(slack > 0.0)) {
        throw ConfigError("bound: requires k * sigma0^2 > ||w - w0||^2");
    }
    const double s = static_cast<double>(in.sample_count);
    const double widen = 1.0 + std::sqrt(std::log(s) / k);
    const double log_term = k * std::log(1.0 + k * dist2 / slack * widen * widen);
    return std::sqrt((log_term + 4.0 * std::log(s / in.delta)) / (2.0 * (s - 1.0)));
}

double generalization_bound(const BoundInputs& in) {
    const double r = bound_remainder(in);
    const double k = static_cast<double>(in.k);
    const double slack = k * in.sigma0_2 - in.distance2();
    return slack * in.epsilon / (k * chi2_quantile(k, 1.0 - in.delta) * in.sigma2) + r;
}

double power_iteration(const GradientFn& grad, std::span<const double> point, std::size_t iters, Rng& rng) {
    if (iters == 0) throw ConfigError("power iteration needs at least one iteration");
    const std::size_t n = point.size();
    if (n == 0) throw ShapeError("power iteration on an empty parameter vector");
    std::vector<double> v(n);
    double norm = 0.0;
    while (norm == 0.0) {
        for (double& x : v) x = rng.normal();
        norm = l2_norm(v);
    }
    for (double& x : v) x /= norm;

    std::vector<double> plus(n);
    std::vector<double> minus(n);
    double rayleigh = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const double h = 1e-4 / l2_norm(v);
        for (std::size_t i = 0; i < n; ++i) {
            plus[i] = point[i] + h * v[i];
            minus[i] = point[i] - h * v[i];
        }
        const auto gp = grad(plus);
        const auto gm = grad(minus);
        std::vector<double> hv(n);
        for (std::size_t i = 0; i < n; ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * h);
        rayleigh = dot(v, hv) / dot(v, v);
        const double hv_norm = l2_norm(hv);
        if (hv_norm == 0.0 || !std::isfinite(hv_norm)) break;
        for (std::size_t i = 0; i < n; ++i) v[i] = hv[i] / hv_norm;
    }
    return rayleigh;
}

double sharpness_power_iteration(const ModelSpec& spec, const ParamVector& params, const Dataset& data,
                                 std::size_t iters, Rng& rng) {
    const Graph graph = build_graph(spec, LossRole::Training);
    const Batch batch = data.all();
    ParamVector probe = params;
    GradientFn grad = [&](std::span<const double> w) {
        std::copy(w.begin(), w.end(), probe.values().begin());
        return forward_backward(graph, probe, batch).grads;
    };
    return power_iteration(grad, params.values(), iters, rng);
}

}  // namespace childgrad
