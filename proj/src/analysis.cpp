#include "zeh/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "zeh/error.hpp"

namespace zeh {

std::optional<std::int64_t> parse_predicted_integer(const std::string& raw) {
    std::string s = normalize_answer(raw);
    if (s.empty() || s.size() > 18) return std::nullopt;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    return std::stoll(s);
}

bool is_structured_error(std::int64_t gold, std::int64_t pred) {
    std::int64_t diff = std::llabs(pred - gold);
    return diff >= 10 && diff <= 100 && diff % 10 == 0;
}

bool has_carry(std::int64_t a, std::int64_t b) {
    for (std::int64_t x = a; x > 0; x /= 10) {
        for (std::int64_t y = b; y > 0; y /= 10) {
            if ((x % 10) * (y % 10) >= 10) return true;
        }
    }
    return false;
}

namespace {

// Solves the 4x4 (or kxk) system via Gaussian elimination with partial
// pivoting; also used to invert the information matrix for standard errors.
bool solve_linear(std::vector<double> a, std::vector<double>& b, int k) {
    for (int col = 0; col < k; ++col) {
        int pivot = col;
        for (int r = col + 1; r < k; ++r)
            if (std::fabs(a[r * k + col]) > std::fabs(a[pivot * k + col])) pivot = r;
        if (std::fabs(a[pivot * k + col]) < 1e-12) return false;
        if (pivot != col) {
            for (int c = 0; c < k; ++c) std::swap(a[col * k + c], a[pivot * k + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * k + col];
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            const double f = a[r * k + col] * inv;
            if (f == 0.0) continue;
            for (int c = col; c < k; ++c) a[r * k + c] -= f * a[col * k + c];
            b[r] -= f * b[col];
        }
        for (int c = col; c < k; ++c) a[col * k + c] *= inv;
        b[col] *= inv;
    }
    return true;
}

bool invert_matrix(const std::vector<double>& m, std::vector<double>& inv, int k) {
    inv.assign(k * k, 0.0);
    for (int col = 0; col < k; ++col) {
        std::vector<double> e(k, 0.0);
        e[col] = 1.0;
        if (!solve_linear(m, e, k)) return false;
        for (int r = 0; r < k; ++r) inv[r * k + col] = e[r];
    }
    return true;
}

double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double log_likelihood(const std::vector<CarryFeatures>& rows, const double* beta) {
    double ll = 0.0;
    for (const auto& r : rows) {
        const double eta = beta[0] + beta[1] * r.carry + beta[2] * r.log10_size +
                           beta[3] * r.interaction;
        // log sigma(eta) and log(1-sigma(eta)) in a stable form
        const double log1pexp = eta > 30 ? eta : std::log1p(std::exp(eta));
        ll += r.correct * eta - log1pexp;
    }
    return ll;
}

}  // namespace

FitResult fit_carry_logistic(const std::vector<CarryFeatures>& rows) {
    constexpr int k = 4;
    int positives = 0, negatives = 0;
    for (const auto& r : rows) (r.correct > 0.5 ? positives : negatives)++;
    if (positives < 2 || negatives < 2)
        throw ConfigError("logistic fit needs at least 2 rows per class");

    std::vector<double> beta(k, 0.0);
    double ll = log_likelihood(rows, beta.data());
    FitResult result;
    std::vector<double> info(k * k);
    constexpr int max_iter = 100;
    for (int iter = 1; iter <= max_iter; ++iter) {
        std::vector<double> grad(k, 0.0);
        std::fill(info.begin(), info.end(), 0.0);
        for (const auto& r : rows) {
            const double x[k] = {1.0, r.carry, r.log10_size, r.interaction};
            double eta = 0.0;
            for (int j = 0; j < k; ++j) eta += beta[j] * x[j];
            const double p = 1.0 / (1.0 + std::exp(-eta));
            const double w = p * (1.0 - p);
            const double resid = r.correct - p;
            for (int j = 0; j < k; ++j) {
                grad[j] += resid * x[j];
                for (int c = 0; c < k; ++c) info[j * k + c] += w * x[j] * x[c];
            }
        }
        double grad_max = 0.0;
        for (double g : grad) grad_max = std::max(grad_max, std::fabs(g));
        if (grad_max <= 1e-8) {
            result.converged = true;
            result.iterations = iter - 1;
            break;
        }

        std::vector<double> delta = grad;
        if (!solve_linear(info, delta, k))
            throw ConfigError("singular information matrix (rank-deficient design)");

        // Step halving on a likelihood decrease. The acceptance slack scales
        // with |ll|: near the optimum the true improvement of a full Newton
        // step sits below the noise floor of summing n log-terms.
        const double slack = 1e-9 * (1.0 + std::fabs(ll));
        double step = 1.0;
        std::vector<double> candidate(k);
        for (int half = 0; half < 30; ++half) {
            for (int j = 0; j < k; ++j) candidate[j] = beta[j] + step * delta[j];
            const double cand_ll = log_likelihood(rows, candidate.data());
            if (cand_ll >= ll - slack) {
                ll = cand_ll;
                beta = candidate;
                break;
            }
            step *= 0.5;
        }
        for (double b : beta)
            if (std::fabs(b) > 50.0)
                throw ConfigError(
                    "diverging coefficients: perfect separation suspected in logistic fit");
        result.iterations = iter;
    }
    if (!result.converged)
        throw ConfigError("logistic fit did not converge in " + std::to_string(max_iter) +
                          " iterations");

    // Recompute the observed information at the optimum for standard errors.
    std::fill(info.begin(), info.end(), 0.0);
    for (const auto& r : rows) {
        const double x[k] = {1.0, r.carry, r.log10_size, r.interaction};
        double eta = 0.0;
        for (int j = 0; j < k; ++j) eta += beta[j] * x[j];
        const double p = 1.0 / (1.0 + std::exp(-eta));
        const double w = p * (1.0 - p);
        for (int j = 0; j < k; ++j)
            for (int c = 0; c < k; ++c) info[j * k + c] += w * x[j] * x[c];
    }
    std::vector<double> cov;
    if (!invert_matrix(info, cov, k))
        throw ConfigError("singular information matrix at optimum");

    result.coefficients = beta;
    result.std_errors.resize(k);
    result.z_values.resize(k);
    result.p_values.resize(k);
    for (int j = 0; j < k; ++j) {
        result.std_errors[j] = std::sqrt(cov[j * k + j]);
        result.z_values[j] = beta[j] / result.std_errors[j];
        result.p_values[j] = 2.0 * normal_sf(std::fabs(result.z_values[j]));
    }
    return result;
}

namespace {

// Average ranks with ties (1-based).
std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& freqs, const std::vector<double>& correct) {
    if (freqs.size() != correct.size() || freqs.size() < 2)
        throw ConfigError("spearman needs two equal-length vectors of size >= 2");
    auto r1 = average_ranks(freqs);
    auto r2 = average_ranks(correct);
    const double n = static_cast<double>(r1.size());
    const double m1 = std::accumulate(r1.begin(), r1.end(), 0.0) / n;
    const double m2 = std::accumulate(r2.begin(), r2.end(), 0.0) / n;
    double num = 0.0, d1 = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        const double a = r1[i] - m1, b = r2[i] - m2;
        num += a * b;
        d1 += a * a;
        d2 += b * b;
    }
    if (d1 == 0.0 || d2 == 0.0)
        throw ConfigError("spearman undefined: zero variance in a ranked vector");
    return num / std::sqrt(d1 * d2);
}

static std::string one_decimal(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << v;
    return os.str();
}

StabilityRow prompt_stability(const std::vector<int>& zehs) {
    if (zehs.size() < 2) throw ConfigError("prompt stability needs >= 2 prompts");
    const double n = static_cast<double>(zehs.size());
    double mean = std::accumulate(zehs.begin(), zehs.end(), 0.0) / n;
    double ss = 0.0;
    for (int z : zehs) ss += (z - mean) * (z - mean);
    StabilityRow row;
    row.mean = mean;
    row.sample_std = std::sqrt(ss / (n - 1.0));
    row.min_zeh = *std::min_element(zehs.begin(), zehs.end());
    row.display = one_decimal(row.mean) + " / " + one_decimal(row.sample_std);
    return row;
}

StructuredReport structured_error_report(const std::vector<EvalRecord>& records) {
    StructuredReport report;
    for (const auto& r : records) {
        auto o = outcome_from_tag(r.verdict);
        if (!o || !outcome_is_wrong(*o)) continue;
        auto gold = parse_predicted_integer(r.gold);
        auto pred = parse_predicted_integer(r.predicted);
        if (!gold || !pred) {
            ++report.unparseable;
            continue;
        }
        ++report.total_errors;
        if (is_structured_error(*gold, *pred)) ++report.structured_errors;
    }
    if (report.total_errors == 0) {
        report.rate_display = "—";
    } else {
        const double pct = 100.0 * report.rate();
        report.rate_display = std::to_string(static_cast<int>(std::lround(pct))) + "%";
    }
    return report;
}

std::string extract_limiter_report(const ZehResult& result, FamilyId family) {
    if (result.censored)
        return std::string(family_tag(family)) + " | no failure <= max_size " +
               std::to_string(result.records_complete_through);
    const auto& lim = *result.limiter;
    std::ostringstream os;
    os << family_tag(family) << " | ZEH " << result.zeh << " | " << instance_display(lim.instance)
       << " | gold " << lim.gold << " | pred " << lim.predicted;
    return os.str();
}

}  // namespace zeh
