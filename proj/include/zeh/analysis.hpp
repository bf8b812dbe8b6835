#pragma once

// Post-hoc error analysis over verdict records: structured multiplication
// errors, carry-interaction logistic regression, Spearman frequency
// correlation and prompt-stability tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zeh/scheduler.hpp"
#include "zeh/store.hpp"

namespace zeh {

struct ErrorRecord {
    std::string instance_key;
    std::int64_t gold = 0;
    std::int64_t predicted = 0;  // valid when parse_ok
    bool parse_ok = false;
};

// Parses a prediction into a non-negative integer after normalization;
// nullopt when it is not a plain digit string.
std::optional<std::int64_t> parse_predicted_integer(const std::string& raw);

// |pred - gold| in {10, 20, ..., 100}.
bool is_structured_error(std::int64_t gold, std::int64_t pred);

// Some decimal digit of a times some decimal digit of b is >= 10.
bool has_carry(std::int64_t a, std::int64_t b);

struct CarryFeatures {
    double carry = 0.0;      // x1 in {0,1}
    double log10_size = 0.0; // x2
    double interaction = 0.0; // x3 = x1*x2
    double correct = 0.0;    // y in {0,1}
};

struct FitResult {
    // Order: intercept, carry, log10 size, interaction.
    std::vector<double> coefficients;
    std::vector<double> std_errors;
    std::vector<double> z_values;
    std::vector<double> p_values;
    bool converged = false;
    int iterations = 0;
};

// Maximum-likelihood logistic fit (Newton with step halving); standard
// errors from the inverse observed information, Wald p-values via the normal
// approximation. Throws ConfigError on a singular design or diverging
// coefficients (perfect separation).
FitResult fit_carry_logistic(const std::vector<CarryFeatures>& rows);

// Exact Spearman with average-rank tie correction (Pearson on ranks).
// Throws ConfigError when either ranked vector has zero variance.
double spearman_rho(const std::vector<double>& freqs, const std::vector<double>& correct);

struct StabilityRow {
    double mean = 0.0;
    double sample_std = 0.0;  // n-1 denominator
    int min_zeh = 0;
    std::string display;  // "3.4 / 4.4" style one-decimal rendering
};

StabilityRow prompt_stability(const std::vector<int>& zehs);

struct StructuredReport {
    std::uint64_t total_errors = 0;       // wrong records with parseable predictions
    std::uint64_t structured_errors = 0;
    std::uint64_t unparseable = 0;        // wrong records excluded from both counts
    std::string rate_display;             // "90%" or em-dash when undefined

    double rate() const {
        return total_errors ? static_cast<double>(structured_errors) / total_errors : 0.0;
    }
};

StructuredReport structured_error_report(const std::vector<EvalRecord>& records);

// One line in the first-failure table format:
// "parity | ZEH 4 | 11000 | gold 0 | pred 1".
std::string extract_limiter_report(const ZehResult& result, FamilyId family);

}  // namespace zeh
