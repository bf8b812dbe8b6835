#include <cmath>
#include <random>

#include "doctest.h"
#include "zeh/analysis.hpp"
#include "zeh/error.hpp"

using namespace zeh;

namespace {

// Independent O(n^2) average-rank calculator: rank = #less + (#equal+1)/2.
std::vector<double> counting_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        int less = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++equal;
        }
        ranks[i] = less + (equal + 1) / 2.0;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

// Brute-force digit-pair oracle for carries.
bool carry_oracle(int a, int b) {
    std::vector<int> da, db;
    for (int x = a; x > 0; x /= 10) da.push_back(x % 10);
    for (int x = b; x > 0; x /= 10) db.push_back(x % 10);
    for (int x : da)
        for (int y : db)
            if (x * y >= 10) return true;
    return false;
}

EvalRecord wrong_record(std::int64_t gold, const std::string& predicted) {
    EvalRecord r;
    r.run_id = "r";
    r.family = "mult";
    r.size = 2;
    r.instance_key = "mult:2x2";
    r.gold = std::to_string(gold);
    r.predicted = predicted;
    r.verdict = "wrong";
    r.model_tag = "m";
    return r;
}

std::vector<CarryFeatures> simulate(const double* beta, int n, std::uint64_t seed,
                                    bool null_labels = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<CarryFeatures> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) {
        CarryFeatures f;
        f.carry = unif(rng) < 0.5 ? 1.0 : 0.0;
        f.log10_size = -2.0 + 4.0 * unif(rng);
        f.interaction = f.carry * f.log10_size;
        double eta = beta[0] + beta[1] * f.carry + beta[2] * f.log10_size +
                     beta[3] * f.interaction;
        double p = null_labels ? 0.5 : 1.0 / (1.0 + std::exp(-eta));
        f.correct = unif(rng) < p ? 1.0 : 0.0;
        rows.push_back(f);
    }
    return rows;
}

}  // namespace

TEST_CASE("structured error definition") {
    CHECK(is_structured_error(986, 1006));   // diff 20
    CHECK(is_structured_error(100, 200));    // diff 100
    CHECK(is_structured_error(56, 46));      // diff -10
    CHECK_FALSE(is_structured_error(100, 215));
    CHECK_FALSE(is_structured_error(986, 986));
    CHECK_FALSE(is_structured_error(10, 120));  // diff 110 > 100

    // exhaustive against the set definition over |gold-pred| <= 200
    for (int diff = -200; diff <= 200; ++diff) {
        bool in_set = false;
        for (int k = 10; k <= 100; k += 10) in_set |= std::abs(diff) == k;
        CHECK(is_structured_error(1000, 1000 + diff) == in_set);
    }
}

TEST_CASE("has_carry matches the digit-pair oracle exhaustively for a,b <= 99") {
    CHECK(has_carry(34, 29));   // 4*9 = 36
    CHECK_FALSE(has_carry(11, 11));
    for (int a = 1; a <= 99; ++a)
        for (int b = 1; b <= 99; ++b) CHECK(has_carry(a, b) == carry_oracle(a, b));
}

TEST_CASE("logistic fit recovers known coefficients") {
    const double beta[4] = {0.3, -0.5456, 1.0, -0.3483};
    auto rows = simulate(beta, 20000, 7);
    FitResult fit = fit_carry_logistic(rows);
    REQUIRE(fit.converged);
    for (int j = 0; j < 4; ++j) CHECK(std::fabs(fit.coefficients[j] - beta[j]) < 0.1);
    CHECK(fit.coefficients[3] < 0.0);
    CHECK(fit.p_values[3] < 0.05);
}

TEST_CASE("null labels give an insignificant interaction") {
    const double beta[4] = {0.0, 0.0, 0.0, 0.0};
    auto rows = simulate(beta, 5000, 11, /*null_labels=*/true);
    FitResult fit = fit_carry_logistic(rows);
    REQUIRE(fit.converged);
    CHECK(std::fabs(fit.z_values[3]) < 2.5);
    CHECK(fit.p_values[3] > 0.05);
}

TEST_CASE("degenerate designs raise named errors") {
    // x1 constant zero: interaction column is all-zero -> rank error
    std::vector<CarryFeatures> rows;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        CarryFeatures f;
        f.carry = 0.0;
        f.log10_size = static_cast<double>(i % 7) - 3.0;
        f.interaction = 0.0;
        f.correct = (rng() % 2) ? 1.0 : 0.0;
        rows.push_back(f);
    }
    CHECK_THROWS_WITH_AS(fit_carry_logistic(rows), doctest::Contains("singular"), ConfigError);

    // perfectly separable labels -> diverging coefficients
    std::vector<CarryFeatures> sep;
    for (int i = 0; i < 200; ++i) {
        CarryFeatures f;
        f.carry = i % 2 ? 1.0 : 0.0;
        f.log10_size = -2.0 + 4.0 * (i / 200.0);
        f.interaction = f.carry * f.log10_size;
        f.correct = f.log10_size > 0.0 ? 1.0 : 0.0;
        sep.push_back(f);
    }
    CHECK_THROWS_WITH_AS(fit_carry_logistic(sep), doctest::Contains("separation"), ConfigError);

    CHECK_THROWS_AS(fit_carry_logistic({}), ConfigError);
}

TEST_CASE("spearman basics") {
    CHECK(spearman_rho({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman_rho({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(spearman_rho({1, 1, 1}, {0, 1, 0}), ConfigError);  // zero variance
    CHECK_THROWS_AS(spearman_rho({1.0}, {1.0}), ConfigError);
}

TEST_CASE("spearman matches the counting-rank oracle on 300 random tied datasets") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 300; ++trial) {
        int n = 5 + static_cast<int>(rng() % 40);
        std::vector<double> freqs(n), correct(n);
        for (int i = 0; i < n; ++i) {
            freqs[i] = static_cast<double>(rng() % 8);  // heavy ties
            correct[i] = static_cast<double>(rng() % 2);
        }
        bool defined = true;
        try {
            double rho = spearman_rho(freqs, correct);
            double ref = pearson(counting_ranks(freqs), counting_ranks(correct));
            CHECK(std::fabs(rho - ref) <= 1e-12);
        } catch (const ConfigError&) {
            defined = false;  // zero-variance draw; oracle agrees it is undefined
            auto r1 = counting_ranks(freqs);
            auto r2 = counting_ranks(correct);
            bool v1 = std::all_of(r1.begin(), r1.end(), [&](double x) { return x == r1[0]; });
            bool v2 = std::all_of(r2.begin(), r2.end(), [&](double x) { return x == r2[0]; });
            CHECK((v1 || v2));
        }
        (void)defined;
    }
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 6 + static_cast<int>(rng() % 20);
        std::vector<double> freqs(n), correct(n), transformed(n);
        for (int i = 0; i < n; ++i) {
            freqs[i] = static_cast<double>(rng() % 50);
            correct[i] = static_cast<double>(rng() % 2);
            transformed[i] = std::exp(freqs[i] / 10.0) + 3.0;  // strictly monotone
        }
        try {
            double a = spearman_rho(freqs, correct);
            double b = spearman_rho(transformed, correct);
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
        } catch (const ConfigError&) {
        }
    }
}

TEST_CASE("prompt stability reproduces every row of the prompt table") {
    struct Row {
        std::vector<int> zehs;
        const char* mean;
        const char* std;
    };
    const Row rows[] = {
        {{0, 10, 6, 0, 1}, "3.4", "4.4"},
        {{20, 16, 10, 16, 14}, "15.2", "3.6"},
        {{15, 12, 12, 12, 9}, "12.0", "2.1"},
        {{22, 22, 22, 21, 22}, "21.8", "0.4"},
        {{26, 41, 41, 31, 43}, "36.4", "7.5"},
        {{33, 46, 33, 33, 33}, "35.6", "5.8"},
        {{42, 40, 40, 45, 43}, "42.0", "2.1"},
    };
    for (const auto& row : rows) {
        StabilityRow s = prompt_stability(row.zehs);
        CHECK(s.display == std::string(row.mean) + " / " + row.std);
    }
    // identical values -> zero dispersion; min is reported
    StabilityRow flat = prompt_stability({7, 7, 7});
    CHECK(flat.sample_std == 0.0);
    CHECK(flat.min_zeh == 7);
    StabilityRow first = prompt_stability({0, 10, 6, 0, 1});
    CHECK(first.min_zeh == 0);
    CHECK_THROWS_AS(prompt_stability({5}), ConfigError);
}

TEST_CASE("structured error report") {
    // 141 parseable errors, 127 of them structured -> 90%
    std::vector<EvalRecord> records;
    for (int i = 0; i < 127; ++i) records.push_back(wrong_record(1000, "1010"));
    for (int i = 0; i < 14; ++i) records.push_back(wrong_record(1000, "1234"));
    // correct records and unparseable errors do not enter the denominator
    EvalRecord ok = wrong_record(1000, "1000");
    ok.verdict = "correct";
    records.push_back(ok);
    records.push_back(wrong_record(1000, "about a thousand"));

    StructuredReport rep = structured_error_report(records);
    CHECK(rep.total_errors == 141);
    CHECK(rep.structured_errors == 127);
    CHECK(rep.rate_display == "90%");
    CHECK(rep.unparseable == 1);

    StructuredReport empty = structured_error_report({});
    CHECK(empty.total_errors == 0);
    CHECK(empty.rate_display == "—");

    std::vector<EvalRecord> all_structured;
    for (int i = 0; i < 5; ++i) all_structured.push_back(wrong_record(500, "510"));
    CHECK(structured_error_report(all_structured).rate_display == "100%");
}

TEST_CASE("predicted-integer parsing") {
    CHECK(parse_predicted_integer("1,204") == 1204);
    CHECK(parse_predicted_integer(" 056.") == 56);
    CHECK_FALSE(parse_predicted_integer("-5").has_value());
    CHECK_FALSE(parse_predicted_integer("12a").has_value());
    CHECK_FALSE(parse_predicted_integer("").has_value());
}

TEST_CASE("limiter report line") {
    ZehResult res;
    res.zeh = 4;
    res.censored = false;
    res.limiter = ZehLimiter{make_string_instance(FamilyId::Parity, "11000"), "0", "1"};
    CHECK(extract_limiter_report(res, FamilyId::Parity) ==
          "parity | ZEH 4 | 11000 | gold 0 | pred 1");

    ZehResult mult;
    mult.zeh = 126;
    mult.censored = false;
    mult.limiter = ZehLimiter{make_mult_instance(127, 82), "10414", "10314"};
    CHECK(extract_limiter_report(mult, FamilyId::Multiplication) ==
          "mult | ZEH 126 | 127x82 | gold 10414 | pred 10314");

    ZehResult censored;
    censored.zeh = 8;
    censored.censored = true;
    censored.records_complete_through = 8;
    CHECK(extract_limiter_report(censored, FamilyId::Multiplication).find("no failure") !=
          std::string::npos);
}
