#pragma once

// Pipeline benchmark harness: verification-only timing over a fixed suite
// and end-to-end ZEH timing, with verdict-set diffing before any number is
// reported and a score-evaluation counter comparison between the dense
// reference and the blocked kernel.

#include <cstdint>
#include <string>
#include <vector>

#include "zeh/scheduler.hpp"
#include "zeh/toy_model.hpp"

namespace zeh {

struct BenchOptions {
    std::vector<Pipeline> pipelines = {Pipeline::Naive, Pipeline::Tf, Pipeline::TfLa,
                                       Pipeline::Trie, Pipeline::FlashTree};
    FamilyId family = FamilyId::Multiplication;
    std::string template_name = "baseline";
    int suite_max_size = 99;
    int batch_budget = 128;
    int warmup = 3;   // untimed iterations
    int reps = 5;     // timing = median of reps
    int flash_block = 64;
    int dense_cap = 4096;
    ToyModelConfig model;
    EnumLimits limits;
};

struct BenchRow {
    Pipeline pipeline = Pipeline::Tf;
    double verify_ms = 0.0;  // full-suite verification, no early stop
    double e2e_ms = 0.0;     // ZEH sweep including fallback time
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::uint64_t suite_instances = 0;
    std::uint64_t dense_scores = 0;  // attention score evaluations, dense reference
    std::uint64_t flash_scores = 0;  // same work counted in the blocked kernel
    bool verdicts_match = false;
    std::string first_mismatch;  // instance key when !verdicts_match
    // Check positions where the dense and blocked kernels disagree on the
    // argmax (float reordering). Measured and reported, never asserted.
    std::uint64_t flip_positions = 0;
    std::uint64_t checked_positions = 0;
    ZehResult zeh;  // shared across pipelines (asserted equal)

    std::string format() const;  // the two runtime tables with speedups
    std::string to_json() const;
};

BenchReport run_bench(const BenchOptions& options);

}  // namespace zeh
