#pragma once

// Exhaustive sweep orchestration: size-ordered evaluation, look-ahead
// batching across sizes, and ZEH computation with its limiter.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zeh/families.hpp"
#include "zeh/model.hpp"
#include "zeh/store.hpp"
#include "zeh/toy_model.hpp"
#include "zeh/verifier.hpp"

namespace zeh {

enum class Pipeline { Naive, Tf, TfLa, Trie, FlashTree };

const char* pipeline_tag(Pipeline p);
std::optional<Pipeline> pipeline_from_tag(const std::string& tag);
bool pipeline_uses_lookahead(Pipeline p);
bool pipeline_needs_logits(Pipeline p);

struct SweepConfig {
    FamilyId family = FamilyId::Parity;
    PromptTemplate tmpl;
    Pipeline pipeline = Pipeline::Naive;
    int max_size = 8;
    int batch_budget = 256;  // instances per wave
    EnumLimits limits;
    int flash_block = 64;
    int dense_cap = 4096;
    std::string run_id;
    std::string model_tag;

    void validate() const;
};

struct ZehLimiter {
    Instance instance;
    std::string gold;
    std::string predicted;
};

struct ZehResult {
    int zeh = 0;
    bool censored = false;
    std::optional<ZehLimiter> limiter;
    int records_complete_through = 0;

    // "ZEH=4 limiter=11000 (gold 0, predicted 1)" or a censored note.
    std::string summary() const;
};

struct SweepStats {
    std::uint64_t model_calls = 0;  // instance evaluations that hit the model
    std::uint64_t fallbacks = 0;    // ambiguity-triggered autoregressive decodes
    std::uint64_t waves = 0;
    std::uint64_t cancelled = 0;
    std::uint64_t resumed = 0;  // instances satisfied from prior records
};

struct RunOutput {
    ZehResult result;
    SweepStats stats;
};

// Either a logit model or a text model; pipelines other than naive need
// logits.
struct ModelRef {
    const ToyModel* logit = nullptr;
    TextModel* text = nullptr;
};

// Prior verdict records keyed by instance_key (resume support).
struct ResumeIndex {
    std::vector<EvalRecord> records;
    const EvalRecord* find(const std::string& key) const;
};

using ProgressFn = std::function<void(const std::string& json_line)>;

// Algorithm-1 sweep: sizes in order, every instance of a failing size still
// evaluated. Pipelines: naive, tf. An adapter error aborts the sweep after
// flushing partial records (AdapterFailure).
RunOutput run_naive(const SweepConfig& config, const ModelRef& model, RecordSink& sink,
                    const ProgressFn& progress = {}, const ResumeIndex* resume = nullptr);

// Look-ahead batching: instances sorted ascending by size, packed into waves
// of batch_budget regardless of size boundaries; a confirmed failure at size
// m cancels pending work above m and the result is finalized once every
// instance of size <= m is evaluated. Pipelines: tf-la, trie, flashtree.
RunOutput run_lookahead(const SweepConfig& config, const ModelRef& model, RecordSink& sink,
                        const ProgressFn& progress = {}, const ResumeIndex* resume = nullptr);

// ZEH from a complete verdict set. Validates exhaustiveness (every size up
// to the first failure, or up to the top recorded size when none) and throws
// IncompleteRecordsError with a gap report otherwise.
ZehResult compute_zeh(const std::vector<EvalRecord>& records, FamilyId family,
                      const EnumLimits& limits = {});

}  // namespace zeh
