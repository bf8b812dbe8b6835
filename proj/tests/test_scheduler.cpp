#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "zeh/error.hpp"
#include "zeh/scheduler.hpp"
#include "zeh/scripted_model.hpp"

using namespace zeh;

namespace {

SweepConfig scripted_config(FamilyId family, Pipeline pipeline, int max_size,
                            int batch_budget = 16) {
    SweepConfig cfg;
    cfg.family = family;
    cfg.tmpl = find_template(family, "baseline");
    cfg.pipeline = pipeline;
    cfg.max_size = max_size;
    cfg.batch_budget = batch_budget;
    cfg.run_id = "test";
    cfg.model_tag = "scripted";
    return cfg;
}

RunOutput run_scripted(ScriptedModel& model, const SweepConfig& cfg, VectorSink& sink,
                       const ResumeIndex* resume = nullptr) {
    ModelRef ref;
    ref.text = &model;
    return run_naive(cfg, ref, sink, {}, resume);
}

ToyModelConfig tiny(std::uint64_t seed) {
    ToyModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("fault at 1x1 gives zeh 0 with the injected answer as limiter") {
    ScriptedModel model(std::map<std::string, std::string>{{"mult:1x1", "2"}});
    auto cfg = scripted_config(FamilyId::Multiplication, Pipeline::Naive, 6);
    VectorSink sink;
    RunOutput out = run_scripted(model, cfg, sink);
    CHECK(out.result.zeh == 0);
    CHECK_FALSE(out.result.censored);
    REQUIRE(out.result.limiter.has_value());
    CHECK(out.result.limiter->instance.key == "mult:1x1");
    CHECK(out.result.limiter->predicted == "2");
    CHECK(out.result.limiter->gold == "1");
}

TEST_CASE("no faults means a censored result at max_size") {
    ScriptedModel model;
    auto cfg = scripted_config(FamilyId::Multiplication, Pipeline::Naive, 10);
    VectorSink sink;
    RunOutput out = run_scripted(model, cfg, sink);
    CHECK(out.result.censored);
    CHECK(out.result.zeh == 10);
    CHECK_FALSE(out.result.limiter.has_value());
    CHECK(out.result.summary().find("censored") != std::string::npos);
}

TEST_CASE("single fault at size 5 gives zeh 4 and a fully evaluated failing size") {
    ScriptedModel model(std::map<std::string, std::string>{{"mult:5x3", "999"}});
    auto cfg = scripted_config(FamilyId::Multiplication, Pipeline::Naive, 9);
    VectorSink sink;
    RunOutput out = run_scripted(model, cfg, sink);
    CHECK(out.result.zeh == 4);
    CHECK(out.result.limiter->instance.key == "mult:5x3");
    // the whole of B_5 is still evaluated
    int size5 = 0;
    for (const auto& r : sink.records)
        if (r.size == 5) ++size5;
    CHECK(size5 == 9);
    // nothing above the failing size was touched
    for (const auto& r : sink.records) CHECK(r.size <= 5);
}

TEST_CASE("canonical-first limiter among same-size faults") {
    // canonical order at size 3: 3x1, 3x2, 3x3, 1x3, 2x3
    ScriptedModel model(
        std::map<std::string, std::string>{{"mult:1x3", "0"}, {"mult:3x2", "0"}});
    auto cfg = scripted_config(FamilyId::Multiplication, Pipeline::Naive, 5);
    VectorSink sink;
    RunOutput out = run_scripted(model, cfg, sink);
    CHECK(out.result.zeh == 2);
    CHECK(out.result.limiter->instance.key == "mult:3x2");
}

TEST_CASE("pipeline preconditions") {
    ScriptedModel model;
    ModelRef ref;
    ref.text = &model;
    VectorSink sink;
    auto cfg = scripted_config(FamilyId::Parity, Pipeline::Trie, 4);
    CHECK_THROWS_AS(run_naive(cfg, ref, sink), ConfigError);
    CHECK_THROWS_AS(run_lookahead(cfg, ref, sink), ConfigError);  // text model, needs logits
    cfg.pipeline = Pipeline::Tf;
    CHECK_THROWS_AS(run_naive(cfg, ref, sink), ConfigError);  // tf needs logits too
}

TEST_CASE("compute_zeh validates exhaustive coverage") {
    ScriptedModel model(std::map<std::string, std::string>{{"parity:110", "9"}});
    auto cfg = scripted_config(FamilyId::Parity, Pipeline::Naive, 5);
    VectorSink sink;
    RunOutput out = run_scripted(model, cfg, sink);
    CHECK(out.result.zeh == 2);

    // removing one size-2 record makes the set non-exhaustive
    std::vector<EvalRecord> records = sink.records;
    std::erase_if(records, [](const EvalRecord& r) { return r.instance_key == "parity:01"; });
    CHECK_THROWS_WITH_AS(compute_zeh(records, FamilyId::Parity),
                         doctest::Contains("parity:01"), IncompleteRecordsError);

    // a failure bounded by complete sizes tolerates missing records above it
    std::vector<EvalRecord> trimmed = sink.records;
    std::erase_if(trimmed, [](const EvalRecord& r) { return r.size > 3; });
    ZehResult res = compute_zeh(trimmed, FamilyId::Parity);
    CHECK(res.zeh == 2);
    CHECK(res.limiter->instance.key == "parity:110");
}

TEST_CASE("Wrong at 1x1 gives zeh 0 via compute_zeh floor convention") {
    ScriptedModel model(std::map<std::string, std::string>{{"mult:1x1", "2"}});
    auto cfg = scripted_config(FamilyId::Multiplication, Pipeline::Naive, 3);
    VectorSink sink;
    RunOutput out = run_scripted(model, cfg, sink);
    ZehResult res = compute_zeh(sink.records, FamilyId::Multiplication);
    CHECK(res.zeh == 0);
    CHECK(res.records_complete_through == 1);
}

TEST_CASE("look-ahead equals naive on toy models") {
    ToyModel model(tiny(42));
    ModelRef ref;
    ref.logit = &model;

    auto cfg = scripted_config(FamilyId::Parity, Pipeline::Tf, 6);
    cfg.model_tag = "toy";
    VectorSink naive_sink;
    RunOutput naive_out = run_naive(cfg, ref, naive_sink);

    for (Pipeline p : {Pipeline::TfLa, Pipeline::Trie, Pipeline::FlashTree}) {
        auto la_cfg = scripted_config(FamilyId::Parity, p, 6, /*batch_budget=*/8);
        la_cfg.model_tag = "toy";
        VectorSink la_sink;
        RunOutput la_out = run_lookahead(la_cfg, ref, la_sink);
        CHECK(la_out.result.zeh == naive_out.result.zeh);
        CHECK(la_out.result.censored == naive_out.result.censored);
        if (naive_out.result.limiter) {
            REQUIRE(la_out.result.limiter.has_value());
            CHECK(la_out.result.limiter->instance.key ==
                  naive_out.result.limiter->instance.key);
            CHECK(la_out.result.limiter->predicted == naive_out.result.limiter->predicted);
        }
        CHECK(la_out.stats.waves >= 1);
    }
}

TEST_CASE("cancellation records never carry verdicts") {
    ToyModel model(tiny(0));
    ModelRef ref;
    ref.logit = &model;
    auto la_cfg = scripted_config(FamilyId::Parity, Pipeline::TfLa, 8, /*batch_budget=*/64);
    la_cfg.model_tag = "toy";
    VectorSink la_sink;
    RunOutput la_out = run_lookahead(la_cfg, ref, la_sink);
    if (!la_out.result.censored) {
        CHECK(la_out.stats.cancelled > 0);
        std::size_t cancelled_records = 0;
        for (const auto& r : la_sink.records)
            if (r.verdict == "cancelled") {
                ++cancelled_records;
                CHECK_FALSE(outcome_from_tag(r.verdict).has_value());
            }
        CHECK(cancelled_records == la_out.stats.cancelled);
    }
}

TEST_CASE("single wave larger than the whole suite degenerates to naive") {
    ToyModel model(tiny(11));
    ModelRef ref;
    ref.logit = &model;
    auto naive_cfg = scripted_config(FamilyId::Parity, Pipeline::Tf, 4);
    naive_cfg.model_tag = "toy";
    VectorSink s1;
    RunOutput a = run_naive(naive_cfg, ref, s1);

    auto la_cfg = scripted_config(FamilyId::Parity, Pipeline::TfLa, 4, /*batch_budget=*/10000);
    la_cfg.model_tag = "toy";
    VectorSink s2;
    RunOutput b = run_lookahead(la_cfg, ref, s2);
    CHECK(b.stats.waves == 1);
    CHECK(a.result.zeh == b.result.zeh);
    CHECK(a.result.censored == b.result.censored);
}

TEST_CASE("adapter-error aborts the sweep and preserves partial records") {
    struct FailingModel : TextModel {
        ModelAnswer answer(const ModelRequest& req) override {
            calls_.fetch_add(1);
            if (req.instance_key == "parity:01") return {false, "", "synthetic timeout"};
            Instance inst = parse_instance_key(req.instance_key);
            return {true, oracle(inst).text, {}};
        }
    } model;
    ModelRef ref;
    ref.text = &model;
    auto cfg = scripted_config(FamilyId::Parity, Pipeline::Naive, 4);
    VectorSink sink;
    CHECK_THROWS_AS(run_naive(cfg, ref, sink), AdapterFailure);
    bool has_error_record = false;
    for (const auto& r : sink.records)
        if (r.verdict == "adapter_error") has_error_record = true;
    CHECK(has_error_record);
    // no ZEH can be computed over a set with a hole in it
    CHECK_THROWS_AS(compute_zeh(sink.records, FamilyId::Parity), IncompleteRecordsError);
}

TEST_CASE("resume skips evaluated instances entirely") {
    ScriptedModel model(std::map<std::string, std::string>{{"parity:1100", "9"}});
    auto cfg = scripted_config(FamilyId::Parity, Pipeline::Naive, 5);

    VectorSink full_sink;
    RunOutput full = run_scripted(model, cfg, full_sink);
    const auto calls_after_full = model.call_count();

    // resume over the complete record set: zero new model calls
    ResumeIndex resume;
    resume.records = full_sink.records;
    VectorSink resumed_sink;
    RunOutput resumed = run_scripted(model, cfg, resumed_sink, &resume);
    CHECK(model.call_count() == calls_after_full);
    CHECK(resumed.result.zeh == full.result.zeh);
    CHECK(resumed.result.limiter->instance.key == full.result.limiter->instance.key);
    CHECK(resumed.stats.resumed == full_sink.records.size());
}

TEST_CASE("scripted ZEH exactness under random fault sets") {
    std::mt19937_64 rng(2718);
    for (int trial = 0; trial < 12; ++trial) {
        FamilyId family = trial % 2 ? FamilyId::Parity : FamilyId::Multiplication;
        const int max_size = 6;
        std::map<std::string, std::string> faults;
        int min_fault_size = max_size + 1;
        int fault_count = 1 + static_cast<int>(rng() % 3);
        for (int f = 0; f < fault_count; ++f) {
            int size = 1 + static_cast<int>(rng() % max_size);
            auto bn = enumerate_bn(family, size);
            const auto& inst = bn[rng() % bn.size()];
            faults[inst.key] = "wrong!";
            min_fault_size = std::min(min_fault_size, size);
        }
        ScriptedModel model(faults);
        auto cfg = scripted_config(family, Pipeline::Naive, max_size);
        VectorSink sink;
        RunOutput out = run_scripted(model, cfg, sink);
        CHECK(out.result.zeh == min_fault_size - 1);
        REQUIRE(out.result.limiter.has_value());
        // limiter is the canonical-first fault at the smallest faulted size
        for (const auto& inst : enumerate_bn(family, min_fault_size)) {
            if (faults.count(inst.key)) {
                CHECK(out.result.limiter->instance.key == inst.key);
                break;
            }
        }
    }
}

TEST_CASE("sweep progress events are JSON lines") {
    ScriptedModel model(std::map<std::string, std::string>{{"parity:10", "x"}});
    auto cfg = scripted_config(FamilyId::Parity, Pipeline::Naive, 4);
    VectorSink sink;
    std::vector<std::string> events;
    ModelRef ref;
    ref.text = &model;
    run_naive(cfg, ref, sink, [&](const std::string& line) { events.push_back(line); });
    bool started = false, completed = false, failure = false;
    for (const auto& e : events) {
        if (e.find("\"size_started\"") != std::string::npos) started = true;
        if (e.find("\"size_completed\"") != std::string::npos) completed = true;
        if (e.find("\"failure_found\"") != std::string::npos) failure = true;
        CHECK(e.front() == '{');
        CHECK(e.back() == '}');
    }
    CHECK(started);
    CHECK(completed);
    CHECK(failure);
}

TEST_CASE("trie pipelines honor resume") {
    ToyModel model(tiny(21));
    ModelRef ref;
    ref.logit = &model;
    auto cfg = scripted_config(FamilyId::Parity, Pipeline::FlashTree, 5, /*batch_budget=*/8);
    cfg.model_tag = "toy";

    VectorSink full;
    RunOutput fresh = run_lookahead(cfg, ref, full);

    ResumeIndex resume;
    for (const auto& r : full.records)
        if (r.is_verdict()) resume.records.push_back(r);
    VectorSink again;
    RunOutput resumed = run_lookahead(cfg, ref, again, {}, &resume);
    CHECK(resumed.stats.model_calls == 0);
    CHECK(resumed.stats.resumed == resume.records.size());
    CHECK(resumed.result.zeh == fresh.result.zeh);
    CHECK(resumed.result.censored == fresh.result.censored);
}

TEST_CASE("graphcolor verdicts agree between naive and teacher forcing") {
    for (std::uint64_t seed : {4ull, 17ull}) {
        ToyModel model(tiny(seed));
        auto tmpl = find_template(FamilyId::GraphColoring, "baseline");
        for (int n = 1; n <= 3; ++n)
            for (const auto& inst : enumerate_bn(FamilyId::GraphColoring, n)) {
                Verdict ar = verify_autoregressive(model, inst, tmpl);
                Verdict tf = verify_teacher_forced(model, inst, tmpl);
                CHECK(outcome_is_correct(tf.outcome) == outcome_is_correct(ar.outcome));
            }
    }
}
