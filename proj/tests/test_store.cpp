#include <cstdio>
#include <fstream>
#include <map>

#include "doctest.h"
#include "zeh/error.hpp"
#include "zeh/scheduler.hpp"
#include "zeh/scripted_model.hpp"
#include "zeh/store.hpp"

using namespace zeh;

namespace {

EvalRecord sample_record(const std::string& key, const std::string& verdict) {
    EvalRecord r;
    r.run_id = "run1";
    r.family = "parity";
    r.template_name = "baseline";
    r.pipeline = "naive";
    r.size = 3;
    r.instance_key = key;
    r.gold = "0";
    r.predicted = "1";
    r.verdict = verdict;
    r.first_divergence = Divergence{12, "0", "1"};
    r.wall_nanos = 12345;
    r.model_tag = "scripted";
    return r;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) { std::remove(path.c_str()); }
    ~TempFile() { std::remove(path.c_str()); }
};

bool records_equal_modulo_wall(const EvalRecord& a, const EvalRecord& b) {
    return a.run_id == b.run_id && a.family == b.family && a.template_name == b.template_name &&
           a.size == b.size && a.instance_key == b.instance_key && a.gold == b.gold &&
           a.predicted == b.predicted && a.verdict == b.verdict && a.model_tag == b.model_tag;
}

}  // namespace

TEST_CASE("record round-trips through JSON field-identically") {
    EvalRecord r = sample_record("parity:110", "wrong");
    EvalRecord back = record_from_json(record_to_json(r));
    CHECK(back.run_id == r.run_id);
    CHECK(back.family == r.family);
    CHECK(back.template_name == r.template_name);
    CHECK(back.pipeline == r.pipeline);
    CHECK(back.size == r.size);
    CHECK(back.instance_key == r.instance_key);
    CHECK(back.gold == r.gold);
    CHECK(back.predicted == r.predicted);
    CHECK(back.verdict == r.verdict);
    CHECK(back.wall_nanos == r.wall_nanos);
    CHECK(back.model_tag == r.model_tag);
    REQUIRE(back.first_divergence.has_value());
    CHECK(back.first_divergence->position == 12);
    CHECK(back.first_divergence->gold_token == "0");
    CHECK(back.first_divergence->pred_token == "1");

    EvalRecord no_div = sample_record("parity:111", "correct");
    no_div.first_divergence.reset();
    CHECK_FALSE(record_from_json(record_to_json(no_div)).first_divergence.has_value());
}

TEST_CASE("store enforces verdict uniqueness per (run_id, instance_key)") {
    TempFile tmp("store_unique_test.jsonl");
    RecordStore store(tmp.path);
    store.append(sample_record("parity:110", "wrong"));
    CHECK_THROWS_AS(store.append(sample_record("parity:110", "correct")), ConfigError);
    // a different run id is fine
    EvalRecord other = sample_record("parity:110", "correct");
    other.run_id = "run2";
    CHECK_NOTHROW(store.append(other));
    // cancelled markers are placeholders, not verdicts
    CHECK_NOTHROW(store.append(sample_record("parity:000", "cancelled")));
}

TEST_CASE("load tolerates a truncated final line only") {
    TempFile tmp("store_trunc_test.jsonl");
    {
        std::ofstream out(tmp.path);
        out << record_to_json(sample_record("parity:110", "wrong")) << "\n";
        out << R"({"run_id":"run1","family":"par)";  // crash remnant, no newline
    }
    auto records = RecordStore::load(tmp.path);
    CHECK(records.size() == 1);

    TempFile tmp2("store_malformed_test.jsonl");
    {
        std::ofstream out(tmp2.path);
        out << "not json\n";
        out << record_to_json(sample_record("parity:110", "wrong")) << "\n";
    }
    CHECK_THROWS_AS(RecordStore::load(tmp2.path), ConfigError);
}

TEST_CASE("verdicts_for_run keeps the latest record per key and drops cancelled") {
    std::vector<EvalRecord> all;
    all.push_back(sample_record("parity:110", "cancelled"));
    all.push_back(sample_record("parity:110", "wrong"));  // supersedes the marker
    all.push_back(sample_record("parity:111", "cancelled"));
    EvalRecord other_run = sample_record("parity:000", "correct");
    other_run.run_id = "run2";
    all.push_back(other_run);

    auto run1 = RecordStore::verdicts_for_run(all, "run1");
    REQUIRE(run1.size() == 1);
    CHECK(run1[0].instance_key == "parity:110");
    CHECK(run1[0].verdict == "wrong");
}

TEST_CASE("interrupted run plus resume equals an uninterrupted run") {
    ScriptedModel model(std::map<std::string, std::string>{{"parity:1100", "7"}});
    SweepConfig cfg;
    cfg.family = FamilyId::Parity;
    cfg.tmpl = find_template(FamilyId::Parity, "baseline");
    cfg.pipeline = Pipeline::Naive;
    cfg.max_size = 5;
    cfg.run_id = "resume-test";
    cfg.model_tag = "scripted";
    ModelRef ref;
    ref.text = &model;

    VectorSink fresh;
    ZehResult fresh_result = run_naive(cfg, ref, fresh).result;

    for (std::size_t cut : {std::size_t(1), std::size_t(7), std::size_t(20)}) {
        // Interruption: only the first `cut` records made it to disk.
        ResumeIndex partial;
        partial.records.assign(fresh.records.begin(),
                               fresh.records.begin() +
                                   static_cast<std::ptrdiff_t>(
                                       std::min(cut, fresh.records.size())));
        VectorSink resumed;
        ZehResult resumed_result = run_naive(cfg, ref, resumed, {}, &partial).result;

        CHECK(resumed_result.zeh == fresh_result.zeh);
        CHECK(resumed_result.censored == fresh_result.censored);
        CHECK(resumed_result.limiter->instance.key == fresh_result.limiter->instance.key);

        // Record sets agree modulo wall_nanos: resumed-new plus the partial
        // prefix equals the fresh set.
        std::map<std::string, EvalRecord> merged;
        for (const auto& r : partial.records) merged[r.instance_key] = r;
        for (const auto& r : resumed.records) merged[r.instance_key] = r;
        REQUIRE(merged.size() == fresh.records.size());
        for (const auto& r : fresh.records) {
            REQUIRE(merged.count(r.instance_key));
            CHECK(records_equal_modulo_wall(merged[r.instance_key], r));
        }
    }
}

TEST_CASE("TSV loader") {
    TempFile tmp("store_tsv_test.tsv");
    {
        std::ofstream out(tmp.path);
        out << "mult:1x1\t42\n# comment\nmult:2x2\t7\n";
    }
    auto rows = load_tsv(tmp.path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].first == "mult:1x1");
    CHECK(rows[0].second == "42");
    CHECK_THROWS_AS(load_tsv("does_not_exist.tsv"), ConfigError);
}

TEST_CASE("appending after a crash remnant starts at a record boundary") {
    TempFile tmp("store_append_after_crash.jsonl");
    {
        std::ofstream out(tmp.path);
        out << record_to_json(sample_record("parity:110", "wrong")) << "\n";
        out << R"({"run_id":"run1","par)";  // partial line, no newline
    }
    {
        RecordStore store(tmp.path);
        store.append(sample_record("parity:111", "correct"));
        store.flush();
    }
    auto records = RecordStore::load(tmp.path);
    REQUIRE(records.size() == 2);
    CHECK(records[0].instance_key == "parity:110");
    CHECK(records[1].instance_key == "parity:111");
}
