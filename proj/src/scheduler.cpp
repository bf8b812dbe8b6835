#include "zeh/scheduler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <map>
#include <sstream>

#include "json.hpp"
#include "zeh/error.hpp"
#include "zeh/tokenizer.hpp"
#include "zeh/trie_engine.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace zeh {

const char* pipeline_tag(Pipeline p) {
    switch (p) {
        case Pipeline::Naive: return "naive";
        case Pipeline::Tf: return "tf";
        case Pipeline::TfLa: return "tf-la";
        case Pipeline::Trie: return "trie";
        case Pipeline::FlashTree: return "flashtree";
    }
    return "?";
}

std::optional<Pipeline> pipeline_from_tag(const std::string& tag) {
    for (Pipeline p : {Pipeline::Naive, Pipeline::Tf, Pipeline::TfLa, Pipeline::Trie,
                       Pipeline::FlashTree})
        if (tag == pipeline_tag(p)) return p;
    return std::nullopt;
}

bool pipeline_uses_lookahead(Pipeline p) {
    return p == Pipeline::TfLa || p == Pipeline::Trie || p == Pipeline::FlashTree;
}

bool pipeline_needs_logits(Pipeline p) {
    return p != Pipeline::Naive;
}

void SweepConfig::validate() const {
    if (max_size < 1) throw ConfigError("max_size must be >= 1");
    if (batch_budget < 1) throw ConfigError("batch_budget must be >= 1");
    if (flash_block < 1) throw ConfigError("flash block size must be >= 1");
}

std::string ZehResult::summary() const {
    std::ostringstream os;
    os << "ZEH=" << zeh;
    if (censored) {
        os << " censored (no failure <= max size " << records_complete_through << ")";
    } else if (limiter) {
        os << " limiter=" << instance_display(limiter->instance) << " (gold " << limiter->gold
           << ", predicted " << limiter->predicted << ")";
    }
    return os.str();
}

const EvalRecord* ResumeIndex::find(const std::string& key) const {
    for (const auto& r : records)
        if (r.instance_key == key) return &r;
    return nullptr;
}

namespace {

std::int64_t now_nanos() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void emit(const ProgressFn& progress, nlohmann::json j) {
    if (progress) progress(j.dump());
}

struct SweepContext {
    const SweepConfig& config;
    const ModelRef& model;
    RecordSink& sink;
    const ProgressFn& progress;
    SweepStats stats;
    std::map<std::string, EvalRecord> resume_map;  // verdicts from prior run
    std::vector<EvalRecord> collected;             // all verdict records of this run
    std::atomic<std::int64_t> next_request_id{1};
    std::optional<KvCache> prompt_prefix;          // trie pipelines
    std::vector<int> prefix_tokens;

    explicit SweepContext(const SweepConfig& c, const ModelRef& m, RecordSink& s,
                          const ProgressFn& p, const ResumeIndex* resume)
        : config(c), model(m), sink(s), progress(p) {
        if (resume) {
            for (const auto& r : resume->records) {
                // Adapter errors are not model verdicts; resuming retries them.
                auto o = outcome_from_tag(r.verdict);
                if (o && *o != Outcome::AdapterError) resume_map[r.instance_key] = r;
            }
        }
    }

    EvalRecord make_record(const Instance& inst, const std::string& gold, const Verdict& v,
                           std::int64_t wall) const {
        EvalRecord r;
        r.run_id = config.run_id;
        r.family = family_tag(config.family);
        r.template_name = config.tmpl.name;
        r.pipeline = pipeline_tag(config.pipeline);
        r.size = inst.size;
        r.instance_key = inst.key;
        r.gold = gold;
        r.predicted = v.predicted;
        r.verdict = outcome_tag(v.outcome);
        r.first_divergence = v.first_divergence;
        r.wall_nanos = wall;
        r.model_tag = config.model_tag;
        return r;
    }

    // Evaluates one instance with the per-instance pipelines (naive / tf).
    Verdict evaluate_single(const Instance& inst) {
        switch (config.pipeline) {
            case Pipeline::Naive:
                if (model.text)
                    return verify_autoregressive(*model.text, inst, config.tmpl,
                                                 next_request_id.fetch_add(1));
                return verify_autoregressive(*model.logit, inst, config.tmpl);
            case Pipeline::Tf:
            case Pipeline::TfLa:
                return verify_teacher_forced(*model.logit, inst, config.tmpl);
            default:
                throw ConfigError("evaluate_single called for a trie pipeline");
        }
    }

    // Parallel per-instance evaluation honoring resume. Results align with
    // `instances`; records are appended in canonical order afterwards.
    std::vector<EvalRecord> evaluate_instances(const std::vector<Instance>& instances) {
        const int n = static_cast<int>(instances.size());
        std::vector<EvalRecord> records(n);
        std::vector<int> todo;
        todo.reserve(n);
        for (int i = 0; i < n; ++i) {
            if (auto it = resume_map.find(instances[i].key); it != resume_map.end()) {
                records[i] = it->second;
                ++stats.resumed;
            } else {
                todo.push_back(i);
            }
        }

        std::atomic<bool> failed{false};
        std::string failure;
#pragma omp parallel for schedule(dynamic) num_threads(zeh_threads())
        for (int t = 0; t < static_cast<int>(todo.size()); ++t) {
            if (failed.load(std::memory_order_relaxed)) continue;
            const int i = todo[t];
            try {
                const auto t0 = now_nanos();
                Verdict v = evaluate_single(instances[i]);
                v.pipeline = pipeline_tag(config.pipeline);
                records[i] = make_record(instances[i], oracle(instances[i]).text, v,
                                         now_nanos() - t0);
            } catch (const std::exception& e) {
                if (!failed.exchange(true)) failure = e.what();
            }
        }
        if (failed.load()) throw ConfigError(failure);
        stats.model_calls += todo.size();
        return records;
    }

    void ensure_prefix() {
        if (prompt_prefix) return;
        prefix_tokens = Tokenizer::encode(config.tmpl.instructions + " ", /*add_bos=*/true);
        prompt_prefix = model.logit->prefill(prefix_tokens);
    }

    // Wave evaluation through the trie engine (trie / flashtree pipelines).
    std::vector<EvalRecord> evaluate_wave_trie(const std::vector<Instance>& wave) {
        const int n = static_cast<int>(wave.size());
        std::vector<EvalRecord> records(n);
        std::vector<int> todo;
        std::vector<InstanceText> texts;
        for (int i = 0; i < n; ++i) {
            if (auto it = resume_map.find(wave[i].key); it != resume_map.end()) {
                records[i] = it->second;
                ++stats.resumed;
            } else {
                todo.push_back(i);
                texts.push_back(prepare_instance(config.tmpl, wave[i]));
            }
        }
        if (todo.empty()) return records;

        ensure_prefix();
        const auto wave_t0 = now_nanos();
        Trie trie = build_trie(make_tf_sequences(texts), {});
        std::vector<float> logits =
            config.pipeline == Pipeline::Trie
                ? tree_attention_dense(*model.logit, trie, &*prompt_prefix, config.dense_cap)
                : tree_attention_flash(*model.logit, trie, config.flash_block, &*prompt_prefix);
        auto outcomes = collect_tf_verdicts(logits, trie, config.family,
                                            model.logit->config().vocab_size);
        const std::int64_t share =
            (now_nanos() - wave_t0) / static_cast<std::int64_t>(todo.size());
        stats.model_calls += todo.size();

        const int prefix_len = static_cast<int>(prefix_tokens.size());
        for (std::size_t s = 0; s < todo.size(); ++s) {
            const Instance& inst = wave[todo[s]];
            const InstanceText& text = texts[s];
            Verdict v;
            v.pipeline = pipeline_tag(config.pipeline);
            switch (outcomes[s].kind) {
                case TfScreenResult::Kind::AllPass:
                    v.outcome = Outcome::Correct;
                    v.predicted = text.gold.text;
                    break;
                case TfScreenResult::Kind::Definitive: {
                    Verdict full = verify_autoregressive(*model.logit, inst, config.tmpl);
                    v.outcome = Outcome::Wrong;
                    v.predicted = full.predicted;
                    v.first_divergence = outcomes[s].divergence;
                    v.first_divergence->position += prefix_len;
                    break;
                }
                case TfScreenResult::Kind::Ambiguous: {
                    Verdict full = verify_autoregressive(*model.logit, inst, config.tmpl);
                    v.outcome = full.outcome == Outcome::Correct
                                    ? Outcome::AmbiguousResolvedCorrect
                                    : Outcome::AmbiguousResolvedWrong;
                    v.predicted = full.predicted;
                    v.first_divergence = outcomes[s].divergence;
                    v.first_divergence->position += prefix_len;
                    break;
                }
            }
            records[todo[s]] = make_record(inst, text.gold.text, v, share);
        }
        return records;
    }

    std::vector<EvalRecord> evaluate_wave(const std::vector<Instance>& wave) {
        if (config.pipeline == Pipeline::Trie || config.pipeline == Pipeline::FlashTree)
            return evaluate_wave_trie(wave);
        return evaluate_instances(wave);
    }

    // Appends records in canonical order, tracking adapter errors. Records
    // satisfied from a prior run are already on disk and are not re-appended.
    void commit(const std::vector<EvalRecord>& records, bool* adapter_error) {
        for (const auto& r : records) {
            if (!resume_map.count(r.instance_key)) {
                sink.append(r);
                auto o = outcome_from_tag(r.verdict);
                if (o && (*o == Outcome::AmbiguousResolvedCorrect ||
                          *o == Outcome::AmbiguousResolvedWrong))
                    ++stats.fallbacks;
            }
            collected.push_back(r);
            if (r.verdict == outcome_tag(Outcome::AdapterError)) *adapter_error = true;
        }
        sink.flush();
    }
};

}  // namespace

RunOutput run_naive(const SweepConfig& config, const ModelRef& model, RecordSink& sink,
                    const ProgressFn& progress, const ResumeIndex* resume) {
    config.validate();
    if (config.pipeline != Pipeline::Naive && config.pipeline != Pipeline::Tf)
        throw ConfigError("run_naive handles pipelines naive|tf only");
    if (pipeline_needs_logits(config.pipeline) && !model.logit)
        throw ConfigError(std::string("pipeline ") + pipeline_tag(config.pipeline) +
                          " requires a logit model");
    if (config.pipeline == Pipeline::Naive && !model.logit && !model.text)
        throw ConfigError("no model supplied");

    SweepContext ctx(config, model, sink, progress, resume);
    for (int n = 1; n <= config.max_size; ++n) {
        emit(progress, {{"event", "size_started"}, {"size", n}});
        auto instances = enumerate_bn(config.family, n, config.limits);
        auto records = ctx.evaluate_instances(instances);
        bool adapter_error = false;
        ctx.commit(records, &adapter_error);
        if (adapter_error)
            throw AdapterFailure("adapter error at size " + std::to_string(n) +
                                 "; partial records preserved");
        int wrong = 0;
        for (const auto& r : records)
            if (auto o = outcome_from_tag(r.verdict); o && outcome_is_wrong(*o)) ++wrong;
        emit(progress, {{"event", "size_completed"}, {"size", n}, {"wrong", wrong}});
        if (wrong > 0) {
            emit(progress, {{"event", "failure_found"}, {"size", n}});
            break;
        }
    }
    return {compute_zeh(ctx.collected, config.family, config.limits), ctx.stats};
}

RunOutput run_lookahead(const SweepConfig& config, const ModelRef& model, RecordSink& sink,
                        const ProgressFn& progress, const ResumeIndex* resume) {
    config.validate();
    if (!pipeline_uses_lookahead(config.pipeline))
        throw ConfigError("run_lookahead handles pipelines tf-la|trie|flashtree only");
    if (!model.logit)
        throw ConfigError(std::string("pipeline ") + pipeline_tag(config.pipeline) +
                          " requires a logit model");

    SweepContext ctx(config, model, sink, progress, resume);

    // Instances stream ascending by size and pack into waves of batch_budget
    // regardless of size boundaries. Sizes are enumerated lazily; once a
    // failure at size m is confirmed, nothing above m is enumerated and
    // already-materialized work above m is cancelled.
    std::deque<Instance> pending;
    int next_size = 1;
    int fail_size = -1;
    for (;;) {
        while (fail_size < 0 && next_size <= config.max_size &&
               pending.size() < static_cast<std::size_t>(config.batch_budget)) {
            auto batch = enumerate_bn(config.family, next_size++, config.limits);
            pending.insert(pending.end(), std::make_move_iterator(batch.begin()),
                           std::make_move_iterator(batch.end()));
        }
        if (fail_size >= 0) {
            // Drop pending work above the confirmed failure.
            std::uint64_t dropped = 0;
            while (!pending.empty() && pending.back().size > fail_size) {
                const Instance& inst = pending.back();
                if (!ctx.resume_map.count(inst.key)) {
                    EvalRecord r;
                    r.run_id = config.run_id;
                    r.family = family_tag(config.family);
                    r.template_name = config.tmpl.name;
                    r.pipeline = pipeline_tag(config.pipeline);
                    r.size = inst.size;
                    r.instance_key = inst.key;
                    r.verdict = "cancelled";
                    r.model_tag = config.model_tag;
                    sink.append(r);
                    ++dropped;
                }
                pending.pop_back();
            }
            if (dropped > 0) {
                sink.flush();
                ctx.stats.cancelled += dropped;
                emit(progress,
                     {{"event", "cancelled"}, {"size_gt", fail_size}, {"count", dropped}});
            }
        }
        if (pending.empty()) break;

        std::vector<Instance> wave;
        while (!pending.empty() &&
               wave.size() < static_cast<std::size_t>(config.batch_budget)) {
            wave.push_back(std::move(pending.front()));
            pending.pop_front();
        }
        ++ctx.stats.waves;
        emit(progress, {{"event", "wave_dispatched"},
                        {"wave", ctx.stats.waves},
                        {"instances", wave.size()},
                        {"size_lo", wave.front().size},
                        {"size_hi", wave.back().size}});
        auto records = ctx.evaluate_wave(wave);
        bool adapter_error = false;
        ctx.commit(records, &adapter_error);
        if (adapter_error) throw AdapterFailure("adapter error; partial records preserved");

        for (const auto& r : records) {
            if (auto o = outcome_from_tag(r.verdict); o && outcome_is_wrong(*o)) {
                if (fail_size < 0 || r.size < fail_size) {
                    fail_size = r.size;
                    emit(progress, {{"event", "failure_found"}, {"size", fail_size}});
                }
            }
        }
    }
    return {compute_zeh(ctx.collected, config.family, config.limits), ctx.stats};
}

ZehResult compute_zeh(const std::vector<EvalRecord>& records, FamilyId family,
                      const EnumLimits& limits) {
    std::map<std::string, const EvalRecord*> by_key;
    int max_size_seen = 0;
    int first_fail = -1;
    for (const auto& r : records) {
        if (!r.is_verdict()) continue;
        auto o = outcome_from_tag(r.verdict);
        if (!o || *o == Outcome::AdapterError) continue;  // not usable evidence
        by_key[r.instance_key] = &r;
        max_size_seen = std::max(max_size_seen, r.size);
        if (outcome_is_wrong(*o) && (first_fail < 0 || r.size < first_fail))
            first_fail = r.size;
    }
    if (by_key.empty()) throw IncompleteRecordsError("no verdict records");

    const int through = first_fail > 0 ? first_fail : max_size_seen;
    std::ostringstream gaps;
    int gap_count = 0;
    for (int n = 1; n <= through; ++n) {
        for (const auto& inst : enumerate_bn(family, n, limits)) {
            if (!by_key.count(inst.key)) {
                ++gap_count;
                if (gap_count <= 10) gaps << ' ' << inst.key;
            }
        }
    }
    if (gap_count > 0)
        throw IncompleteRecordsError("records incomplete through size " +
                                     std::to_string(through) + ": " +
                                     std::to_string(gap_count) + " missing, e.g." + gaps.str());

    ZehResult result;
    if (first_fail < 0) {
        result.zeh = through;
        result.censored = true;
        result.records_complete_through = through;
        return result;
    }
    result.zeh = first_fail - 1;
    result.censored = false;
    result.records_complete_through = through;
    for (const auto& inst : enumerate_bn(family, first_fail, limits)) {
        const EvalRecord* r = by_key[inst.key];
        auto o = outcome_from_tag(r->verdict);
        if (o && outcome_is_wrong(*o)) {
            result.limiter = ZehLimiter{inst, r->gold, r->predicted};
            break;
        }
    }
    return result;
}

}  // namespace zeh
