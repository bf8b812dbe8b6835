#include "zeh/bench.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <sstream>

#include "json.hpp"
#include "zeh/error.hpp"
#include "zeh/kernels.hpp"
#include "zeh/trie_engine.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace zeh {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Verification of the whole suite, no early stop. Returns per-instance
// correctness keyed by instance for the verdict diff.
std::map<std::string, bool> verify_suite(const ToyModel& model, Pipeline pipeline,
                                         const BenchOptions& opt,
                                         const std::vector<Instance>& suite,
                                         const PromptTemplate& tmpl) {
    std::map<std::string, bool> bits;
    if (pipeline == Pipeline::Trie || pipeline == Pipeline::FlashTree) {
        auto prefix_tokens = Tokenizer::encode(tmpl.instructions + " ", /*add_bos=*/true);
        KvCache prefix = model.prefill(prefix_tokens);
        for (std::size_t start = 0; start < suite.size();
             start += static_cast<std::size_t>(opt.batch_budget)) {
            const std::size_t end =
                std::min(suite.size(), start + static_cast<std::size_t>(opt.batch_budget));
            std::vector<InstanceText> texts;
            texts.reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                texts.push_back(prepare_instance(tmpl, suite[i]));
            Trie trie = build_trie(make_tf_sequences(texts), {});
            std::vector<float> logits =
                pipeline == Pipeline::Trie
                    ? tree_attention_dense(model, trie, &prefix, opt.dense_cap)
                    : tree_attention_flash(model, trie, opt.flash_block, &prefix);
            auto outcomes =
                collect_tf_verdicts(logits, trie, opt.family, model.config().vocab_size);
            for (std::size_t s = 0; s < outcomes.size(); ++s) {
                const Instance& inst = suite[start + s];
                bool correct;
                switch (outcomes[s].kind) {
                    case TfScreenResult::Kind::AllPass: correct = true; break;
                    case TfScreenResult::Kind::Definitive: correct = false; break;
                    default:
                        correct = outcome_is_correct(
                            verify_autoregressive(model, inst, tmpl).outcome);
                }
                bits[inst.key] = correct;
            }
        }
        return bits;
    }

    std::vector<char> correct(suite.size(), 0);
    const auto count = static_cast<std::int64_t>(suite.size());
#pragma omp parallel for schedule(dynamic) num_threads(zeh_threads())
    for (std::int64_t i = 0; i < count; ++i) {
        bool bit;
        if (pipeline == Pipeline::Naive) {
            bit = outcome_is_correct(verify_autoregressive(model, suite[i], tmpl).outcome);
        } else {
            // Verification needs the correctness bit only: a definitive
            // mismatch settles it, ambiguity costs one fallback decode.
            TfScreenResult screen = teacher_forced_screen(model, suite[i], tmpl);
            switch (screen.kind) {
                case TfScreenResult::Kind::AllPass: bit = true; break;
                case TfScreenResult::Kind::Definitive: bit = false; break;
                default:
                    bit = outcome_is_correct(
                        verify_autoregressive(model, suite[i], tmpl).outcome);
            }
        }
        correct[i] = bit ? 1 : 0;
    }
    for (std::size_t i = 0; i < suite.size(); ++i) bits[suite[i].key] = correct[i] != 0;
    return bits;
}

ZehResult run_sweep(const ToyModel& model, Pipeline pipeline, const BenchOptions& opt,
                    const PromptTemplate& tmpl) {
    SweepConfig cfg;
    cfg.family = opt.family;
    cfg.tmpl = tmpl;
    cfg.pipeline = pipeline;
    cfg.max_size = opt.suite_max_size;
    cfg.batch_budget = opt.batch_budget;
    cfg.flash_block = opt.flash_block;
    cfg.dense_cap = opt.dense_cap;
    cfg.limits = opt.limits;
    cfg.run_id = "bench";
    cfg.model_tag = model.config().tag();
    ModelRef ref;
    ref.logit = &model;
    VectorSink sink;  // records buffered in memory: timing excludes store I/O
    return pipeline_uses_lookahead(pipeline) ? run_lookahead(cfg, ref, sink).result
                                             : run_naive(cfg, ref, sink).result;
}

const char* short_label(Pipeline p) {
    switch (p) {
        case Pipeline::Naive: return "naive";
        case Pipeline::Tf: return "tf";
        case Pipeline::TfLa: return "tf-la";
        case Pipeline::Trie: return "trie";
        case Pipeline::FlashTree: return "flashtree";
    }
    return "?";
}

}  // namespace

BenchReport run_bench(const BenchOptions& opt) {
    if (opt.pipelines.empty()) throw ConfigError("bench needs at least one pipeline");
    if (opt.reps < 1 || opt.warmup < 0) throw ConfigError("bad bench warmup/reps");
    ToyModel model(opt.model);
    PromptTemplate tmpl = find_template(opt.family, opt.template_name);

    std::vector<Instance> suite;
    for (int n = 1; n <= opt.suite_max_size; ++n) {
        auto batch = enumerate_bn(opt.family, n, opt.limits);
        suite.insert(suite.end(), std::make_move_iterator(batch.begin()),
                     std::make_move_iterator(batch.end()));
    }

    BenchReport report;
    report.suite_instances = suite.size();

    // Verdict-set diff across pipelines comes before any timing is reported.
    std::map<std::string, bool> reference_bits;
    report.verdicts_match = true;
    for (std::size_t p = 0; p < opt.pipelines.size(); ++p) {
        model.reset_stats();
        auto bits = verify_suite(model, opt.pipelines[p], opt, suite, tmpl);
        if (opt.pipelines[p] == Pipeline::Trie) report.dense_scores = model.stats().dense_scores;
        if (opt.pipelines[p] == Pipeline::FlashTree)
            report.flash_scores = model.stats().flash_scores;
        if (p == 0) {
            reference_bits = std::move(bits);
            continue;
        }
        for (const auto& [key, bit] : bits) {
            if (reference_bits.at(key) != bit) {
                report.verdicts_match = false;
                if (report.first_mismatch.empty()) report.first_mismatch = key;
            }
        }
    }
    if (!report.verdicts_match)
        throw ConfigError("bench verdict sets differ across pipelines, first at " +
                          report.first_mismatch);

    // Float reordering between the kernels can flip individual argmaxes even
    // when every verdict agrees; measure the rate for the report.
    bool has_trie = false, has_flash = false;
    for (Pipeline p : opt.pipelines) {
        has_trie |= p == Pipeline::Trie;
        has_flash |= p == Pipeline::FlashTree;
    }
    if (has_trie && has_flash) {
        auto prefix_tokens = Tokenizer::encode(tmpl.instructions + " ", /*add_bos=*/true);
        KvCache prefix = model.prefill(prefix_tokens);
        const int vocab = model.config().vocab_size;
        for (std::size_t start = 0; start < suite.size();
             start += static_cast<std::size_t>(opt.batch_budget)) {
            const std::size_t end =
                std::min(suite.size(), start + static_cast<std::size_t>(opt.batch_budget));
            std::vector<InstanceText> texts;
            for (std::size_t i = start; i < end; ++i)
                texts.push_back(prepare_instance(tmpl, suite[i]));
            Trie trie = build_trie(make_tf_sequences(texts), {});
            auto dense = tree_attention_dense(model, trie, &prefix, opt.dense_cap);
            auto flash = tree_attention_flash(model, trie, opt.flash_block, &prefix);
            for (const auto& checks : trie.seq_checks) {
                for (const auto& c : checks) {
                    const std::size_t row = static_cast<std::size_t>(c.node - 1) * vocab;
                    ++report.checked_positions;
                    if (ToyModel::argmax_row(dense.data() + row, vocab) !=
                        ToyModel::argmax_row(flash.data() + row, vocab))
                        ++report.flip_positions;
                }
            }
        }
    }

    // End-to-end results must agree before their timings mean anything.
    bool have_zeh = false;
    for (Pipeline p : opt.pipelines) {
        ZehResult r = run_sweep(model, p, opt, tmpl);
        if (!have_zeh) {
            report.zeh = r;
            have_zeh = true;
        } else if (r.zeh != report.zeh.zeh || r.censored != report.zeh.censored) {
            throw ConfigError("bench ZEH results differ across pipelines");
        }
    }

    for (Pipeline p : opt.pipelines) {
        BenchRow row;
        row.pipeline = p;
        std::vector<double> verify_times, e2e_times;
        for (int i = 0; i < opt.warmup; ++i) verify_suite(model, p, opt, suite, tmpl);
        for (int i = 0; i < opt.reps; ++i) {
            auto t0 = Clock::now();
            verify_suite(model, p, opt, suite, tmpl);
            verify_times.push_back(ms_since(t0));
        }
        for (int i = 0; i < opt.warmup; ++i) run_sweep(model, p, opt, tmpl);
        for (int i = 0; i < opt.reps; ++i) {
            auto t0 = Clock::now();
            run_sweep(model, p, opt, tmpl);
            e2e_times.push_back(ms_since(t0));
        }
        row.verify_ms = median(verify_times);
        row.e2e_ms = median(e2e_times);
        report.rows.push_back(row);
    }
    return report;
}

std::string BenchReport::format() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);

    double tf_base = rows.front().verify_ms;
    for (const auto& r : rows)
        if (r.pipeline == Pipeline::Tf) {
            tf_base = r.verify_ms;
            break;
        }
    os << "Verification runtime (ms) over " << suite_instances
       << " tasks; parentheses show speedup relative to TF\n";
    for (const auto& r : rows) {
        os.precision(1);
        os << "  " << short_label(r.pipeline) << "\t" << r.verify_ms;
        os.precision(2);
        os << " (" << tf_base / r.verify_ms << "x)\n";
    }

    double naive_base = rows.front().e2e_ms;
    for (const auto& r : rows)
        if (r.pipeline == Pipeline::Naive) {
            naive_base = r.e2e_ms;
            break;
        }
    os << "End-to-end ZEH runtime (ms), fallback time included; parentheses show speedup "
          "relative to naive autoregression\n";
    for (const auto& r : rows) {
        os.precision(1);
        os << "  " << short_label(r.pipeline) << "\t" << r.e2e_ms;
        os.precision(2);
        os << " (" << naive_base / r.e2e_ms << "x)\n";
    }

    os << "attention score evaluations: dense=" << dense_scores << " flash=" << flash_scores;
    if (dense_scores > 0 && flash_scores > 0)
        os << (flash_scores <= dense_scores ? " (flash <= dense)" : " (flash EXCEEDS dense)");
    os << "\n";
    if (checked_positions > 0) {
        os.precision(4);
        os << "dense/flash argmax flips: " << flip_positions << " of " << checked_positions
           << " check positions ("
           << 100.0 * static_cast<double>(flip_positions) /
                  static_cast<double>(checked_positions)
           << "%)\n";
    }
    os << "ZEH: " << zeh.summary() << "\n";
    return os.str();
}

std::string BenchReport::to_json() const {
    nlohmann::json j;
    j["suite_instances"] = suite_instances;
    j["dense_scores"] = dense_scores;
    j["flash_scores"] = flash_scores;
    j["flip_positions"] = flip_positions;
    j["checked_positions"] = checked_positions;
    j["verdicts_match"] = verdicts_match;
    j["zeh"] = zeh.zeh;
    j["censored"] = zeh.censored;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
        j["rows"].push_back({{"pipeline", pipeline_tag(r.pipeline)},
                             {"verify_ms", r.verify_ms},
                             {"e2e_ms", r.e2e_ms}});
    return j.dump(2);
}

}  // namespace zeh
