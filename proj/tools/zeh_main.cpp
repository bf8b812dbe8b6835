// zeh: exhaustive zero-error-horizon evaluation for sequence models on
// parameterized formal tasks. Subcommands: eval, analyze, bench, oracle.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "zeh/adapter_model.hpp"
#include "zeh/analysis.hpp"
#include "zeh/bench.hpp"
#include "zeh/error.hpp"
#include "zeh/kernels.hpp"
#include "zeh/scheduler.hpp"
#include "zeh/scripted_model.hpp"
#include "zeh/store.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace zeh;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitAdapter = 3;
constexpr int kExitIncomplete = 4;

struct ModelSpec {
    std::string raw;
    std::unique_ptr<ToyModel> toy;
    std::unique_ptr<ScriptedModel> scripted;
    std::unique_ptr<AdapterModel> adapter;
    std::string tag;

    ModelRef ref() {
        ModelRef r;
        if (toy) r.logit = toy.get();
        if (scripted) r.text = scripted.get();
        if (adapter) r.text = adapter.get();
        return r;
    }
};

// --model grammar: toy:seed=N[,layers=..,heads=..,d_model=..,d_ff=..]
//                  toy:config=FILE | scripted:[faults=FILE] | adapter:cmd=...
ModelSpec parse_model(const std::string& spec, int adapter_timeout_s) {
    ModelSpec out;
    out.raw = spec;
    auto colon = spec.find(':');
    std::string kind = spec.substr(0, colon == std::string::npos ? spec.size() : colon);
    std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "toy") {
        ToyModelConfig cfg;
        for (std::size_t pos = 0; pos < rest.size();) {
            auto comma = rest.find(',', pos);
            std::string part =
                rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            auto eq = part.find('=');
            if (eq == std::string::npos)
                throw ConfigError("toy model option '" + part + "' is not key=value");
            std::string key = part.substr(0, eq), val = part.substr(eq + 1);
            if (key == "config") cfg = parse_toy_config_file(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "layers") cfg.layers = std::stoi(val);
            else if (key == "heads") cfg.heads = std::stoi(val);
            else if (key == "d_model") cfg.d_model = std::stoi(val);
            else if (key == "d_ff") cfg.d_ff = std::stoi(val);
            else if (key == "max_depth") cfg.max_depth = std::stoi(val);
            else throw ConfigError("unknown toy model option '" + key + "'");
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        cfg.validate();
        out.toy = std::make_unique<ToyModel>(cfg);
        out.tag = cfg.tag();
    } else if (kind == "scripted") {
        if (rest.rfind("faults=", 0) == 0)
            out.scripted =
                std::make_unique<ScriptedModel>(ScriptedModel::load_faults_file(rest.substr(7)));
        else if (rest.empty())
            out.scripted = std::make_unique<ScriptedModel>();
        else
            throw ConfigError("scripted model takes only faults=FILE");
        out.tag = spec;
    } else if (kind == "adapter") {
        if (rest.rfind("cmd=", 0) != 0)
            throw ConfigError("adapter model needs cmd=<shell command>");
        out.adapter = std::make_unique<AdapterModel>(
            rest.substr(4), std::chrono::seconds(adapter_timeout_s));
        out.tag = "adapter";
    } else {
        throw ConfigError("unknown model kind '" + kind + "' (toy|scripted|adapter)");
    }
    return out;
}

FamilyId parse_family(const std::string& tag) {
    auto f = family_from_tag(tag);
    if (!f) throw ConfigError("unknown family '" + tag + "' (mult|parity|parens|graphcolor)");
    return *f;
}

std::string default_run_id(const SweepConfig& cfg) {
    return std::string(family_tag(cfg.family)) + "-" + cfg.tmpl.name + "-" +
           pipeline_tag(cfg.pipeline) + "-" + cfg.model_tag + "-s" +
           std::to_string(cfg.max_size);
}

int cmd_eval(const std::string& family_tag_s, const std::string& template_name,
             const std::string& templates_file, const std::string& model_spec,
             const std::string& pipeline_tag_s, int max_size, int batch_budget,
             const std::string& out_path, bool resume, std::string run_id,
             const std::string& model_tag_flag, int adapter_timeout, int graphcolor_cap,
             bool quiet) {
    SweepConfig cfg;
    cfg.family = parse_family(family_tag_s);
    cfg.tmpl = find_template_with_file(cfg.family, template_name, templates_file);
    auto pipeline = pipeline_from_tag(pipeline_tag_s);
    if (!pipeline)
        throw ConfigError("unknown pipeline '" + pipeline_tag_s +
                          "' (naive|tf|tf-la|trie|flashtree)");
    cfg.pipeline = *pipeline;
    cfg.max_size = max_size;
    cfg.batch_budget = batch_budget;
    cfg.limits.graphcolor_max_n = graphcolor_cap;

    ModelSpec model = parse_model(model_spec, adapter_timeout);
    if (pipeline_needs_logits(cfg.pipeline) && !model.toy)
        throw ConfigError("pipeline " + pipeline_tag_s +
                          " needs token-level logits; text models (scripted/adapter) support "
                          "only the naive pipeline");
    cfg.model_tag = model_tag_flag.empty() ? model.tag : model_tag_flag;
    cfg.run_id = run_id.empty() ? default_run_id(cfg) : run_id;

    ResumeIndex resume_index;
    const ResumeIndex* resume_ptr = nullptr;
    if (resume) {
        std::ifstream probe(out_path);
        if (probe.good()) {
            resume_index.records =
                RecordStore::verdicts_for_run(RecordStore::load(out_path), cfg.run_id);
            resume_ptr = &resume_index;
        }
    }

    RecordStore store(out_path);
    ProgressFn progress;
    if (!quiet)
        progress = [](const std::string& line) { std::cerr << line << "\n"; };

    RunOutput out = pipeline_uses_lookahead(cfg.pipeline)
                        ? run_lookahead(cfg, model.ref(), store, progress, resume_ptr)
                        : run_naive(cfg, model.ref(), store, progress, resume_ptr);
    std::cout << out.result.summary() << "\n";
    if (!quiet)
        std::cerr << "model_calls=" << out.stats.model_calls << " fallbacks="
                  << out.stats.fallbacks << " waves=" << out.stats.waves << " cancelled="
                  << out.stats.cancelled << " resumed=" << out.stats.resumed << "\n";
    return kExitOk;
}

std::map<std::string, std::int64_t> load_count_tsv(const std::string& path) {
    std::map<std::string, std::int64_t> out;
    for (const auto& [k, v] : load_tsv(path)) out[k] = std::stoll(v);
    return out;
}

int cmd_analyze(const std::string& records_path, std::vector<std::string> reports,
                const std::string& freqs_path, const std::string& sizes_path,
                const std::string& json_out) {
    auto all = RecordStore::load(records_path);
    if (all.empty()) throw IncompleteRecordsError("no records in " + records_path);

    std::set<std::string> run_ids;
    std::map<std::string, std::vector<EvalRecord>> by_run;
    for (const auto& r : all) run_ids.insert(r.run_id);
    for (const auto& id : run_ids) by_run[id] = RecordStore::verdicts_for_run(all, id);

    nlohmann::json machine;
    auto want = [&](const std::string& name) {
        return std::find(reports.begin(), reports.end(), name) != reports.end();
    };

    if (want("zeh") || want("limiter")) {
        for (const auto& [run, records] : by_run) {
            FamilyId family = parse_family(records.front().family);
            ZehResult res = compute_zeh(records, family);
            if (want("zeh")) {
                std::cout << run << ": " << res.summary() << "\n";
                machine["zeh"][run] = {{"zeh", res.zeh}, {"censored", res.censored}};
            }
            if (want("limiter")) {
                std::cout << extract_limiter_report(res, family) << "\n";
                machine["limiter"][run] = extract_limiter_report(res, family);
            }
        }
    }

    if (want("structured")) {
        std::map<std::string, std::vector<EvalRecord>> by_model;
        for (const auto& r : all)
            if (r.is_verdict() && r.family == "mult") by_model[r.model_tag].push_back(r);
        std::cout << "model\ttotal_errors\tstructured\trate\tunparseable\n";
        for (const auto& [tag, records] : by_model) {
            StructuredReport rep = structured_error_report(records);
            std::cout << tag << "\t" << rep.total_errors << "\t" << rep.structured_errors
                      << "\t" << rep.rate_display << "\t" << rep.unparseable << "\n";
            machine["structured"][tag] = {{"total", rep.total_errors},
                                          {"structured", rep.structured_errors},
                                          {"unparseable", rep.unparseable}};
        }
    }

    if (want("carry")) {
        if (sizes_path.empty())
            throw ConfigError("carry report needs --sizes FILE (model_tag<TAB>param_count)");
        auto sizes = load_count_tsv(sizes_path);
        std::vector<CarryFeatures> rows;
        for (const auto& r : all) {
            if (!r.is_verdict() || r.family != "mult") continue;
            auto o = outcome_from_tag(r.verdict);
            if (!o || *o == Outcome::AdapterError) continue;
            auto it = sizes.find(r.model_tag);
            if (it == sizes.end())
                throw ConfigError("no param count for model_tag '" + r.model_tag + "'");
            Instance inst = parse_instance_key(r.instance_key);
            const auto& p = std::get<MultPayload>(inst.payload);
            CarryFeatures f;
            f.carry = has_carry(static_cast<std::int64_t>(p.a),
                                static_cast<std::int64_t>(p.b))
                          ? 1.0
                          : 0.0;
            f.log10_size = std::log10(static_cast<double>(it->second));
            f.interaction = f.carry * f.log10_size;
            f.correct = outcome_is_correct(*o) ? 1.0 : 0.0;
            rows.push_back(f);
        }
        FitResult fit = fit_carry_logistic(rows);
        const char* names[] = {"Intercept", "Carry Presence", "Model Size (log10)",
                               "Interaction"};
        std::cout << "term\tcoefficient\tstd_error\tz\tp\n";
        for (int j = 0; j < 4; ++j) {
            std::cout << names[j] << "\t" << fit.coefficients[j] << "\t" << fit.std_errors[j]
                      << "\t" << fit.z_values[j] << "\t" << fit.p_values[j] << "\n";
            machine["carry"][names[j]] = {{"coefficient", fit.coefficients[j]},
                                          {"std_error", fit.std_errors[j]},
                                          {"p", fit.p_values[j]}};
        }
    }

    if (want("spearman")) {
        if (freqs_path.empty())
            throw ConfigError("spearman report needs --freqs FILE (instance_key<TAB>count)");
        auto freqs = load_count_tsv(freqs_path);
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_model;
        for (const auto& r : all) {
            if (!r.is_verdict()) continue;
            auto o = outcome_from_tag(r.verdict);
            if (!o || *o == Outcome::AdapterError) continue;
            auto it = freqs.find(r.instance_key);
            double f = it == freqs.end() ? 0.0 : static_cast<double>(it->second);
            by_model[r.model_tag].first.push_back(f);
            by_model[r.model_tag].second.push_back(outcome_is_correct(*o) ? 1.0 : 0.0);
        }
        std::cout << "model\tspearman_rho\n";
        for (const auto& [tag, vecs] : by_model) {
            double rho = spearman_rho(vecs.first, vecs.second);
            std::cout << tag << "\t" << rho << "\n";
            machine["spearman"][tag] = rho;
        }
    }

    if (want("stability")) {
        // Group by model tag, one ZEH per template.
        std::map<std::string, std::map<std::string, std::vector<EvalRecord>>> groups;
        for (const auto& [run, records] : by_run)
            if (!records.empty())
                groups[records.front().model_tag][records.front().template_name] = records;
        std::cout << "model\tmean\tstd\tmin\tper-prompt\n";
        for (const auto& [tag, by_template] : groups) {
            std::vector<int> zehs;
            std::string detail;
            for (const auto& [tname, records] : by_template) {
                ZehResult res = compute_zeh(records, parse_family(records.front().family));
                zehs.push_back(res.zeh);
                detail += tname + "=" + std::to_string(res.zeh) + " ";
            }
            StabilityRow row = prompt_stability(zehs);
            std::cout << tag << "\t" << row.display << "\tmin " << row.min_zeh << "\t" << detail
                      << "\n";
            machine["stability"][tag] = {{"mean", row.mean},
                                         {"std", row.sample_std},
                                         {"min", row.min_zeh}};
        }
    }

    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw ConfigError("cannot write " + json_out);
        out << machine.dump(2) << "\n";
    }
    return kExitOk;
}

int cmd_bench(const std::string& pipelines_csv, const std::string& family_tag_s,
              int suite_max_size, int batch_budget, int warmup, int reps,
              const std::string& model_spec, int flash_block, const std::string& json_out) {
    BenchOptions opt;
    opt.pipelines.clear();
    std::string csv = pipelines_csv;
    for (std::size_t pos = 0; pos < csv.size();) {
        auto comma = csv.find(',', pos);
        std::string tag =
            csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        auto p = pipeline_from_tag(tag);
        if (!p) throw ConfigError("unknown pipeline '" + tag + "' in --pipelines");
        opt.pipelines.push_back(*p);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    opt.family = parse_family(family_tag_s);
    opt.suite_max_size = suite_max_size;
    opt.batch_budget = batch_budget;
    opt.warmup = warmup;
    opt.reps = reps;
    opt.flash_block = flash_block;

    ModelSpec model = parse_model(model_spec, /*adapter_timeout_s=*/60);
    if (!model.toy)
        throw ConfigError("bench timing requires a logit model (toy:...); text models have no "
                          "token-level pipelines to compare");
    opt.model = model.toy->config();

    BenchReport report = run_bench(opt);
    std::cout << report.format();
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw ConfigError("cannot write " + json_out);
        out << report.to_json() << "\n";
    }
    return kExitOk;
}

int cmd_oracle(const std::string& family_tag_s, const std::string& key) {
    FamilyId family = parse_family(family_tag_s);
    Instance inst = parse_instance_key(key);
    if (inst.family != family)
        throw ConfigError("instance key '" + key + "' does not belong to family " +
                          family_tag_s);
    std::cout << oracle(inst).text << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("ZEH_THREADS")) {
#ifdef _OPENMP
        int v = std::atoi(env);
        if (v >= 1) omp_set_num_threads(v);
#endif
        (void)env;
    }

    CLI::App app{"Zero-error-horizon evaluation engine"};
    app.require_subcommand(1);

    // eval
    std::string family, template_name = "baseline", templates_file, model_spec, pipeline =
        "naive", out_path = "records.jsonl", run_id, model_tag;
    int max_size = 8, batch_budget = 256, adapter_timeout = 60, graphcolor_cap = 7;
    bool resume = false, quiet = false;
    auto* eval = app.add_subcommand("eval", "run an exhaustive ZEH sweep");
    eval->add_option("--family", family, "mult|parity|parens|graphcolor")->required();
    eval->add_option("--template", template_name, "prompt template name");
    eval->add_option("--templates", templates_file, "template config file (JSON array)");
    eval->add_option("--model", model_spec, "toy:seed=N | scripted:faults=FILE | adapter:cmd=...")
        ->required();
    eval->add_option("--pipeline", pipeline, "naive|tf|tf-la|trie|flashtree");
    eval->add_option("--max-size", max_size, "largest instance size to sweep");
    eval->add_option("--batch-budget", batch_budget, "instances per wave (look-ahead)");
    eval->add_option("--out", out_path, "records JSONL path");
    eval->add_flag("--resume", resume, "skip instances already recorded for this run id");
    eval->add_option("--run-id", run_id, "record run id (defaults to a config slug)");
    eval->add_option("--model-tag", model_tag, "model tag stored in records");
    eval->add_option("--adapter-timeout", adapter_timeout, "adapter reply timeout, seconds");
    eval->add_option("--graphcolor-cap", graphcolor_cap, "graph enumeration hard cap on n");
    eval->add_flag("--quiet", quiet, "suppress progress events on stderr");

    // analyze
    std::string records_path, freqs_path, sizes_path, json_out;
    std::vector<std::string> reports;
    auto* analyze = app.add_subcommand("analyze", "reports over stored records");
    analyze->add_option("--records", records_path, "records JSONL path")->required();
    analyze->add_option("--report", reports,
                        "subset of zeh,limiter,structured,carry,spearman,stability")
        ->required()
        ->delimiter(',');
    analyze->add_option("--freqs", freqs_path, "frequency TSV (instance_key<TAB>count)");
    analyze->add_option("--sizes", sizes_path, "model sizes TSV (model_tag<TAB>param_count)");
    analyze->add_option("--json", json_out, "write machine-readable JSON here");

    // bench
    std::string bench_pipelines = "naive,tf,tf-la,trie,flashtree", bench_family = "mult",
                bench_model = "toy:seed=42,layers=1,heads=2,d_model=16,d_ff=32",
                bench_json;
    int suite_max_size = 99, bench_budget = 128, warmup = 3, reps = 5, flash_block = 64;
    auto* bench = app.add_subcommand("bench", "pipeline runtime comparison");
    bench->add_option("--pipelines", bench_pipelines, "comma-separated pipeline list");
    bench->add_option("--family", bench_family, "task family");
    bench->add_option("--suite-max-size", suite_max_size, "suite covers sizes 1..N");
    bench->add_option("--batch-budget", bench_budget, "instances per wave");
    bench->add_option("--warmup", warmup, "untimed warmup iterations");
    bench->add_option("--reps", reps, "timing repetitions (median reported)");
    bench->add_option("--model", bench_model, "toy model spec");
    bench->add_option("--flash-block", flash_block, "flashtree key block size");
    bench->add_option("--json", bench_json, "write machine-readable JSON here");

    // oracle
    std::string oracle_family, oracle_key;
    auto* orc = app.add_subcommand("oracle", "print the gold answer for one instance");
    orc->add_option("--family", oracle_family, "task family")->required();
    orc->add_option("--instance", oracle_key, "instance key")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (eval->parsed())
            return cmd_eval(family, template_name, templates_file, model_spec, pipeline,
                            max_size, batch_budget, out_path, resume, run_id, model_tag,
                            adapter_timeout, graphcolor_cap, quiet);
        if (analyze->parsed())
            return cmd_analyze(records_path, reports, freqs_path, sizes_path, json_out);
        if (bench->parsed())
            return cmd_bench(bench_pipelines, bench_family, suite_max_size, bench_budget,
                             warmup, reps, bench_model, flash_block, bench_json);
        if (orc->parsed()) return cmd_oracle(oracle_family, oracle_key);
    } catch (const AdapterFailure& e) {
        std::cerr << "adapter failure: " << e.what() << "\n";
        return kExitAdapter;
    } catch (const IncompleteRecordsError& e) {
        std::cerr << "incomplete records: " << e.what() << "\n";
        return kExitIncomplete;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
