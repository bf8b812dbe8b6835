#include "zeh/store.hpp"

#include <filesystem>
#include <map>

#include "json.hpp"
#include "zeh/error.hpp"

namespace zeh {

std::string record_to_json(const EvalRecord& r) {
    nlohmann::json j{
        {"run_id", r.run_id},
        {"family", r.family},
        {"template_name", r.template_name},
        {"pipeline", r.pipeline},
        {"size", r.size},
        {"instance_key", r.instance_key},
        {"gold", r.gold},
        {"predicted", r.predicted},
        {"verdict", r.verdict},
        {"wall_nanos", r.wall_nanos},
        {"model_tag", r.model_tag},
    };
    if (r.first_divergence) {
        j["first_divergence"] = {{"position", r.first_divergence->position},
                                 {"gold_token", r.first_divergence->gold_token},
                                 {"pred_token", r.first_divergence->pred_token}};
    } else {
        j["first_divergence"] = nullptr;
    }
    return j.dump();
}

EvalRecord record_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed record line: " + line);
    EvalRecord r;
    try {
        r.run_id = j.at("run_id").get<std::string>();
        r.family = j.at("family").get<std::string>();
        r.template_name = j.at("template_name").get<std::string>();
        r.pipeline = j.at("pipeline").get<std::string>();
        r.size = j.at("size").get<int>();
        r.instance_key = j.at("instance_key").get<std::string>();
        r.gold = j.at("gold").get<std::string>();
        r.predicted = j.at("predicted").get<std::string>();
        r.verdict = j.at("verdict").get<std::string>();
        r.wall_nanos = j.at("wall_nanos").get<std::int64_t>();
        r.model_tag = j.at("model_tag").get<std::string>();
        if (j.contains("first_divergence") && !j["first_divergence"].is_null()) {
            const auto& d = j["first_divergence"];
            r.first_divergence = Divergence{d.at("position").get<int>(),
                                            d.at("gold_token").get<std::string>(),
                                            d.at("pred_token").get<std::string>()};
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("record missing field: " + std::string(e.what()));
    }
    return r;
}

RecordStore::RecordStore(std::string path) : path_(std::move(path)) {
    // A crash can leave a partial final line; drop it so appends start at a
    // record boundary, then seed the uniqueness index from what remains.
    {
        std::ifstream probe(path_, std::ios::binary);
        if (probe.good()) {
            std::string content((std::istreambuf_iterator<char>(probe)),
                                std::istreambuf_iterator<char>());
            auto last_nl = content.find_last_of('\n');
            std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
            if (keep < content.size())
                std::filesystem::resize_file(path_, keep);
        }
    }
    std::ifstream probe(path_);
    if (probe.good()) {
        for (const auto& r : load(path_))
            if (r.is_verdict()) seen_.insert({r.run_id, r.instance_key});
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw ConfigError("cannot open records file '" + path_ + "' for append");
}

void RecordStore::append(const EvalRecord& r) {
    if (r.is_verdict()) {
        auto [it, inserted] = seen_.insert({r.run_id, r.instance_key});
        if (!inserted)
            throw ConfigError("duplicate verdict record for (" + r.run_id + ", " +
                              r.instance_key + ")");
    }
    out_ << record_to_json(r) << '\n';
}

void RecordStore::flush() {
    out_.flush();
}

std::vector<EvalRecord> RecordStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open records file '" + path + "'");
    std::vector<EvalRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (in.eof()) {
            // No trailing newline: a crash may have truncated this line.
            nlohmann::json probe = nlohmann::json::parse(line, nullptr, false);
            if (probe.is_discarded()) break;
        }
        out.push_back(record_from_json(line));
    }
    return out;
}

std::vector<EvalRecord> RecordStore::verdicts_for_run(const std::vector<EvalRecord>& all,
                                                      const std::string& run_id) {
    std::map<std::string, EvalRecord> latest;
    for (const auto& r : all) {
        if (r.run_id != run_id) continue;
        latest[r.instance_key] = r;  // last record per key wins
    }
    std::vector<EvalRecord> out;
    out.reserve(latest.size());
    for (auto& [key, r] : latest)
        if (r.is_verdict()) out.push_back(std::move(r));
    return out;
}

std::vector<std::pair<std::string, std::string>> load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open TSV file '" + path + "'");
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ConfigError("TSV line " + std::to_string(lineno) + " in '" + path +
                              "' has no tab");
        out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return out;
}

}  // namespace zeh
