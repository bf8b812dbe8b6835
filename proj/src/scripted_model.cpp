#include "zeh/scripted_model.hpp"

#include <fstream>

#include "zeh/error.hpp"

namespace zeh {

std::map<std::string, std::string> ScriptedModel::load_faults_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open faults file '" + path + "'");
    std::map<std::string, std::string> faults;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ConfigError("faults file line " + std::to_string(lineno) +
                              " is not instance_key<TAB>wrong_answer");
        faults[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return faults;
}

ModelAnswer ScriptedModel::answer(const ModelRequest& req) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    auto it = faults_.find(req.instance_key);
    if (it != faults_.end()) return {true, it->second, {}};
    Instance inst = parse_instance_key(req.instance_key);
    return {true, oracle(inst).text, {}};
}

std::string scripted_answer(ScriptedModel& model, const Instance& inst) {
    ModelRequest req;
    req.instance_key = inst.key;
    return model.answer(req).text;
}

}  // namespace zeh
