#pragma once

// Test double answering from the oracle except on an injected fault set,
// which makes exact ZEH assertions possible.

#include <map>
#include <string>

#include "zeh/families.hpp"
#include "zeh/model.hpp"

namespace zeh {

class ScriptedModel : public TextModel {
  public:
    ScriptedModel() = default;
    explicit ScriptedModel(std::map<std::string, std::string> faults)
        : faults_(std::move(faults)) {}

    // faults file: TSV lines `instance_key<TAB>wrong_answer`.
    static std::map<std::string, std::string> load_faults_file(const std::string& path);

    ModelAnswer answer(const ModelRequest& req) override;

    const std::map<std::string, std::string>& faults() const { return faults_; }

  private:
    std::map<std::string, std::string> faults_;
};

// Oracle text unless the instance key is faulted.
std::string scripted_answer(ScriptedModel& model, const Instance& inst);

}  // namespace zeh
