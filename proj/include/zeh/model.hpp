#pragma once

// Text-level model abstraction shared by the scripted test double and the
// external-process adapter. Logit-level models (the toy transformer) are a
// separate capability; the scheduler checks which one a pipeline needs.

#include <atomic>
#include <cstdint>
#include <string>

namespace zeh {

struct ModelRequest {
    std::int64_t id = 0;
    std::string instructions;
    std::string input;
    std::string instance_key;  // ignored by adapters (not on the wire)
};

struct ModelAnswer {
    bool ok = true;
    std::string text;
    std::string error;  // set when !ok (adapter timeout / protocol failure)
};

class TextModel {
  public:
    virtual ~TextModel() = default;
    virtual ModelAnswer answer(const ModelRequest& req) = 0;
    std::uint64_t call_count() const { return calls_.load(); }

  protected:
    std::atomic<std::uint64_t> calls_{0};
};

}  // namespace zeh
