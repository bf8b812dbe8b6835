#pragma once

// Line-protocol client for external model servers. Protocol (newline
// delimited, utf-8 JSON):
//   request  {"id":<int>,"instructions":<string>,"input":<string>}
//   reply    {"id":<int>,"answer":<string>}
// Requests may be pipelined; replies may arrive out of order and are
// demultiplexed by id. A timeout yields an adapter-error answer, never a
// model error.

#include <chrono>
#include <map>
#include <mutex>
#include <string>

#include "zeh/model.hpp"

namespace zeh {

class AdapterModel : public TextModel {
  public:
    // Spawns `command` via /bin/sh -c with stdin/stdout pipes.
    explicit AdapterModel(const std::string& command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(60));
    ~AdapterModel() override;

    AdapterModel(const AdapterModel&) = delete;
    AdapterModel& operator=(const AdapterModel&) = delete;

    ModelAnswer answer(const ModelRequest& req) override;

  private:
    bool send_request(const ModelRequest& req, std::string* error);
    // Reads replies until `id` shows up or the deadline passes; other ids are
    // parked for their own callers, so concurrent requests stay pipelined.
    ModelAnswer wait_for(std::int64_t id);

    std::chrono::milliseconds timeout_;
    int child_pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::mutex write_mutex_;  // serializes request lines
    std::mutex read_mutex_;   // guards the read buffer and parked replies
    std::string read_buffer_;
    std::map<std::int64_t, std::string> pending_;  // parked out-of-order replies
    std::string broken_;  // sticky protocol failure, reported to every waiter
};

}  // namespace zeh
