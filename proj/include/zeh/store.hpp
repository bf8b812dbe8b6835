#pragma once

// Persistent result store: one JSON object per line, append-only, resumable.
// (run_id, instance_key) is unique among verdict records; a `cancelled`
// marker is a placeholder that a later resume may supersede with a verdict
// (last record per key wins at load).

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "zeh/verifier.hpp"

namespace zeh {

struct EvalRecord {
    std::string run_id;
    std::string family;
    std::string template_name;
    std::string pipeline;
    int size = 0;
    std::string instance_key;
    std::string gold;
    std::string predicted;
    std::string verdict;  // outcome tag or "cancelled"
    std::optional<Divergence> first_divergence;
    std::int64_t wall_nanos = 0;
    std::string model_tag;

    bool is_verdict() const { return verdict != "cancelled"; }
};

std::string record_to_json(const EvalRecord& r);
EvalRecord record_from_json(const std::string& line);  // throws ConfigError

class RecordSink {
  public:
    virtual ~RecordSink() = default;
    virtual void append(const EvalRecord& r) = 0;
    virtual void flush() {}
};

class VectorSink : public RecordSink {
  public:
    void append(const EvalRecord& r) override { records.push_back(r); }
    std::vector<EvalRecord> records;
};

// Append-only JSONL file store. Load tolerates a truncated final line
// (crash remnant) but rejects malformed interior lines.
class RecordStore : public RecordSink {
  public:
    explicit RecordStore(std::string path);

    void append(const EvalRecord& r) override;
    void flush() override;

    static std::vector<EvalRecord> load(const std::string& path);

    // Latest record per (run_id matches) key; cancelled markers are dropped.
    static std::vector<EvalRecord> verdicts_for_run(const std::vector<EvalRecord>& all,
                                                    const std::string& run_id);

  private:
    std::string path_;
    std::ofstream out_;
    std::set<std::pair<std::string, std::string>> seen_;  // (run_id, key) of verdicts
};

// TSV helpers shared by the CLI: `key<TAB>value` per line.
std::vector<std::pair<std::string, std::string>> load_tsv(const std::string& path);

}  // namespace zeh
