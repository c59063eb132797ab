#pragma once

#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "e2w/reward.hpp"
#include "e2w/task.hpp"

namespace e2w::service {

// Owning id -> instance lookup shared by batch scoring and serve mode.
class InstanceIndex {
public:
    explicit InstanceIndex(std::vector<TaskInstance> instances);

    const TaskInstance* find(const std::string& instance_id) const;
    std::size_t size() const { return instances_.size(); }

private:
    std::vector<TaskInstance> instances_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// One request line -> one reply line (no trailing newline). Malformed JSON
// yields {"error":"parse"}, an unknown id {"error":"unknown_instance"};
// valid requests yield the 12-significant-digit breakdown line. Never throws.
std::string score_request_line(const std::string& line, const InstanceIndex& index,
                               const reward::RewardWeights& weights);

// Position-stable parallel map of score_request_line over all lines.
std::vector<std::string> score_lines(const std::vector<std::string>& lines,
                                     const InstanceIndex& index,
                                     const reward::RewardWeights& weights, int threads);

// Streaming loop: one JSON request per input line, one reply per output
// line, replies in request order and flushed as soon as they are ready.
// A bounded in-flight queue provides backpressure. Returns the number of
// requests served.
std::size_t serve_stream(std::istream& in, std::ostream& out, const InstanceIndex& index,
                         const reward::RewardWeights& weights, int threads);

// TCP listener speaking the same line protocol, one connection at a time.
// addr is "host:port", ":port" or "port"; loops forever unless
// max_connections > 0. Throws std::runtime_error on socket errors.
void serve_tcp(const std::string& addr, const InstanceIndex& index,
               const reward::RewardWeights& weights, int threads, int max_connections = 0);

}  // namespace e2w::service
