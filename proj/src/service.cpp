#include "e2w/service.hpp"

#include <condition_variable>
#include <deque>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include <nlohmann/json.hpp>

namespace e2w::service {

namespace {
using json = nlohmann::json;
}

InstanceIndex::InstanceIndex(std::vector<TaskInstance> instances) : instances_(std::move(instances)) {
    for (std::size_t i = 0; i < instances_.size(); ++i) by_id_.emplace(instances_[i].instance_id, i);
}

const TaskInstance* InstanceIndex::find(const std::string& instance_id) const {
    auto it = by_id_.find(instance_id);
    return it == by_id_.end() ? nullptr : &instances_[it->second];
}

std::string score_request_line(const std::string& line, const InstanceIndex& index,
                               const reward::RewardWeights& weights) {
    json request = json::parse(line, nullptr, false);
    if (request.is_discarded() || !request.is_object() || !request.contains("instance_id") ||
        !request["instance_id"].is_string() || !request.contains("response_text") ||
        !request["response_text"].is_string())
        return "{\"error\":\"parse\"}";
    const std::string id = request["instance_id"].get<std::string>();
    const TaskInstance* instance = index.find(id);
    if (!instance) return "{\"error\":\"unknown_instance\"}";
    const auto breakdown =
        reward::score_response_text(request["response_text"].get<std::string>(), *instance, weights);
    return reward::score_line(id, breakdown);
}

std::vector<std::string> score_lines(const std::vector<std::string>& lines,
                                     const InstanceIndex& index,
                                     const reward::RewardWeights& weights, int threads) {
    std::vector<std::string> out(lines.size());
    threads = std::max(1, threads);
    if (threads == 1 || lines.size() < 64) {
        for (std::size_t i = 0; i < lines.size(); ++i)
            out[i] = score_request_line(lines[i], index, weights);
        return out;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (lines.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(lines.size(), lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            for (std::size_t i = lo; i < hi; ++i) out[i] = score_request_line(lines[i], index, weights);
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

std::size_t serve_stream(std::istream& in, std::ostream& out, const InstanceIndex& index,
                         const reward::RewardWeights& weights, int threads) {
    threads = std::max(1, threads);
    const std::size_t max_in_flight = static_cast<std::size_t>(threads) * 4;

    std::mutex mu;
    std::condition_variable cv_space, cv_task, cv_out;
    std::deque<std::pair<std::size_t, std::string>> tasks;
    std::map<std::size_t, std::string> ready;
    bool input_done = false;
    int running_workers = threads;
    std::size_t next_read = 0;
    std::size_t next_write = 0;

    std::vector<std::thread> workers;
    for (int t = 0; t < threads; ++t) {
        workers.emplace_back([&] {
            for (;;) {
                std::pair<std::size_t, std::string> task;
                {
                    std::unique_lock lock(mu);
                    cv_task.wait(lock, [&] { return input_done || !tasks.empty(); });
                    if (tasks.empty()) break;
                    task = std::move(tasks.front());
                    tasks.pop_front();
                    cv_space.notify_one();
                }
                std::string reply = score_request_line(task.second, index, weights);
                {
                    std::lock_guard lock(mu);
                    ready.emplace(task.first, std::move(reply));
                }
                cv_out.notify_all();
            }
            {
                std::lock_guard lock(mu);
                --running_workers;
            }
            cv_out.notify_all();
        });
    }

    // Order-restoring writer; flushes each reply as soon as it is next.
    std::thread writer([&] {
        std::unique_lock lock(mu);
        for (;;) {
            cv_out.wait(lock, [&] {
                return (!ready.empty() && ready.begin()->first == next_write) ||
                       (running_workers == 0 && ready.empty());
            });
            if (!ready.empty() && ready.begin()->first == next_write) {
                std::string reply = std::move(ready.begin()->second);
                ready.erase(ready.begin());
                ++next_write;
                lock.unlock();
                out << reply << '\n';
                out.flush();
                lock.lock();
            } else {
                break;  // workers drained
            }
        }
    });

    std::string line;
    while (std::getline(in, line)) {
        std::unique_lock lock(mu);
        cv_space.wait(lock, [&] { return tasks.size() < max_in_flight; });
        tasks.emplace_back(next_read++, std::move(line));
        cv_task.notify_one();
    }
    {
        std::lock_guard lock(mu);
        input_done = true;
    }
    cv_task.notify_all();
    for (auto& th : workers) th.join();
    writer.join();
    return next_read;
}

namespace {

// Minimal streambuf over a connected socket, enough for getline/<< traffic.
class FdStreambuf : public std::streambuf {
public:
    explicit FdStreambuf(int fd) : fd_(fd) {
        setg(in_buf_, in_buf_, in_buf_);
        setp(out_buf_, out_buf_ + sizeof out_buf_);
    }

protected:
    int underflow() override {
        const ssize_t n = ::read(fd_, in_buf_, sizeof in_buf_);
        if (n <= 0) return traits_type::eof();
        setg(in_buf_, in_buf_, in_buf_ + n);
        return traits_type::to_int_type(in_buf_[0]);
    }

    int overflow(int ch) override {
        if (sync() != 0) return traits_type::eof();
        if (ch != traits_type::eof()) {
            out_buf_[0] = static_cast<char>(ch);
            pbump(1);
        }
        return ch;
    }

    int sync() override {
        const char* p = pbase();
        std::size_t left = static_cast<std::size_t>(pptr() - pbase());
        while (left > 0) {
            const ssize_t n = ::write(fd_, p, left);
            if (n <= 0) return -1;
            p += n;
            left -= static_cast<std::size_t>(n);
        }
        setp(out_buf_, out_buf_ + sizeof out_buf_);
        return 0;
    }

private:
    int fd_;
    char in_buf_[4096];
    char out_buf_[4096];
};

}  // namespace

void serve_tcp(const std::string& addr, const InstanceIndex& index,
               const reward::RewardWeights& weights, int threads, int max_connections) {
    std::string host = "0.0.0.0";
    std::string port = addr;
    const auto colon = addr.rfind(':');
    if (colon != std::string::npos) {
        if (colon > 0) host = addr.substr(0, colon);
        port = addr.substr(colon + 1);
    }
    int port_num = 0;
    try {
        port_num = std::stoi(port);
    } catch (...) {
        throw std::runtime_error("serve_tcp: bad listen address '" + addr + "'");
    }

    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw std::runtime_error("serve_tcp: socket() failed");
    const int one = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(static_cast<std::uint16_t>(port_num));
    if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
        ::close(listener);
        throw std::runtime_error("serve_tcp: bad host '" + host + "'");
    }
    if (::bind(listener, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
        ::close(listener);
        throw std::runtime_error("serve_tcp: bind failed on '" + addr + "': " +
                                 std::string(std::strerror(errno)));
    }
    if (::listen(listener, 8) != 0) {
        ::close(listener);
        throw std::runtime_error("serve_tcp: listen failed");
    }

    int served = 0;
    while (max_connections <= 0 || served < max_connections) {
        const int conn = ::accept(listener, nullptr, nullptr);
        if (conn < 0) continue;
        // Separate buffers: the reader and the order-restoring writer run on
        // different threads.
        FdStreambuf read_buf(conn), write_buf(conn);
        std::istream cin_sock(&read_buf);
        std::ostream cout_sock(&write_buf);
        serve_stream(cin_sock, cout_sock, index, weights, threads);
        cout_sock.flush();
        ::close(conn);
        ++served;
    }
    ::close(listener);
}

}  // namespace e2w::service
