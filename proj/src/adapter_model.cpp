#include "zeh/adapter_model.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "json.hpp"
#include "zeh/error.hpp"

namespace zeh {

AdapterModel::AdapterModel(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
    int in_pipe[2], out_pipe[2];  // in: us -> child, out: child -> us
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw AdapterFailure("pipe() failed: " + std::string(std::strerror(errno)));
    pid_t pid = fork();
    if (pid < 0) throw AdapterFailure("fork() failed");
    if (pid == 0) {
        setpgid(0, 0);  // own process group, so teardown reaches grandchildren
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    setpgid(pid, pid);  // both sides set it; whichever runs first wins
    child_pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    fcntl(from_child_, F_SETFL, O_NONBLOCK);
    signal(SIGPIPE, SIG_IGN);  // a dead endpoint must surface as adapter-error
}

AdapterModel::~AdapterModel() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (child_pid_ > 0) {
        kill(-child_pid_, SIGTERM);  // whole process group
        int status = 0;
        waitpid(child_pid_, &status, 0);
    }
}

bool AdapterModel::send_request(const ModelRequest& req, std::string* error) {
    nlohmann::json j{{"id", req.id}, {"instructions", req.instructions}, {"input", req.input}};
    std::string line = j.dump() + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        ssize_t n = write(to_child_, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            *error = "write to adapter failed: " + std::string(std::strerror(errno));
            return false;
        }
        written += static_cast<std::size_t>(n);
    }
    return true;
}

ModelAnswer AdapterModel::wait_for(std::int64_t id) {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
        {
            std::lock_guard<std::mutex> lock(read_mutex_);
            if (auto it = pending_.find(id); it != pending_.end()) {
                ModelAnswer a{true, it->second, {}};
                pending_.erase(it);
                return a;
            }
            if (!broken_.empty()) return {false, {}, broken_};

            pollfd pfd{from_child_, POLLIN, 0};
            int pr = poll(&pfd, 1, 50);
            if (pr < 0 && errno != EINTR) {
                broken_ = "poll failed: " + std::string(std::strerror(errno));
                return {false, {}, broken_};
            }
            if (pr > 0) {
                char buf[4096];
                ssize_t n = read(from_child_, buf, sizeof buf);
                if (n == 0) {
                    broken_ = "adapter closed its output";
                    return {false, {}, broken_};
                }
                if (n > 0) {
                    read_buffer_.append(buf, static_cast<std::size_t>(n));
                    std::size_t nl;
                    while ((nl = read_buffer_.find('\n')) != std::string::npos) {
                        std::string line = read_buffer_.substr(0, nl);
                        read_buffer_.erase(0, nl + 1);
                        if (line.empty()) continue;
                        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
                        if (j.is_discarded() || !j.contains("id") || !j.contains("answer")) {
                            broken_ = "malformed adapter reply: " + line;
                            return {false, {}, broken_};
                        }
                        pending_[j["id"].get<std::int64_t>()] = j["answer"].get<std::string>();
                    }
                    continue;  // re-check pending before sleeping again
                }
                if (errno != EAGAIN && errno != EINTR) {
                    broken_ = "read from adapter failed: " + std::string(std::strerror(errno));
                    return {false, {}, broken_};
                }
            }
        }
        if (std::chrono::steady_clock::now() >= deadline)
            return {false, {},
                    "adapter timeout after " + std::to_string(timeout_.count()) + "ms"};
    }
}

ModelAnswer AdapterModel::answer(const ModelRequest& req) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    {
        std::lock_guard<std::mutex> lock(write_mutex_);
        std::string err;
        if (!send_request(req, &err)) return {false, {}, err};
    }
    return wait_for(req.id);
}

}  // namespace zeh
