#pragma once

// Line-oriented conversation with a long-running helper program. The child
// gets one end of a socketpair as both stdin and stdout; stderr is inherited.

#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>
#include <string_view>

#include "synthcell/error.hpp"

extern char** environ;

namespace synthcell {

class LineProcess {
 public:
  /// Runs `command` through /bin/sh -c.
  explicit LineProcess(std::string command) : command_(std::move(command)) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      fail(ErrorCode::ProcessFailure, "socketpair: " + std::string(std::strerror(errno)));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    const char* argv[] = {"/bin/sh", "-c", command_.c_str(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(fds[1]);
    if (rc != 0) {
      ::close(fds[0]);
      fail(ErrorCode::ProcessFailure, "cannot start '" + command_ + "': " + std::strerror(rc));
    }
    fd_ = fds[0];
  }

  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  ~LineProcess() {
    if (fd_ >= 0) ::close(fd_);
    if (pid_ > 0 && !reaped_) {
      ::kill(pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  const std::string& command() const { return command_; }

  /// Sends one request line and returns the reply line (without newline).
  std::string request(std::string_view line) {
    std::string msg(line);
    msg += '\n';
    std::size_t sent = 0;
    while (sent < msg.size()) {
      const ssize_t n = ::send(fd_, msg.data() + sent, msg.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        died("write failed");
      }
      sent += static_cast<std::size_t>(n);
    }
    return read_line();
  }

 private:
  std::string read_line() {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::read(fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        died("read failed");
      }
      if (n == 0) died("closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  [[noreturn]] void died(const std::string& what) {
    int status = 0;
    if (!reaped_ && ::waitpid(pid_, &status, 0) == pid_) {
      reaped_ = true;
      if (WIFEXITED(status) && WEXITSTATUS(status) != 0) {
        fail(ErrorCode::ProcessFailure, "'" + command_ + "' exited with status " + std::to_string(WEXITSTATUS(status)));
      }
      if (WIFSIGNALED(status)) {
        fail(ErrorCode::ProcessFailure, "'" + command_ + "' killed by signal " + std::to_string(WTERMSIG(status)));
      }
    }
    fail(ErrorCode::ProtocolError, "'" + command_ + "' " + what + " before replying");
  }

  std::string command_;
  pid_t pid_ = -1;
  int fd_ = -1;
  bool reaped_ = false;
  std::string buffer_;
};

}  // namespace synthcell
