#include "hazardpipe/detect/backend.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/json.hpp"

namespace hazardpipe {

void FeatureStack::validate() const {
  if (rows <= 0 || cols <= 0) throw Error("InvalidFeatureStack", "grid must be non-empty");
  if (channels.empty()) throw Error("InvalidFeatureStack", "need at least one channel");
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  for (const auto& ch : channels) {
    if (ch.size() != cells) throw Error("InvalidFeatureStack", "channel size mismatch");
    for (double v : ch) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error("InvalidFeatureStack", "activations must be finite and >= 0");
    }
  }
  for (const auto& [c, w] : class_weights) {
    if (w.size() != channels.size()) throw Error("InvalidFeatureStack", "class weight length != channel count");
  }
}

DetectorPool::DetectorPool(std::vector<std::unique_ptr<DetectorBackend>> backends)
    : idle_(std::move(backends)), size_(idle_.size()) {
  if (idle_.empty()) throw Error("InvalidConfig", "detector pool needs at least one backend");
}

DetectorPool::Lease::~Lease() {
  if (backend_) pool_->release(std::move(backend_));
}

DetectorPool::Lease DetectorPool::acquire() {
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return !idle_.empty(); });
  auto backend = std::move(idle_.back());
  idle_.pop_back();
  return Lease(*this, std::move(backend));
}

void DetectorPool::release(std::unique_ptr<DetectorBackend> backend) {
  {
    std::lock_guard lock(mutex_);
    idle_.push_back(std::move(backend));
  }
  cv_.notify_one();
}

std::vector<RawDetection> parse_detector_response(const std::string& line) {
  std::vector<RawDetection> out;
  try {
    const auto j = nlohmann::json::parse(line);
    for (const auto& d : j.at("detections")) {
      const double score = d.at("score").get<double>();
      if (!(score >= 0.0 && score <= 1.0)) throw Error("DetectorFailure", "score outside [0,1]");
      out.push_back(RawDetection{d.at("box").get<BoundingBox>(), d.at("class").get<HazardClass>(), score});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("DetectorFailure", std::string("bad response: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == "DetectorFailure") throw;
    throw Error("DetectorFailure", e.what());
  }
  return out;
}

ExternalProcessDetector::ExternalProcessDetector(std::string command, DetectorCapabilities caps)
    : command_(std::move(command)), caps_(std::move(caps)) {}

ExternalProcessDetector::~ExternalProcessDetector() { stop(); }

void ExternalProcessDetector::start() {
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) throw Error("DetectorFailure", "pipe failed");
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw Error("DetectorFailure", "pipe failed");
  }
  const pid_t pid = fork();
  if (pid < 0) throw Error("DetectorFailure", "fork failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  fcntl(in_pipe[1], F_SETFD, FD_CLOEXEC);
  fcntl(out_pipe[0], F_SETFD, FD_CLOEXEC);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  buffer_.clear();
}

void ExternalProcessDetector::stop() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (pid_ > 0) {
    int status = 0;
    if (waitpid(pid_, &status, WNOHANG) == 0) {
      kill(pid_, SIGTERM);
      waitpid(pid_, &status, 0);
    }
  }
  pid_ = -1;
}

std::vector<RawDetection> ExternalProcessDetector::detect(const ImageInput& image) {
  if (pid_ < 0) start();
  const std::string request =
      nlohmann::json{{"image_ref", image.image_ref}, {"width", image.width}, {"height", image.height}}.dump() + "\n";
  std::size_t written = 0;
  // A dead child shows up as EPIPE; keep SIGPIPE from killing us.
  struct sigaction ignore{}, previous{};
  ignore.sa_handler = SIG_IGN;
  sigaction(SIGPIPE, &ignore, &previous);
  while (written < request.size()) {
    const ssize_t n = write(to_child_, request.data() + written, request.size() - written);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      sigaction(SIGPIPE, &previous, nullptr);
      stop();
      throw Error("DetectorFailure", "write to detector process failed");
    }
    written += static_cast<std::size_t>(n);
  }
  sigaction(SIGPIPE, &previous, nullptr);

  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return parse_detector_response(line);
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, 30000);
    if (ready <= 0) {
      stop();
      throw Error("DetectorFailure", "detector process timed out");
    }
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      stop();
      throw Error("DetectorFailure", "detector process exited");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace hazardpipe
