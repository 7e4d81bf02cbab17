#pragma once

#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hazardpipe/core/types.hpp"

namespace hazardpipe {

// Activation maps exposed by a backend for class-activation mapping.
// channels[k] is a rows x cols grid (row-major) of non-negative values.
struct FeatureStack {
  int rows = 0;
  int cols = 0;
  std::vector<std::vector<double>> channels;
  std::map<HazardClass, std::vector<double>> class_weights;

  // Throws Error{"InvalidFeatureStack"}.
  void validate() const;
  double at(std::size_t k, int r, int c) const { return channels[k][static_cast<std::size_t>(r) * cols + c]; }
};

struct ImageInput {
  std::string image_ref;
  int width = 0;
  int height = 0;
};

struct RawDetection {
  BoundingBox box;
  HazardClass hazard_class;
  double score;
};

struct DetectorCapabilities {
  int max_image_edge = 4096;
  std::vector<HazardClass> classes;
  bool activations = false;
};

// Model boundary. Implementations must be deterministic for a fixed
// seed/version and return scores in [0,1]. Instances are single-caller.
class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual DetectorCapabilities capabilities() const = 0;
  virtual std::vector<RawDetection> detect(const ImageInput& image) = 0;
  virtual std::optional<FeatureStack> activations(const ImageInput&) { return std::nullopt; }
};

// Fixed-size pool handing out exclusive backend instances.
class DetectorPool {
 public:
  explicit DetectorPool(std::vector<std::unique_ptr<DetectorBackend>> backends);

  class Lease {
   public:
    Lease(DetectorPool& pool, std::unique_ptr<DetectorBackend> backend)
        : pool_(&pool), backend_(std::move(backend)) {}
    Lease(Lease&&) = default;
    Lease& operator=(Lease&&) = delete;
    ~Lease();
    DetectorBackend& operator*() const { return *backend_; }
    DetectorBackend* operator->() const { return backend_.get(); }

   private:
    DetectorPool* pool_;
    std::unique_ptr<DetectorBackend> backend_;
  };

  Lease acquire();
  std::size_t size() const { return size_; }

 private:
  void release(std::unique_ptr<DetectorBackend> backend);

  std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<DetectorBackend>> idle_;
  std::size_t size_;
};

// Speaks the line protocol: one `{image_ref, width, height}` object per
// line on the child's stdin, one `{detections: [{box, class, score}]}`
// object per line back on stdout. The child is started lazily and kept
// alive for subsequent calls.
class ExternalProcessDetector : public DetectorBackend {
 public:
  explicit ExternalProcessDetector(std::string command, DetectorCapabilities caps = {});
  ~ExternalProcessDetector() override;
  ExternalProcessDetector(const ExternalProcessDetector&) = delete;
  ExternalProcessDetector& operator=(const ExternalProcessDetector&) = delete;

  DetectorCapabilities capabilities() const override { return caps_; }
  // Throws Error{"DetectorFailure"}.
  std::vector<RawDetection> detect(const ImageInput& image) override;

 private:
  void start();
  void stop();

  std::string command_;
  DetectorCapabilities caps_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Parses one protocol response line. Throws Error{"DetectorFailure"}.
std::vector<RawDetection> parse_detector_response(const std::string& line);

}  // namespace hazardpipe
