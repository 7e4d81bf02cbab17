#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hazardpipe/ingest/image.hpp"

namespace hazardpipe {

// Content-addressed blobs under `<root>/blobs/<2-hex-prefix>/<sha256>`.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  // Returns the content hash, which is also the blob reference.
  std::string put(ByteView data);
  // Throws Error{"MissingBlob"}.
  Bytes get(const std::string& ref) const;
  bool contains(const std::string& ref) const;
  std::vector<std::string> list() const;

  std::filesystem::path path_for(const std::string& ref) const;

 private:
  std::filesystem::path root_;
};

}  // namespace hazardpipe
