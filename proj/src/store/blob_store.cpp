#include "hazardpipe/store/blob_store.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iterator>
#include <thread>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/hash.hpp"

namespace hazardpipe {

namespace fs = std::filesystem;

BlobStore::BlobStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "blobs"); }

fs::path BlobStore::path_for(const std::string& ref) const {
  if (ref.size() < 3 || !std::all_of(ref.begin(), ref.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
      })) {
    throw Error("MissingBlob", "invalid blob reference '" + ref + "'");
  }
  return root_ / "blobs" / ref.substr(0, 2) / ref;
}

std::string BlobStore::put(ByteView data) {
  const std::string ref = sha256_hex(data);
  const fs::path target = path_for(ref);
  if (fs::exists(target)) return ref;
  fs::create_directories(target.parent_path());
  static std::atomic<unsigned> counter{0};
  const fs::path tmp = target.string() + ".tmp" + std::to_string(counter++) + "-" +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("IoError", "blob write failed");
  }
  fs::rename(tmp, target);
  return ref;
}

Bytes BlobStore::get(const std::string& ref) const {
  const fs::path p = path_for(ref);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("MissingBlob", ref);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool BlobStore::contains(const std::string& ref) const {
  try {
    return fs::exists(path_for(ref));
  } catch (const Error&) {
    return false;
  }
}

std::vector<std::string> BlobStore::list() const {
  std::vector<std::string> out;
  const fs::path dir = root_ / "blobs";
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension().empty()) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hazardpipe
