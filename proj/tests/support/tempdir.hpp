#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

namespace tracegen::testsupport {

/// Self-cleaning scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    static const unsigned run_token = std::random_device{}();
    path_ = std::filesystem::temp_directory_path() /
            ("tracegen_" + tag + "_" + std::to_string(run_token) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace tracegen::testsupport
