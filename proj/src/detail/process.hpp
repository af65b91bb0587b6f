#pragma once

#include <filesystem>
#include <string>

namespace assr::detail {

/// Scoped scratch directory under the system temp dir.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag);
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Replaces every occurrence of `key` in `cmd`.
std::string substitute(std::string cmd, const std::string& key, const std::string& value);

/// Runs through the shell, returns the exit status.
int run_status(const std::string& cmd);

struct CommandOutput {
  int status = 0;
  std::string out;
};
/// Runs through the shell capturing stdout.
CommandOutput run_capture(const std::string& cmd);

/// Single-quotes a path for the shell.
std::string shell_quote(const std::string& s);

}  // namespace assr::detail
