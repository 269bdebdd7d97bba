#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "faid/errors.hpp"
#include "faid/grid_io.hpp"
#include "faid/litho.hpp"

namespace faid {
namespace {

std::string shell_quote(const std::string &s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += '\'';
  return out;
}

std::string substitute(std::string command, const std::string &key, const std::string &value) {
  for (std::size_t pos = command.find(key); pos != std::string::npos;
       pos = command.find(key, pos + value.size()))
    command.replace(pos, key.size(), value);
  return command;
}

struct ExitStatus {
  bool timed_out = false;
  int code = 0;
};

ExitStatus run_shell(const std::string &command, std::chrono::milliseconds timeout) {
  const pid_t pid = fork();
  if (pid < 0) throw ExternalPredictorFailed(-1, fmt::format("fork failed: {}", std::strerror(errno)));
  if (pid == 0) {
    setpgid(0, 0);
    const int devnull = open("/dev/null", O_RDONLY);
    if (devnull >= 0) dup2(devnull, STDIN_FILENO);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char *>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);

  const auto deadline = std::chrono::steady_clock::now() + timeout;
  auto pause = std::chrono::milliseconds(1);
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR)
      throw ExternalPredictorFailed(-1, fmt::format("waitpid failed: {}", std::strerror(errno)));
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      return { true, 0 };
    }
    std::this_thread::sleep_for(pause);
    pause = std::min(pause * 2, std::chrono::milliseconds(50));
  }
  if (WIFEXITED(status)) return { false, WEXITSTATUS(status) };
  if (WIFSIGNALED(status)) return { false, 128 + WTERMSIG(status) };
  return { false, -1 };
}

}  // namespace

DensityGrid predict_external(const DensityGrid &mask, const ExternalPredictorConfig &config) {
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{ 0 };

  if (config.command.empty()) throw ConfigError("litho.command", "external command is empty");
  const fs::path dir = config.exchange_dir.empty() ? fs::temp_directory_path() : config.exchange_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw ConfigError("litho.exchange_dir",
                      fmt::format("cannot create '{}': {}", dir.string(), ec.message()));

  const std::string stem = fmt::format("faid_{}_{}", getpid(), counter++);
  const fs::path input = dir / (stem + "_mask.txt");
  const fs::path output = dir / (stem + "_pred.txt");
  fs::remove(output, ec);
  write_file_atomic(input, encode_density_grid(mask));

  std::string command = substitute(config.command, "{input}", shell_quote(input.string()));
  command = substitute(command, "{output}", shell_quote(output.string()));

  struct Cleanup {
    fs::path a, b;
    ~Cleanup() {
      std::error_code e;
      fs::remove(a, e);
      fs::remove(b, e);
    }
  } cleanup{ input, output };

  const ExitStatus st = run_shell(command, config.timeout);
  if (st.timed_out)
    throw ExternalPredictorTimeout(
        fmt::format("external predictor exceeded {} ms: {}", config.timeout.count(), config.command));
  if (st.code != 0)
    throw ExternalPredictorFailed(
        st.code, fmt::format("external predictor exited with status {}: {}", st.code, config.command));

  if (!fs::exists(output))
    throw ExternalPredictorBadOutput(
        fmt::format("external predictor wrote no output file '{}'", output.string()));
  DensityGrid result;
  try {
    result = decode_density_grid(read_file(output));
  } catch (const FormatError &e) {
    throw ExternalPredictorBadOutput(fmt::format("external predictor output: {}", e.what()));
  }
  if (result.grid.nx != mask.grid.nx || result.grid.ny != mask.grid.ny)
    throw ExternalPredictorBadOutput(
        fmt::format("external predictor returned a {}x{} grid for a {}x{} mask", result.grid.nx,
                    result.grid.ny, mask.grid.nx, mask.grid.ny));
  result.grid = mask.grid;
  return result;
}

}  // namespace faid
