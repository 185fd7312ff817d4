#include "bmaguard/ocr.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

#include "bmaguard/error.hpp"
#include "bmaguard/png_io.hpp"

extern char** environ;

namespace bmaguard {

std::vector<RgbImage> slice_image(const RgbImage& img, int rows) {
  if (!img.valid()) throw InvalidInput("slice_image: invalid image");
  if (rows < 1) throw InvalidInput("slice_image: rows must be >= 1");
  if (rows > img.height) throw InvalidInput("slice_image: more rows than image height");

  const int base = img.height / rows, extra = img.height % rows;
  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * 3;
  std::vector<RgbImage> strips;
  strips.reserve(static_cast<std::size_t>(rows));
  int y = 0;
  for (int i = 0; i < rows; ++i) {
    const int h = base + (i < extra ? 1 : 0);
    RgbImage strip(img.width, h);
    std::copy_n(img.at(0, y), row_bytes * static_cast<std::size_t>(h), strip.pixels.data());
    strips.push_back(std::move(strip));
    y += h;
  }
  return strips;
}

OcrText extract_text(const RgbImage& img, OcrEngine& engine, int rows) {
  const auto start = std::chrono::steady_clock::now();
  const auto strips = slice_image(img, rows);
  const std::size_t n = strips.size();

  std::vector<std::string> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::mutex serial;
  const bool concurrent = engine.concurrent();

  auto run = [&](std::size_t i) {
    try {
      if (concurrent) {
        results[i] = engine.recognize(strips[i], i);
      } else {
        std::lock_guard lock(serial);
        results[i] = engine.recognize(strips[i], i);
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t workers = std::min<std::size_t>(n, kOcrWorkers);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const EngineError&) {
      throw;
    } catch (const std::exception& e) {
      throw EngineError(e.what(), i);
    } catch (...) {
      throw EngineError("unknown failure", i);
    }
  }

  OcrText out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out.text += '\n';
    out.text += results[i];
  }
  out.per_slice = std::move(results);
  out.extraction_ms = std::chrono::steady_clock::now() - start;
  return out;
}

ExternalOcrEngine::ExternalOcrEngine(std::string executable, std::vector<std::string> args,
                                     std::chrono::milliseconds timeout)
    : executable_(std::move(executable)), args_(std::move(args)), timeout_(timeout) {}

namespace {

struct TempFile {
  std::filesystem::path path;
  ~TempFile() {
    std::error_code ec;
    if (!path.empty()) std::filesystem::remove(path, ec);
  }
};

} // namespace

std::string ExternalOcrEngine::recognize(const RgbImage& strip, std::size_t strip_index) {
  TempFile tmp;
  {
    std::string pattern = (std::filesystem::temp_directory_path() / "bmaguard-ocr-XXXXXX.png").string();
    const int fd = mkstemps(pattern.data(), 4);
    if (fd < 0) throw EngineError(std::string("mkstemps: ") + std::strerror(errno), strip_index);
    close(fd);
    tmp.path = pattern;
  }
  write_png(tmp.path, strip);

  std::vector<std::string> argv_s{executable_};
  bool placed = false;
  for (const auto& a : args_) {
    if (a == "{}") {
      argv_s.push_back(tmp.path.string());
      placed = true;
    } else {
      argv_s.push_back(a);
    }
  }
  if (!placed) argv_s.push_back(tmp.path.string());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  int pipefd[2];
  if (pipe(pipefd) != 0) throw EngineError(std::string("pipe: ") + std::strerror(errno), strip_index);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, pipefd[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, pipefd[0]);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, "/dev/null", O_WRONLY, 0);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, executable_.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(pipefd[1]);
  if (rc != 0) {
    close(pipefd[0]);
    throw EngineError("cannot spawn " + executable_ + ": " + std::strerror(rc), strip_index);
  }

  std::string output;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  bool timed_out = false;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{pipefd[0], POLLIN, 0};
    const int pr = poll(&pfd, 1, static_cast<int>(left.count()));
    if (pr < 0 && errno == EINTR) continue;
    if (pr <= 0) {
      timed_out = pr == 0;
      break;
    }
    const ssize_t got = read(pipefd[0], buf, sizeof buf);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) break;
    output.append(buf, static_cast<std::size_t>(got));
  }
  close(pipefd[0]);
  if (timed_out) kill(pid, SIGKILL);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) throw EngineError(executable_ + " timed out", strip_index);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw EngineError(executable_ + " exited with failure", strip_index);
  while (!output.empty() && (output.back() == '\n' || output.back() == '\r' || output.back() == '\f'))
    output.pop_back();
  return output;
}

} // namespace bmaguard
