#include <iostream>
#include <mutex>

#include "egospeed/error.hpp"
#include "egospeed/log.hpp"
#include "egospeed/seed.hpp"

namespace egospeed {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInvalidRecord: return "invalid-record";
    case ErrorKind::kDataAlignment: return "data-alignment";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDegenerateGraph: return "degenerate-graph";
    case ErrorKind::kNumericFault: return "numeric-fault";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

namespace {

std::mutex g_sink_mutex;

WarningSink& sink() {
  static WarningSink s = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(g_sink_mutex);
  std::swap(sink(), s);
  return s;
}

void warn(const std::string& message) {
  std::lock_guard lock(g_sink_mutex);
  if (sink()) sink()(message);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  // FNV-1a over the key, then mixed with the master seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key) {
  return splitmix64(master ^ splitmix64(key + 0x632be59bd9b4e019ULL));
}

}  // namespace egospeed
