#include "dcsysid/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace dcsysid::parallel {

namespace {

int from_environment() {
  const char* raw = std::getenv("DCSYSID_THREADS");
  if (raw == nullptr) return 1;
  try {
    const int value = std::stoi(raw);
    return value >= 1 ? value : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

std::atomic<int>& slot() {
  static std::atomic<int> threads{from_environment()};
  return threads;
}

}  // namespace

int thread_count() { return slot().load(std::memory_order_relaxed); }

void set_thread_count(int threads) {
  slot().store(threads >= 1 ? threads : 1, std::memory_order_relaxed);
}

}  // namespace dcsysid::parallel
