#include "livekt/threads.hpp"

#include <cstdlib>
#include <thread>

namespace livekt {
namespace {

int env_thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* cap = std::getenv("LIVEKT_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

int g_override = 0;

}  // namespace

int thread_count() {
  if (g_override > 0) return g_override;
  static const int n = env_thread_count();
  return n;
}

void set_thread_count(int n) { g_override = n > 0 ? n : 0; }

}  // namespace livekt
