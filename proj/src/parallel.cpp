#include "hteqtl/parallel.hpp"

#include <cstdlib>
#include <string>

namespace hteqtl {

namespace {
std::atomic<int> g_default{0};
}

void set_default_threads(int n) { g_default.store(n > 0 ? n : 0); }

int default_threads() {
  if (int n = g_default.load(); n > 0) return n;
  if (const char* env = std::getenv("HT_EQTL_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

int resolve_threads(int requested) { return requested > 0 ? requested : default_threads(); }

}  // namespace hteqtl
