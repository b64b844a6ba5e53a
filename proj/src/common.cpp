#include "infill/common.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace infill {

namespace {
std::atomic<bool> g_quiet{false};
std::atomic<int> g_threads{0};

int default_threads() {
  if (const char* env = std::getenv("SGLD_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}
}  // namespace

void warn(const std::string& msg) {
  if (!g_quiet) std::cerr << "warning: " << msg << '\n';
}

void set_quiet(bool quiet) { g_quiet = quiet; }

int worker_threads() {
  int n = g_threads.load();
  if (n <= 0) {
    n = default_threads();
    g_threads = n;
  }
  return n;
}

void set_worker_threads(int n) { g_threads = n > 0 ? n : default_threads(); }

}  // namespace infill
