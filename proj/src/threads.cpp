#include "xnet/threads.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "xnet/error.hpp"

namespace xnet {

int configure_threads() {
  if (const char* env = std::getenv("XNET_THREADS"); env && *env) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) {
      throw ConfigError(std::string("XNET_THREADS must be a positive integer, got '") + env + "'");
    }
    set_threads(static_cast<int>(n));
  }
  return max_threads();
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(n); }

}  // namespace xnet
