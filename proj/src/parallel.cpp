#include "emrt/parallel.hpp"

#include <cstdlib>
#include <string>

namespace emrt {

std::size_t default_worker_count() {
  if (const char* env = std::getenv("EMRT_WORKERS")) {
    try {
      const long value = std::stol(env);
      if (value >= 1) return static_cast<std::size_t>(value);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

}  // namespace emrt
