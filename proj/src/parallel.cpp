#include "peri/parallel.hpp"

#include <cstdlib>
#include <string>

namespace peri {

int resolve_threads(int configured) {
  if (const char* env = std::getenv("PERITUMOR_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
      // unparsable values fall through to the configured degree
    }
  }
  if (configured > 0) return configured;
  return omp_get_max_threads();
}

}  // namespace peri
