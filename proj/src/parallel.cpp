#include "dsc/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dsc {

std::size_t thread_count() {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const char* env = std::getenv("DSC_THREADS");
  if (env == nullptr || *env == '\0') return hw;
  try {
    const long requested = std::stol(env);
    if (requested <= 0) return hw;
    return static_cast<std::size_t>(requested);
  } catch (...) {
    return hw;
  }
}

namespace detail {
bool& inside_worker() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

}  // namespace dsc
