#include <atomic>
#include <cstdlib>
#include <string>

#include "simlab/common.hpp"
#include "simlab/kernels.hpp"

namespace simlab::kernels {

namespace {

const KernelTable *resolve(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") {
    const KernelTable *t = avx2_table();
    if (!t) throw UsageError("avx2 kernels are not available on this CPU");
    return t;
  }
  if (name == "auto" || name.empty()) {
    const KernelTable *t = avx2_table();
    return t ? t : &scalar_table();
  }
  throw UsageError("unknown kernel backend '" + std::string(name) + "'");
}

std::atomic<const KernelTable *> &slot() {
  static std::atomic<const KernelTable *> current{[] {
    const char *env = std::getenv("SIMLAB_KERNELS");
    return resolve(env ? std::string_view(env) : std::string_view("auto"));
  }()};
  return current;
}

} // namespace

const KernelTable &active() { return *slot().load(std::memory_order_acquire); }

void select_backend(std::string_view name) { slot().store(resolve(name), std::memory_order_release); }

std::string_view backend_name() { return active().name; }

} // namespace simlab::kernels
