#include "wfic/parallel.hpp"

#include <atomic>

namespace wfic {

namespace {
std::atomic<std::size_t> g_thread_limit{0};
}

void set_thread_limit(std::size_t threads) noexcept { g_thread_limit.store(threads); }

std::size_t thread_limit() noexcept {
    const std::size_t limit = g_thread_limit.load();
    if (limit != 0) return limit;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

}  // namespace wfic
