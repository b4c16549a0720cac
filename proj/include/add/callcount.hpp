#pragma once

#include <atomic>
#include <cstdint>

namespace add::callcount {

// Invocation counters for components that must stay off the inference path.
extern std::atomic<std::uint64_t> posenc_builds;
extern std::atomic<std::uint64_t> self_attn_calls;
extern std::atomic<std::uint64_t> cross_attn_calls;

void reset();

}  // namespace add::callcount
