#include "add/callcount.hpp"

namespace add::callcount {

std::atomic<std::uint64_t> posenc_builds{0};
std::atomic<std::uint64_t> self_attn_calls{0};
std::atomic<std::uint64_t> cross_attn_calls{0};

void reset() {
  posenc_builds = 0;
  self_attn_calls = 0;
  cross_attn_calls = 0;
}

}  // namespace add::callcount
