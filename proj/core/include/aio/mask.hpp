#pragma once

#include <cstdint>
#include <vector>

namespace aio {

// Boolean attention mask. Rows index queries, columns index keys; true means
// the query may attend that key.
struct AttentionMask {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> allow;

  AttentionMask() = default;
  AttentionMask(int r, int c, bool init)
      : rows(r), cols(c), allow(static_cast<size_t>(r) * c, init ? 1 : 0) {}

  static AttentionMask all_true(int r, int c) {
    return AttentionMask(r, c, true);
  }

  bool at(int r, int c) const {
    return allow[static_cast<size_t>(r) * cols + c] != 0;
  }
  void set(int r, int c, bool v) {
    allow[static_cast<size_t>(r) * cols + c] = v ? 1 : 0;
  }

  bool operator==(const AttentionMask&) const = default;
};

}  // namespace aio
