#pragma once

#include <optional>
#include <string>

#include "allmask/common.hpp"

namespace allmask {

// Boolean attention layout. `allow(i, j)` grants query row i visibility of
// key column j. Keys cover `cache_offset` cached positions followed by the
// query rows themselves, so key_len = cache_offset + query_len. The first
// max(0, history_len - cache_offset) query rows form the causal region;
// rows at or beyond that are mask-placeholder rows.
struct HybridAttentionMask {
  BoolGrid allow;
  int history_len = 0;
  int mask_len = 0;
  int cache_offset = 0;

  int query_len() const { return static_cast<int>(allow.rows()); }
  int key_len() const { return static_cast<int>(allow.cols()); }
  int global_position(int query_row) const { return cache_offset + query_row; }
};

// Standard causal mask over a fresh sequence: allow(i, j) = j <= i.
HybridAttentionMask construct_causal_mask(int seq_len);

// Causal layout for an incremental step: query rows attend to all cached
// keys plus themselves causally, allow(i, j) = j <= cache_offset + i.
HybridAttentionMask causal_step_mask(int cache_offset, int query_len);

// Full (H+N)x(H+N) hybrid layout: the first H rows are causal dialogue
// history, the last N rows are mask placeholders with bidirectional
// visibility of everything. History rows never see mask columns.
HybridAttentionMask construct_hybrid_mask(int history_len, int mask_len);

// Incremental form of the hybrid layout: only the N mask rows are queries,
// history keys come from a cache of length H. Equals the bottom N rows of
// construct_hybrid_mask(H, N).
HybridAttentionMask hybrid_mask_with_cache(int history_len, int mask_len);

// Ablation layout: mask rows lose bidirectionality and attend causally
// within the placeholder block (history handling unchanged).
HybridAttentionMask causal_block_mask_with_cache(int history_len, int mask_len);
HybridAttentionMask construct_causal_block_mask(int history_len, int mask_len);

struct MaskViolation {
  int row = -1;
  int col = -1;
  std::string reason;
};

// Checks the structural invariants; returns the first violation found.
std::optional<MaskViolation> validate_mask(const HybridAttentionMask& mask);

// '#' for allowed, '.' for blocked; one line per query row.
std::string to_debug_string(const HybridAttentionMask& mask);

}  // namespace allmask
