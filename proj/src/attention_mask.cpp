#include "allmask/attention_mask.hpp"

#include <algorithm>
#include <sstream>

namespace allmask {

HybridAttentionMask construct_causal_mask(int seq_len) {
  if (seq_len < 1) {
    throw std::invalid_argument("construct_causal_mask: seq_len must be >= 1");
  }
  HybridAttentionMask mask;
  mask.history_len = seq_len;
  mask.mask_len = 0;
  mask.cache_offset = 0;
  mask.allow = BoolGrid::Constant(seq_len, seq_len, false);
  for (int i = 0; i < seq_len; ++i) {
    mask.allow.row(i).head(i + 1).setConstant(true);
  }
  return mask;
}

HybridAttentionMask causal_step_mask(int cache_offset, int query_len) {
  if (cache_offset < 0 || query_len < 1) {
    throw std::invalid_argument("causal_step_mask: bad dimensions");
  }
  HybridAttentionMask mask;
  mask.history_len = cache_offset + query_len;
  mask.mask_len = 0;
  mask.cache_offset = cache_offset;
  mask.allow = BoolGrid::Constant(query_len, cache_offset + query_len, false);
  for (int i = 0; i < query_len; ++i) {
    mask.allow.row(i).head(cache_offset + i + 1).setConstant(true);
  }
  return mask;
}

HybridAttentionMask construct_hybrid_mask(int history_len, int mask_len) {
  if (history_len < 1 || mask_len < 1) {
    throw std::invalid_argument("construct_hybrid_mask: history_len and mask_len must be >= 1");
  }
  const int total = history_len + mask_len;
  HybridAttentionMask mask;
  mask.history_len = history_len;
  mask.mask_len = mask_len;
  mask.cache_offset = 0;
  mask.allow = BoolGrid::Constant(total, total, false);
  for (int i = 0; i < history_len; ++i) {
    mask.allow.row(i).head(i + 1).setConstant(true);
  }
  mask.allow.bottomRows(mask_len).setConstant(true);
  return mask;
}

HybridAttentionMask hybrid_mask_with_cache(int history_len, int mask_len) {
  if (history_len < 1 || mask_len < 1) {
    throw std::invalid_argument("hybrid_mask_with_cache: history_len and mask_len must be >= 1");
  }
  HybridAttentionMask mask;
  mask.history_len = history_len;
  mask.mask_len = mask_len;
  mask.cache_offset = history_len;
  mask.allow = BoolGrid::Constant(mask_len, history_len + mask_len, true);
  return mask;
}

HybridAttentionMask construct_causal_block_mask(int history_len, int mask_len) {
  if (history_len < 1 || mask_len < 1) {
    throw std::invalid_argument("construct_causal_block_mask: bad dimensions");
  }
  HybridAttentionMask mask = construct_causal_mask(history_len + mask_len);
  mask.history_len = history_len;
  mask.mask_len = mask_len;
  return mask;
}

HybridAttentionMask causal_block_mask_with_cache(int history_len, int mask_len) {
  if (history_len < 1 || mask_len < 1) {
    throw std::invalid_argument("causal_block_mask_with_cache: bad dimensions");
  }
  HybridAttentionMask mask = causal_step_mask(history_len, mask_len);
  mask.history_len = history_len;
  mask.mask_len = mask_len;
  return mask;
}

std::optional<MaskViolation> validate_mask(const HybridAttentionMask& mask) {
  const int q = mask.query_len();
  const int k = mask.key_len();
  if (q < 1 || k < 1) {
    return MaskViolation{-1, -1, "empty mask"};
  }
  if (k != mask.cache_offset + q) {
    return MaskViolation{-1, -1, "key_len != cache_offset + query_len"};
  }
  for (int i = 0; i < q; ++i) {
    if (!mask.allow.row(i).any()) {
      return MaskViolation{i, -1, "query row allows zero keys"};
    }
  }
  // Causal region: query rows whose global position lies in the history.
  const int causal_rows = std::max(0, mask.history_len - mask.cache_offset);
  for (int i = 0; i < std::min(causal_rows, q); ++i) {
    for (int j = mask.global_position(i) + 1; j < k; ++j) {
      if (mask.allow(i, j)) {
        return MaskViolation{i, j, "causality breach in history region"};
      }
    }
  }
  return std::nullopt;
}

std::string to_debug_string(const HybridAttentionMask& mask) {
  std::ostringstream out;
  for (int i = 0; i < mask.query_len(); ++i) {
    for (int j = 0; j < mask.key_len(); ++j) {
      out << (mask.allow(i, j) ? '#' : '.');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace allmask
