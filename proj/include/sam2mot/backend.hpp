#pragma once

#include <cstdint>
#include <map>

#include "sam2mot/mask.hpp"

namespace sam2mot {

using Handle = std::uint64_t;

struct Propagation {
  Mask mask;
  double logits;
};

/// A promptable video segmenter with a per-object memory bank.
///
/// One instance is one session: calls are made by a single writer, strictly
/// in frame order. `propagate` must report every live handle exactly once,
/// and a purge issued for frame t must be honoured by the next propagate.
class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;

  /// Conditions a new object on `prompt` at `frame`.
  virtual Handle init_object(const Box& prompt, long frame) = 0;

  /// Advances every live object to `frame`.
  virtual std::map<Handle, Propagation> propagate(long frame) = 0;

  /// Drops the non-conditional memory entry of `handle` for `frame`.
  virtual void purge_memory(Handle handle, long frame) = 0;

  /// Re-prompts an existing object with a fresh box.
  virtual void recondition(Handle handle, const Box& prompt, long frame) = 0;

  virtual void drop_object(Handle handle) = 0;
};

}  // namespace sam2mot
