#pragma once

#include "iclseg/core.hpp"
#include "iclseg/encoder.hpp"

namespace iclseg {

enum class DecoderKind { label_transfer, external };
enum class UpsampleMode { nearest, bilinear };

struct DecoderConfig {
    DecoderKind kind = DecoderKind::label_transfer;
    UpsampleMode upsample = UpsampleMode::nearest;
    float logit_scale = 8.0f;
};

/// Turns readout values into per-pixel foreground logits. The bundled
/// label-transfer decoder maps a dim-1 value v in [0,1] to
/// logit = logit_scale * (2v - 1) per patch, then upsamples to the target
/// dimensions. `query_keys` is unused by label transfer but part of the
/// interface so learned decoders can plug in without an API change.
LogitMap decode(const ValueGrid& readout, int target_h, int target_w,
                const DecoderConfig& config = {}, const FeatureGrid* query_keys = nullptr);

}  // namespace iclseg
