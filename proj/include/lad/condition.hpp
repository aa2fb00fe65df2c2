#pragma once

#include <cmath>
#include <vector>

#include "lad/codec.hpp"
#include "lad/topo.hpp"
#include "lad/volume.hpp"

// Guidance signal c = (content, structure). Content: the mask cast into the
// codec's input range and pushed through the frozen encoder, then two small
// trainable convs that keep the latent geometry. Structure: per-slice Betti
// counts, log-compressed so rare high-count slices cannot dominate the
// embedding. The null condition (unconditional identifier) is an all-zero
// content grid plus a learned token inside the denoiser.

namespace lad::condition {

struct ConditionSettings {
    bool log_normalize = true;  // v -> log1p(v) / log(17)

    std::vector<float> normalize(const std::vector<int>& counts) const {
        std::vector<float> out(counts.size());
        const double scale = 1.0 / std::log(17.0);
        for (size_t i = 0; i < counts.size(); ++i)
            out[i] = log_normalize ? static_cast<float>(std::log1p(static_cast<double>(counts[i])) * scale)
                                   : static_cast<float>(counts[i]);
        return out;
    }
};

struct ConditionVector {
    Tensor content;               // {C, D/4, H/4, W/4}; all-zero when null
    std::vector<float> structure;  // length 6*D, normalized counts; empty when null
    bool is_null = false;
};

// The two trainable convolution layers of the content path (C -> C -> C,
// stride 1). They train jointly with the diffusion model; the codec encoder
// in front of them stays frozen.
struct ContentExtractor {
    nn::Conv3d c0, c1;

    ContentExtractor() = default;
    ContentExtractor(int channels, Rng& rng) : c0(channels, channels, 3, 1, 1, rng), c1(channels, channels, 3, 1, 1, rng) {}

    Var operator()(Tape& tp, Var mask_latent) const { return c1(tp, ops::silu(tp, c0(tp, mask_latent))); }
    void collect(const std::string& p, nn::NamedParams& out) const {
        c0.collect(p + ".c0", out);
        c1.collect(p + ".c1", out);
    }
};

// Frozen-encoder pass over the mask; cheap to precompute once per mask.
inline Tensor mask_latent(const codec::CodecModel& codec_model, const LabelMask& mask) {
    return codec_model.encode_tensor(mask_to_tensor(mask)).data;
}

// Full condition assembly (inference path; the trainable convs run without
// recording). During diffusion training the convs run on-tape instead.
inline ConditionVector assemble_condition(const LabelMask& mask, const codec::CodecModel& codec_model,
                                          const ContentExtractor& extractor, const ConditionSettings& settings) {
    ConditionVector c;
    Tape tp;
    tp.recording = false;
    c.content = extractor(tp, make_leaf(mask_latent(codec_model, mask)))->val;
    c.structure = settings.normalize(topo::structure_vector_volume(mask));
    c.is_null = false;
    return c;
}

inline ConditionVector null_condition(const std::array<int, 3>& latent_spatial, int latent_channels) {
    ConditionVector c;
    c.content = Tensor({latent_channels, latent_spatial[0], latent_spatial[1], latent_spatial[2]});
    c.is_null = true;
    return c;
}

}  // namespace lad::condition
