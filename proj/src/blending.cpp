#include "pnpmix/blending.hpp"

#include "pnpmix/errors.hpp"

namespace pnpmix {

void BlendConfig::validate() const {
    if (!(alpha >= 0.0f)) throw parameter_error("BlendConfig: alpha must be >= 0");
    if (!(beta >= 0.0f && beta <= 1.0f)) throw parameter_error("BlendConfig: beta must be in [0,1]");
    if (me_margin < 0) throw parameter_error("BlendConfig: me_margin must be >= 0");
    if (dilution_legacy && dilution_pp) {
        throw parameter_error("BlendConfig: dilution_legacy and dilution_pp are mutually exclusive");
    }
}

std::pair<LatentTensor, std::vector<LatentTensor>> clone_background(const LatentTensor& z_back, int n) {
    if (n < 1) throw parameter_error("clone_background: need n >= 1 concepts, got " + std::to_string(n));
    std::vector<LatentTensor> refs(static_cast<size_t>(n), z_back);
    return {z_back, std::move(refs)};
}

LatentTensor mix_noise(const LatentTensor& eps_back, const std::vector<LatentTensor>& eps_refs,
                       const MaskSet& maskset) {
    if (static_cast<int>(eps_refs.size()) != maskset.n()) {
        throw parameter_error("mix_noise: " + std::to_string(eps_refs.size()) + " noise maps for " +
                              std::to_string(maskset.n()) + " object masks");
    }
    if (maskset.n() == 0) throw parameter_error("mix_noise: need at least one concept");
    for (const auto& e : eps_refs) {
        if (!e.same_shape(eps_back)) {
            throw parameter_error("mix_noise: noise shapes differ (" + eps_back.shape_str() + " vs " +
                                  e.shape_str() + ")");
        }
    }
    LatentTensor out = hadamard(eps_back, maskset.background);
    for (int i = 0; i < maskset.n(); ++i) {
        LatentTensor piece = hadamard(eps_refs[static_cast<size_t>(i)], maskset.objects[static_cast<size_t>(i)]);
        for (size_t k = 0; k < out.data.size(); ++k) out.data[k] += piece.data[k];
    }
    return out;
}

LatentTensor resynthesize_ref_noise(const LatentTensor& eps_ref_i, const LatentTensor& eps_back,
                                    const BinaryMask& m_i) {
    if (!eps_ref_i.same_shape(eps_back)) {
        throw dimension_error("resynthesize_ref_noise: shape " + eps_ref_i.shape_str() + " does not match " +
                              eps_back.shape_str());
    }
    if (eps_ref_i.height != m_i.height || eps_ref_i.width != m_i.width) {
        throw dimension_error("resynthesize_ref_noise: mask shape " + m_i.shape_str() +
                              " does not match tensor " + eps_ref_i.shape_str());
    }
    LatentTensor out(eps_ref_i.channels, eps_ref_i.height, eps_ref_i.width);
    size_t plane = static_cast<size_t>(out.height) * out.width;
    for (int c = 0; c < out.channels; ++c) {
        for (size_t i = 0; i < plane; ++i) {
            size_t k    = c * plane + i;
            out.data[k] = m_i.bits[i] ? eps_ref_i.data[k] : eps_back.data[k];
        }
    }
    return out;
}

namespace {

LatentTensor dilute(const LatentTensor& source, const LatentTensor& z_ref_i, const BinaryMask& m_e, float beta,
                    bool convex, const char* who) {
    if (!source.same_shape(z_ref_i)) {
        throw dimension_error(std::string(who) + ": shape " + source.shape_str() + " does not match " +
                              z_ref_i.shape_str());
    }
    if (source.height != m_e.height || source.width != m_e.width) {
        throw dimension_error(std::string(who) + ": mask shape " + m_e.shape_str() + " does not match tensor " +
                              source.shape_str());
    }
    if (!(beta >= 0.0f && beta <= 1.0f)) throw parameter_error(std::string(who) + ": beta must be in [0,1]");
    LatentTensor out(z_ref_i.channels, z_ref_i.height, z_ref_i.width);
    size_t plane = static_cast<size_t>(out.height) * out.width;
    for (int c = 0; c < out.channels; ++c) {
        for (size_t i = 0; i < plane; ++i) {
            size_t k = c * plane + i;
            if (m_e.bits[i]) {
                out.data[k] = z_ref_i.data[k];
            } else if (convex) {
                out.data[k] = beta * source.data[k] + (1.0f - beta) * z_ref_i.data[k];
            } else {
                out.data[k] = beta * source.data[k];
            }
        }
    }
    return out;
}

}  // namespace

LatentTensor background_dilution_pp(const LatentTensor& z_inpaint, const LatentTensor& z_ref_i,
                                    const BinaryMask& m_e, float beta, bool convex) {
    return dilute(z_inpaint, z_ref_i, m_e, beta, convex, "background_dilution_pp");
}

LatentTensor background_dilution_legacy(const LatentTensor& z_back, const LatentTensor& z_ref_i,
                                        const BinaryMask& m_e, float beta, bool convex) {
    return dilute(z_back, z_ref_i, m_e, beta, convex, "background_dilution_legacy");
}

}  // namespace pnpmix
