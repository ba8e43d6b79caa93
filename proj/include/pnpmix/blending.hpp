#ifndef PNPMIX_BLENDING_HPP
#define PNPMIX_BLENDING_HPP

#include <utility>
#include <vector>

#include "pnpmix/masks.hpp"
#include "pnpmix/tensor.hpp"

namespace pnpmix {

// Ablation-ladder stage toggles. Key/value replacement in self-attention is
// part of every stage; value_guidance controls whether alpha is applied on
// top of it.
struct BlendConfig {
    float alpha   = 0.15f;  // appearance guidance scale
    float beta    = 0.8f;   // dilution scale
    int me_margin = 8;      // expanded-rectangle margin at latent resolution

    bool guided_attention = true;
    bool value_guidance   = true;
    bool dilution_legacy  = false;
    bool dilution_pp      = true;
    bool ref_noise_mix    = true;
    // experimental: convex blend outside M_E instead of the literal
    // beta-weighted exterior
    bool dilution_convex = false;

    void validate() const;
};

// n+1 independent copies of the background latent: one output latent plus n
// reference latents.
std::pair<LatentTensor, std::vector<LatentTensor>> clone_background(const LatentTensor& z_back, int n);

// eps_gui = eps_back (.) M_B + sum_i eps_refs[i] (.) M_i
LatentTensor mix_noise(const LatentTensor& eps_back, const std::vector<LatentTensor>& eps_refs,
                       const MaskSet& maskset);

// eps_ref_i (.) M_i + eps_back (.) (1 - M_i)
LatentTensor resynthesize_ref_noise(const LatentTensor& eps_ref_i, const LatentTensor& eps_back,
                                    const BinaryMask& m_i);

// z_inpaint (.) beta (1 - M_E) + z_ref_i (.) M_E. The exterior weight is
// beta with no compensating (1 - beta) term; `convex` switches to the
// experimental convex blend beta*inpaint + (1-beta)*ref outside M_E.
LatentTensor background_dilution_pp(const LatentTensor& z_inpaint, const LatentTensor& z_ref_i,
                                    const BinaryMask& m_e, float beta, bool convex = false);

// Same mixing with the original background latent, reproducing the earlier
// dilution variant.
LatentTensor background_dilution_legacy(const LatentTensor& z_back, const LatentTensor& z_ref_i,
                                        const BinaryMask& m_e, float beta, bool convex = false);

}  // namespace pnpmix

#endif
