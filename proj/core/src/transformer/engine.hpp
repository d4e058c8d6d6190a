#pragma once

// Internal dense kernels for the decoder. Float for training and analysis,
// double for gradient verification.

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gatescope/transformer/interventions.hpp"
#include "gatescope/transformer/model.hpp"

namespace gatescope::transformer::detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct LayerCache {
    Mat<T> x_in;
    Mat<T> xhat1;
    ColVec<T> rstd1;
    Mat<T> h1;
    Mat<T> q;
    Mat<T> k;
    Mat<T> v;
    std::vector<Mat<T>> probs;
    Mat<T> ctx;
    Mat<T> x_mid;
    Mat<T> xhat2;
    ColVec<T> rstd2;
    Mat<T> h2;
    Mat<T> pre;
    Mat<T> act;
};

template <typename T>
struct Workspace {
    std::vector<TokenId> ids;
    std::vector<LayerCache<T>> layers;
    Mat<T> x_final;
    Mat<T> xhat_f;
    ColVec<T> rstd_f;
    Mat<T> h_f;
    Mat<T> logits;
    /// patched[l][i]: row i was overwritten before block l (l == n_layers: before the final norm).
    std::vector<std::vector<bool>> patched;
};

using LayerMasks = std::vector<std::vector<unsigned char>>;

template <typename T>
class Engine {
public:
    Engine(const ModelConfig& config, const T* params);

    const ModelConfig& config() const { return config_; }

    /// ids must already be validated against vocab_size and max_seq_len;
    /// masks come from KnockoutSpec::layer_masks (one entry per layer).
    void forward(std::span<const TokenId> ids, const LayerMasks& masks, const PatchSpec& patch,
                 Workspace<T>& ws) const;

    /// Accumulates dLoss/dParams into `grad` (same layout as params) given dLoss/dLogits.
    void backward(const Workspace<T>& ws, const Mat<T>& dlogits, T* grad) const;

private:
    struct LayerOffsets {
        std::size_t ln1_g, ln1_b, w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
        std::size_t ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
    };

    ModelConfig config_;
    const T* params_;
    std::size_t tok_emb_ = 0;
    std::size_t pos_emb_ = 0;
    std::vector<LayerOffsets> layers_;
    std::size_t lnf_g_ = 0;
    std::size_t lnf_b_ = 0;
    std::size_t unembed_ = 0;
};

extern template class Engine<float>;
extern template class Engine<double>;

}  // namespace gatescope::transformer::detail
