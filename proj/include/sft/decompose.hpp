#pragma once

#include <string>
#include <vector>

#include "sft/matrix.hpp"
#include "sft/nn.hpp"

namespace sft {

// w = u * diag(sigma) * v with orthonormal u columns / v rows and sigma
// descending. Computed in 64-bit, stored in single precision.
struct SvdResult {
    Matrix u;                   // n x r, single precision
    std::vector<double> sigma;  // r values, descending, >= 0 (kept in 64-bit)
    Matrix v;                   // r x h, single precision

    int rank() const { return static_cast<int>(sigma.size()); }
    Matrix reconstruct() const;  // u * diag(sigma) * v
};

enum class ResidualMode {
    eliminated,          // skip connection around the split FFN removed
    kept_local,          // kept; valid for single-process simulation only
    kept_with_transfer,  // kept; block input shipped to the cloud every iteration
};

const char* residual_mode_name(ResidualMode m);
ResidualMode residual_mode_from_name(const std::string& name);

struct SplitPlan {
    int split_layer = 0;  // block index l in [1, n_blocks]
    int rank = 0;         // R, in [1, min(d_model, ffn_dim)]
    ResidualMode residual_mode = ResidualMode::eliminated;

    void validate(const ModelConfig& cfg) const;
};

// Full SVD via one-sided Jacobi rotations (64-bit accumulation). Deterministic:
// fixed sweep order plus a sign convention (each u column's largest-magnitude
// entry is non-negative) make repeated calls bit-identical.
SvdResult svd(const Matrix& w);

// Keeps the leading r singular triplets.
SvdResult truncate(const SvdResult& s, int r);

// Relative Frobenius error of the best rank-r approximation, ||w - w_r|| / ||w||.
double reconstruction_error(const Matrix& w, int r);

// Rewrites block `plan.split_layer`'s down-projection (W in HxD, bias b) into
// three trainable layers: ffn1 (weight u, no bias), ffn2 (diagonal sigma),
// ffn3 (weight v, bias b). ResidualMode::eliminated also removes the residual
// connection around that FFN. Pure: returns the rewritten stack.
LayerStack decompose_ffn(const LayerStack& stack, const SplitPlan& plan);

}  // namespace sft
