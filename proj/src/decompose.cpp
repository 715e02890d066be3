#include "sft/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sft {

Matrix SvdResult::reconstruct() const {
    Matrix us = u;  // u * diag(sigma)
    for (int i = 0; i < us.rows; ++i) {
        float* row = us.row_ptr(i);
        for (int j = 0; j < us.cols; ++j) row[j] *= static_cast<float>(sigma[static_cast<size_t>(j)]);
    }
    return matmul(us, v);
}

const char* residual_mode_name(ResidualMode m) {
    switch (m) {
        case ResidualMode::eliminated: return "eliminated";
        case ResidualMode::kept_local: return "kept_local";
        case ResidualMode::kept_with_transfer: return "kept_with_transfer";
    }
    return "?";
}

ResidualMode residual_mode_from_name(const std::string& name) {
    if (name == "eliminated") return ResidualMode::eliminated;
    if (name == "kept_local") return ResidualMode::kept_local;
    if (name == "kept_with_transfer") return ResidualMode::kept_with_transfer;
    throw std::invalid_argument("unknown residual mode: " + name);
}

void SplitPlan::validate(const ModelConfig& cfg) const {
    if (split_layer < 1 || split_layer > cfg.n_blocks)
        throw std::invalid_argument("SplitPlan: split_layer " + std::to_string(split_layer) +
                                    " outside [1, " + std::to_string(cfg.n_blocks) + "]");
    const int max_rank = std::min(cfg.d_model, cfg.ffn_dim);
    if (rank < 1 || rank > max_rank)
        throw std::invalid_argument("SplitPlan: rank " + std::to_string(rank) + " outside [1, " +
                                    std::to_string(max_rank) + "]");
}

namespace {

constexpr int kMaxSweeps = 30;
constexpr double kRotTol = 1e-12;

// Column-major double workspace for the Jacobi sweeps.
struct ColMat {
    int rows, cols;
    std::vector<double> d;  // column-major
    explicit ColMat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}
    double* col(int j) { return d.data() + static_cast<size_t>(j) * rows; }
    const double* col(int j) const { return d.data() + static_cast<size_t>(j) * rows; }
};

// One-sided Jacobi (Hestenes): right rotations make the columns of b
// orthogonal; the accumulated rotations form the right factor.
void jacobi_orthogonalize(ColMat& b, ColMat& w, const Matrix& input) {
    const int q = b.cols;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        double worst = 0.0;
        for (int p = 0; p < q - 1; ++p) {
            for (int r = p + 1; r < q; ++r) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                const double* bp = b.col(p);
                const double* br = b.col(r);
                for (int i = 0; i < b.rows; ++i) {
                    alpha += bp[i] * bp[i];
                    beta += br[i] * br[i];
                    gamma += bp[i] * br[i];
                }
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0) continue;
                worst = std::max(worst, std::fabs(gamma) / denom);
                if (std::fabs(gamma) <= kRotTol * denom) continue;
                rotated = true;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* bpm = b.col(p);
                double* brm = b.col(r);
                for (int i = 0; i < b.rows; ++i) {
                    const double x = bpm[i], y = brm[i];
                    bpm[i] = c * x - s * y;
                    brm[i] = s * x + c * y;
                }
                double* wpm = w.col(p);
                double* wrm = w.col(r);
                for (int i = 0; i < w.rows; ++i) {
                    const double x = wpm[i], y = wrm[i];
                    wpm[i] = c * x - s * y;
                    wrm[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) return;
        if (sweep == kMaxSweeps - 1)
            throw std::runtime_error("svd: Jacobi did not converge on " + input.shape_str() +
                                     " after " + std::to_string(kMaxSweeps) +
                                     " sweeps (worst off-diagonal ratio " + std::to_string(worst) +
                                     ")");
    }
}

// Replaces near-null columns of u with an orthonormal completion so that
// u^T u = I holds for rank-deficient inputs.
void complete_null_columns(ColMat& u, const std::vector<double>& sigma, double sigma_max) {
    const double tol = sigma_max * 1e-13;
    for (int j = 0; j < u.cols; ++j) {
        if (sigma[static_cast<size_t>(j)] > tol && sigma_max > 0.0) continue;
        // Gram-Schmidt a canonical basis vector against all other columns.
        for (int e = 0; e < u.rows; ++e) {
            std::vector<double> cand(static_cast<size_t>(u.rows), 0.0);
            cand[static_cast<size_t>(e)] = 1.0;
            for (int k = 0; k < u.cols; ++k) {
                if (k == j) continue;
                if (k > j && sigma[static_cast<size_t>(k)] <= tol) continue;  // not yet fixed
                const double* ck = u.col(k);
                double dot = 0.0;
                for (int i = 0; i < u.rows; ++i) dot += ck[i] * cand[static_cast<size_t>(i)];
                for (int i = 0; i < u.rows; ++i) cand[static_cast<size_t>(i)] -= dot * ck[i];
            }
            double norm = 0.0;
            for (double vv : cand) norm += vv * vv;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                double* cj = u.col(j);
                for (int i = 0; i < u.rows; ++i) cj[i] = cand[static_cast<size_t>(i)] / norm;
                break;
            }
        }
    }
}

}  // namespace

SvdResult svd(const Matrix& input) {
    if (input.rows < 1 || input.cols < 1)
        throw std::invalid_argument("svd: empty matrix " + input.shape_str());
    if (!input.all_finite())
        throw std::invalid_argument("svd: input has non-finite entries");

    const bool transposed = input.rows < input.cols;  // work on the tall side
    const int p = transposed ? input.cols : input.rows;
    const int q = transposed ? input.rows : input.cols;

    ColMat b(p, q);
    for (int i = 0; i < input.rows; ++i)
        for (int j = 0; j < input.cols; ++j) {
            const double val = static_cast<double>(input.at(i, j));
            if (transposed)
                b.col(i)[j] = val;
            else
                b.col(j)[i] = val;
        }
    ColMat w(q, q);
    for (int j = 0; j < q; ++j) w.col(j)[j] = 1.0;

    jacobi_orthogonalize(b, w, input);

    std::vector<double> sig(static_cast<size_t>(q), 0.0);
    double sigma_max = 0.0;
    for (int j = 0; j < q; ++j) {
        double norm = 0.0;
        const double* cj = b.col(j);
        for (int i = 0; i < p; ++i) norm += cj[i] * cj[i];
        sig[static_cast<size_t>(j)] = std::sqrt(norm);
        sigma_max = std::max(sigma_max, sig[static_cast<size_t>(j)]);
    }
    ColMat left(p, q);  // b with unit columns
    for (int j = 0; j < q; ++j) {
        const double s = sig[static_cast<size_t>(j)];
        double* lj = left.col(j);
        const double* bj = b.col(j);
        if (s > sigma_max * 1e-13 && sigma_max > 0.0)
            for (int i = 0; i < p; ++i) lj[i] = bj[i] / s;
    }
    complete_null_columns(left, sig, sigma_max);

    // Sort triplets by descending singular value (stable for determinism).
    std::vector<int> order(static_cast<size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&sig](int a, int c) {
        return sig[static_cast<size_t>(a)] > sig[static_cast<size_t>(c)];
    });

    // input = U * diag(sig) * W^T on the tall side; transposed inputs swap roles.
    SvdResult res;
    res.sigma.resize(static_cast<size_t>(q));
    res.u = Matrix(input.rows, q);
    res.v = Matrix(q, input.cols);
    for (int jj = 0; jj < q; ++jj) {
        const int j = order[static_cast<size_t>(jj)];
        res.sigma[static_cast<size_t>(jj)] = sig[static_cast<size_t>(j)];
        const double* uc = transposed ? w.col(j) : left.col(j);
        const double* vc = transposed ? left.col(j) : w.col(j);
        const int un = input.rows, vn = input.cols;

        // Sign convention: the largest-magnitude entry of each u column is
        // non-negative (first index wins ties).
        int arg = 0;
        for (int i = 1; i < un; ++i)
            if (std::fabs(uc[i]) > std::fabs(uc[arg])) arg = i;
        const double flip = uc[arg] < 0.0 ? -1.0 : 1.0;

        for (int i = 0; i < un; ++i) res.u.at(i, jj) = static_cast<float>(flip * uc[i]);
        for (int i = 0; i < vn; ++i) res.v.at(jj, i) = static_cast<float>(flip * vc[i]);
    }
    return res;
}

SvdResult truncate(const SvdResult& s, int r) {
    if (r < 1 || r > s.rank())
        throw std::invalid_argument("truncate: rank " + std::to_string(r) + " outside [1, " +
                                    std::to_string(s.rank()) + "]");
    SvdResult out;
    out.sigma.assign(s.sigma.begin(), s.sigma.begin() + r);
    out.u = Matrix(s.u.rows, r);
    for (int i = 0; i < s.u.rows; ++i)
        for (int j = 0; j < r; ++j) out.u.at(i, j) = s.u.at(i, j);
    out.v = Matrix(r, s.v.cols);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < s.v.cols; ++j) out.v.at(i, j) = s.v.at(i, j);
    return out;
}

double reconstruction_error(const Matrix& w, int r) {
    const SvdResult full = svd(w);
    if (r < 1 || r > full.rank())
        throw std::invalid_argument("reconstruction_error: rank " + std::to_string(r) +
                                    " outside [1, " + std::to_string(full.rank()) + "]");
    const Matrix approx = truncate(full, r).reconstruct();
    return relative_frobenius_error(approx, w);
}

LayerStack decompose_ffn(const LayerStack& stack, const SplitPlan& plan) {
    plan.validate(stack.cfg);
    const std::string blk = "blk" + std::to_string(plan.split_layer);
    for (const auto& layer : stack.layers)
        if (layer.name.rfind("ffn", 0) == 0)
            throw std::invalid_argument("decompose_ffn: stack already decomposed (" + layer.name +
                                        ")");

    LayerStack out = stack;
    const int down_idx = out.require_layer(blk + ".down");
    const Layer& down = out.layers[static_cast<size_t>(down_idx)];
    const Matrix w = down.param("w").value;  // H x d
    const Matrix bias = down.param("b").value;

    const SvdResult factors = truncate(svd(w), plan.rank);
    const std::string suffix = "." + std::to_string(plan.split_layer);

    Layer ffn1{.kind = LayerKind::ffn1, .name = "ffn1" + suffix};
    ffn1.params.push_back({"w", factors.u, Matrix(factors.u.rows, factors.u.cols)});

    Layer ffn2{.kind = LayerKind::ffn2, .name = "ffn2" + suffix};
    Matrix sigma_row(1, plan.rank);
    for (int j = 0; j < plan.rank; ++j)
        sigma_row.data[static_cast<size_t>(j)] = static_cast<float>(factors.sigma[static_cast<size_t>(j)]);
    ffn2.params.push_back({"s", sigma_row, Matrix(1, plan.rank)});

    Layer ffn3{.kind = LayerKind::ffn3, .name = "ffn3" + suffix};
    ffn3.params.push_back({"w", factors.v, Matrix(factors.v.rows, factors.v.cols)});
    ffn3.params.push_back({"b", bias, Matrix(bias.rows, bias.cols)});

    out.layers.erase(out.layers.begin() + down_idx);
    out.layers.insert(out.layers.begin() + down_idx, {std::move(ffn1), std::move(ffn2),
                                                      std::move(ffn3)});

    if (plan.residual_mode == ResidualMode::eliminated) {
        const int res_idx = out.require_layer(blk + ".res2");
        out.layers.erase(out.layers.begin() + res_idx);
    }
    return out;
}

}  // namespace sft
