#include "sft/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sft {

namespace {

constexpr float kLayerNormEps = 1e-5f;
constexpr float kGeluC0 = 0.7978845608f;  // sqrt(2/pi)
constexpr float kGeluC1 = 0.044715f;

Matrix column_sums(const Matrix& m) {
    Matrix out(1, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        const float* row = m.row_ptr(i);
        for (int j = 0; j < m.cols; ++j) out.data[j] += row[j];
    }
    return out;
}

// Copies head block h (dh columns) of a (B*S)xd matrix, rows [r0, r0+S).
Matrix head_block(const Matrix& m, int r0, int s, int h, int dh) {
    Matrix out(s, dh);
    for (int i = 0; i < s; ++i) {
        const float* src = m.row_ptr(r0 + i) + h * dh;
        std::copy(src, src + dh, out.row_ptr(i));
    }
    return out;
}

void add_head_block(Matrix& dst, const Matrix& blk, int r0, int h, int dh) {
    for (int i = 0; i < blk.rows; ++i) {
        float* d = dst.row_ptr(r0 + i) + h * dh;
        const float* s = blk.row_ptr(i);
        for (int j = 0; j < dh; ++j) d[j] += s[j];
    }
}

}  // namespace

void ModelConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v < 1) throw std::invalid_argument(std::string("ModelConfig: ") + what + " must be >= 1");
    };
    positive(vocab_size, "vocab_size");
    positive(seq_len, "seq_len");
    positive(d_model, "d_model");
    positive(ffn_dim, "ffn_dim");
    positive(n_blocks, "n_blocks");
    positive(n_heads, "n_heads");
    positive(n_classes, "n_classes");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
    if (ffn_dim < d_model)
        throw std::invalid_argument("ModelConfig: ffn_dim must be >= d_model");
}

uint64_t ModelConfig::hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](int v) {
        for (int i = 0; i < 4; ++i) {
            h ^= static_cast<uint64_t>((static_cast<uint32_t>(v) >> (8 * i)) & 0xff);
            h *= 0x100000001b3ULL;
        }
    };
    mix(vocab_size);
    mix(seq_len);
    mix(d_model);
    mix(ffn_dim);
    mix(n_blocks);
    mix(n_heads);
    mix(n_classes);
    return h;
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::embedding: return "embedding";
        case LayerKind::attention: return "attention";
        case LayerKind::layer_norm: return "layer_norm";
        case LayerKind::linear_up: return "linear_up";
        case LayerKind::gelu: return "gelu";
        case LayerKind::linear_down: return "linear_down";
        case LayerKind::residual_add: return "residual_add";
        case LayerKind::classifier: return "classifier";
        case LayerKind::ffn1: return "ffn1";
        case LayerKind::ffn2: return "ffn2";
        case LayerKind::ffn3: return "ffn3";
    }
    return "?";
}

Param& Layer::param(const std::string& pname) {
    for (auto& p : params)
        if (p.name == pname) return p;
    throw std::invalid_argument("layer " + name + ": no parameter named " + pname);
}

const Param& Layer::param(const std::string& pname) const {
    return const_cast<Layer*>(this)->param(pname);
}

int LayerStack::find_layer(const std::string& name) const {
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == name) return static_cast<int>(i);
    return -1;
}

int LayerStack::require_layer(const std::string& name) const {
    const int i = find_layer(name);
    if (i < 0) throw std::invalid_argument("no layer named " + name);
    return i;
}

const Matrix& LayerStack::activation_input(const std::string& layer_name) const {
    if (acts_.empty()) throw std::runtime_error("activation_input: no forward pass cached");
    return acts_[static_cast<size_t>(require_layer(layer_name))];
}

const Matrix& LayerStack::output() const {
    if (acts_.empty()) throw std::runtime_error("output: no forward pass cached");
    return acts_.back();
}

void LayerStack::inject_grad(const std::string& layer_name, Matrix g) {
    require_layer(layer_name);
    auto it = pending_inject_.find(layer_name);
    if (it == pending_inject_.end())
        pending_inject_.emplace(layer_name, std::move(g));
    else
        add_inplace(it->second, g);
}

std::vector<std::pair<std::string, Param*>> LayerStack::named_params() {
    std::vector<std::pair<std::string, Param*>> out;
    for (auto& layer : layers)
        for (auto& p : layer.params) out.emplace_back(layer.name + "." + p.name, &p);
    return out;
}

std::vector<std::pair<std::string, const Param*>> LayerStack::named_params() const {
    std::vector<std::pair<std::string, const Param*>> out;
    for (const auto& layer : layers)
        for (const auto& p : layer.params) out.emplace_back(layer.name + "." + p.name, &p);
    return out;
}

LayerStack LayerStack::slice(int begin, int end) const {
    if (begin < 0 || end > static_cast<int>(layers.size()) || begin > end)
        throw std::invalid_argument("LayerStack::slice: bad range");
    LayerStack out;
    out.cfg = cfg;
    out.layers.assign(layers.begin() + begin, layers.begin() + end);
    return out;
}

// ---------------------------------------------------------------------------
// per-layer forward
// ---------------------------------------------------------------------------

namespace {

Matrix forward_embedding(const Layer& layer, const Matrix& ids, const ModelConfig& cfg) {
    if (ids.cols != cfg.seq_len)
        throw std::invalid_argument("embedding: expected " + std::to_string(cfg.seq_len) +
                                    " token columns, got " + ids.shape_str());
    const Matrix& tok = layer.param("tok").value;
    const Matrix& pos = layer.param("pos").value;
    const int b = ids.rows, s = ids.cols, d = tok.cols;
    Matrix out(b * s, d);
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < s; ++j) {
            const float raw = ids.at(i, j);
            const int id = static_cast<int>(std::lround(raw));
            if (id < 0 || id >= tok.rows || std::fabs(raw - static_cast<float>(id)) > 1e-4f)
                throw std::invalid_argument("embedding: token id " + std::to_string(raw) +
                                            " outside vocab of " + std::to_string(tok.rows));
            float* orow = out.row_ptr(i * s + j);
            const float* trow = tok.row_ptr(id);
            const float* prow = pos.row_ptr(j);
            for (int c = 0; c < d; ++c) orow[c] = trow[c] + prow[c];
        }
    }
    return out;
}

Matrix forward_linear(const Layer& layer, const Matrix& x, bool with_bias) {
    Matrix y = matmul(x, layer.param("w").value);
    if (with_bias) y = add_row_broadcast(y, layer.param("b").value);
    return y;
}

Matrix forward_gelu(const Matrix& x) {
    Matrix y = x;
    for (float& v : y.data) {
        const float u = kGeluC0 * (v + kGeluC1 * v * v * v);
        v = 0.5f * v * (1.0f + std::tanh(u));
    }
    return y;
}

Matrix forward_layer_norm(Layer& layer, const Matrix& x) {
    const Matrix& gamma = layer.param("gamma").value;
    const Matrix& beta = layer.param("beta").value;
    const int d = x.cols;
    Matrix y(x.rows, d);
    layer.norm_xhat = Matrix(x.rows, d);
    layer.norm_inv_std.assign(static_cast<size_t>(x.rows), 0.0f);
    const float inv_d = 1.0f / static_cast<float>(d);
    for (int i = 0; i < x.rows; ++i) {
        const float* row = x.row_ptr(i);
        float mean = 0.0f;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean *= inv_d;
        float var = 0.0f;
        for (int j = 0; j < d; ++j) {
            const float c = row[j] - mean;
            var += c * c;
        }
        var *= inv_d;
        const float inv_std = 1.0f / std::sqrt(var + kLayerNormEps);
        layer.norm_inv_std[static_cast<size_t>(i)] = inv_std;
        float* xh = layer.norm_xhat.row_ptr(i);
        float* out = y.row_ptr(i);
        for (int j = 0; j < d; ++j) {
            xh[j] = (row[j] - mean) * inv_std;
            out[j] = gamma.data[j] * xh[j] + beta.data[j];
        }
    }
    return y;
}

Matrix forward_attention(Layer& layer, const Matrix& x, const ModelConfig& cfg) {
    const int d = cfg.d_model, s = cfg.seq_len, heads = cfg.n_heads, dh = d / heads;
    if (x.cols != d || x.rows % s != 0)
        throw std::invalid_argument("attention: input " + x.shape_str() +
                                    " is not (B*" + std::to_string(s) + ")x" + std::to_string(d));
    const int b = x.rows / s;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    layer.attn_q = add_row_broadcast(matmul(x, layer.param("wq").value), layer.param("bq").value);
    layer.attn_k = add_row_broadcast(matmul(x, layer.param("wk").value), layer.param("bk").value);
    layer.attn_v = add_row_broadcast(matmul(x, layer.param("wv").value), layer.param("bv").value);
    layer.attn_probs.assign(static_cast<size_t>(b) * heads, Matrix());
    layer.attn_concat = Matrix(x.rows, d);

    for (int bi = 0; bi < b; ++bi) {
        const int r0 = bi * s;
        for (int h = 0; h < heads; ++h) {
            const Matrix q = head_block(layer.attn_q, r0, s, h, dh);
            const Matrix k = head_block(layer.attn_k, r0, s, h, dh);
            const Matrix v = head_block(layer.attn_v, r0, s, h, dh);
            Matrix probs(s, s);
            for (int i = 0; i < s; ++i) {
                float* prow = probs.row_ptr(i);
                const float* qi = q.row_ptr(i);
                float mx = -std::numeric_limits<float>::infinity();
                for (int j = 0; j < s; ++j) {
                    float dot = 0.0f;
                    const float* kj = k.row_ptr(j);
                    for (int c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                    prow[j] = dot * inv_sqrt_dh;
                    mx = std::max(mx, prow[j]);
                }
                float sum = 0.0f;
                for (int j = 0; j < s; ++j) {
                    prow[j] = std::exp(prow[j] - mx);
                    sum += prow[j];
                }
                const float inv_sum = 1.0f / sum;
                for (int j = 0; j < s; ++j) prow[j] *= inv_sum;
            }
            const Matrix o = matmul(probs, v);
            add_head_block(layer.attn_concat, o, r0, h, dh);
            layer.attn_probs[static_cast<size_t>(bi) * heads + h] = std::move(probs);
        }
    }
    return add_row_broadcast(matmul(layer.attn_concat, layer.param("wo").value),
                             layer.param("bo").value);
}

Matrix forward_ffn2(const Layer& layer, const Matrix& x) {
    const Matrix& s = layer.param("s").value;
    if (s.cols != x.cols)
        throw std::invalid_argument("ffn2: rank " + s.shape_str() + " vs input " + x.shape_str());
    Matrix y = x;
    for (int i = 0; i < y.rows; ++i) {
        float* row = y.row_ptr(i);
        for (int j = 0; j < y.cols; ++j) row[j] *= s.data[j];
    }
    return y;
}

Matrix forward_classifier(Layer& layer, const Matrix& x, const ModelConfig& cfg) {
    const int s = cfg.seq_len;
    if (x.rows % s != 0)
        throw std::invalid_argument("classifier: rows not divisible by seq_len");
    const int b = x.rows / s;
    const float inv_s = 1.0f / static_cast<float>(s);
    layer.pooled = Matrix(b, x.cols);
    for (int bi = 0; bi < b; ++bi) {
        float* prow = layer.pooled.row_ptr(bi);
        for (int i = 0; i < s; ++i) {
            const float* row = x.row_ptr(bi * s + i);
            for (int j = 0; j < x.cols; ++j) prow[j] += row[j];
        }
        for (int j = 0; j < x.cols; ++j) prow[j] *= inv_s;
    }
    return add_row_broadcast(matmul(layer.pooled, layer.param("w").value), layer.param("b").value);
}

}  // namespace

Matrix LayerStack::forward(const Matrix& x) {
    const size_t n = layers.size();
    acts_.assign(n + 1, Matrix());
    acts_[0] = x;
    for (size_t i = 0; i < n; ++i) {
        Layer& layer = layers[i];
        const Matrix& in = acts_[i];
        switch (layer.kind) {
            case LayerKind::embedding:
                acts_[i + 1] = forward_embedding(layer, in, cfg);
                break;
            case LayerKind::attention:
                acts_[i + 1] = forward_attention(layer, in, cfg);
                break;
            case LayerKind::layer_norm:
                acts_[i + 1] = forward_layer_norm(layer, in);
                break;
            case LayerKind::linear_up:
            case LayerKind::linear_down:
            case LayerKind::ffn3:
                acts_[i + 1] = forward_linear(layer, in, true);
                break;
            case LayerKind::ffn1:
                acts_[i + 1] = forward_linear(layer, in, false);
                break;
            case LayerKind::gelu:
                acts_[i + 1] = forward_gelu(in);
                break;
            case LayerKind::ffn2:
                acts_[i + 1] = forward_ffn2(layer, in);
                break;
            case LayerKind::residual_add: {
                const int src = find_layer(layer.skip_source);
                const Matrix& skip = src >= 0 ? acts_[static_cast<size_t>(src)] : aux_input_;
                if (src < 0 && skip.size() == 0)
                    throw std::runtime_error("residual_add " + layer.name + ": skip source " +
                                             layer.skip_source +
                                             " not in stack and no aux input set");
                acts_[i + 1] = add(in, skip);
                break;
            }
            case LayerKind::classifier:
                acts_[i + 1] = forward_classifier(layer, in, cfg);
                break;
        }
    }
    ++forward_epoch_;
    return acts_[n];
}

// ---------------------------------------------------------------------------
// per-layer backward
// ---------------------------------------------------------------------------

namespace {

Matrix backward_embedding(Layer& layer, const Matrix& ids, const Matrix& d_out,
                          const ModelConfig& cfg) {
    Param& tok = layer.param("tok");
    Param& pos = layer.param("pos");
    tok.grad = Matrix(tok.value.rows, tok.value.cols);
    pos.grad = Matrix(pos.value.rows, pos.value.cols);
    const int b = ids.rows, s = cfg.seq_len, d = tok.value.cols;
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < s; ++j) {
            const int id = static_cast<int>(std::lround(ids.at(i, j)));
            const float* g = d_out.row_ptr(i * s + j);
            float* tg = tok.grad.row_ptr(id);
            float* pg = pos.grad.row_ptr(j);
            for (int c = 0; c < d; ++c) {
                tg[c] += g[c];
                pg[c] += g[c];
            }
        }
    }
    return Matrix(ids.rows, ids.cols);  // token ids carry no gradient
}

Matrix backward_linear(Layer& layer, const Matrix& x, const Matrix& d_out, bool with_bias) {
    Param& w = layer.param("w");
    w.grad = matmul(transpose(x), d_out);
    if (with_bias) layer.param("b").grad = column_sums(d_out);
    return matmul(d_out, transpose(w.value));
}

Matrix backward_gelu(const Matrix& x, const Matrix& d_out) {
    Matrix dx(x.rows, x.cols);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const float v = x.data[i];
        const float u = kGeluC0 * (v + kGeluC1 * v * v * v);
        const float t = std::tanh(u);
        const float du = kGeluC0 * (1.0f + 3.0f * kGeluC1 * v * v);
        const float slope = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
        dx.data[i] = d_out.data[i] * slope;
    }
    return dx;
}

Matrix backward_layer_norm(Layer& layer, const Matrix& d_out) {
    Param& gamma = layer.param("gamma");
    Param& beta = layer.param("beta");
    const Matrix& xhat = layer.norm_xhat;
    const int d = xhat.cols;
    gamma.grad = Matrix(1, d);
    beta.grad = Matrix(1, d);
    Matrix dx(xhat.rows, d);
    const float inv_d = 1.0f / static_cast<float>(d);
    for (int i = 0; i < xhat.rows; ++i) {
        const float* dy = d_out.row_ptr(i);
        const float* xh = xhat.row_ptr(i);
        const float inv_std = layer.norm_inv_std[static_cast<size_t>(i)];
        float m1 = 0.0f, m2 = 0.0f;
        for (int j = 0; j < d; ++j) {
            const float dxh = dy[j] * gamma.value.data[j];
            m1 += dxh;
            m2 += dxh * xh[j];
            gamma.grad.data[j] += dy[j] * xh[j];
            beta.grad.data[j] += dy[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        float* out = dx.row_ptr(i);
        for (int j = 0; j < d; ++j) {
            const float dxh = dy[j] * gamma.value.data[j];
            out[j] = inv_std * (dxh - m1 - xh[j] * m2);
        }
    }
    return dx;
}

Matrix backward_attention(Layer& layer, const Matrix& x, const Matrix& d_out,
                          const ModelConfig& cfg) {
    const int d = cfg.d_model, s = cfg.seq_len, heads = cfg.n_heads, dh = d / heads;
    const int b = x.rows / s;
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    Param& wo = layer.param("wo");
    wo.grad = matmul(transpose(layer.attn_concat), d_out);
    layer.param("bo").grad = column_sums(d_out);
    const Matrix d_concat = matmul(d_out, transpose(wo.value));

    Matrix dq(x.rows, d), dk(x.rows, d), dv(x.rows, d);
    for (int bi = 0; bi < b; ++bi) {
        const int r0 = bi * s;
        for (int h = 0; h < heads; ++h) {
            const Matrix q = head_block(layer.attn_q, r0, s, h, dh);
            const Matrix k = head_block(layer.attn_k, r0, s, h, dh);
            const Matrix v = head_block(layer.attn_v, r0, s, h, dh);
            const Matrix d_o = head_block(d_concat, r0, s, h, dh);
            const Matrix& probs = layer.attn_probs[static_cast<size_t>(bi) * heads + h];

            const Matrix d_probs = matmul(d_o, transpose(v));
            Matrix d_scores(s, s);
            for (int i = 0; i < s; ++i) {
                const float* a = probs.row_ptr(i);
                const float* da = d_probs.row_ptr(i);
                float rowdot = 0.0f;
                for (int j = 0; j < s; ++j) rowdot += da[j] * a[j];
                float* ds = d_scores.row_ptr(i);
                for (int j = 0; j < s; ++j) ds[j] = a[j] * (da[j] - rowdot);
            }
            add_head_block(dv, matmul(transpose(probs), d_o), r0, h, dh);
            add_head_block(dq, scale(matmul(d_scores, k), inv_sqrt_dh), r0, h, dh);
            add_head_block(dk, scale(matmul(transpose(d_scores), q), inv_sqrt_dh), r0, h, dh);
        }
    }

    Param& wq = layer.param("wq");
    Param& wk = layer.param("wk");
    Param& wv = layer.param("wv");
    wq.grad = matmul(transpose(x), dq);
    wk.grad = matmul(transpose(x), dk);
    wv.grad = matmul(transpose(x), dv);
    layer.param("bq").grad = column_sums(dq);
    layer.param("bk").grad = column_sums(dk);
    layer.param("bv").grad = column_sums(dv);

    Matrix dx = matmul(dq, transpose(wq.value));
    add_inplace(dx, matmul(dk, transpose(wk.value)));
    add_inplace(dx, matmul(dv, transpose(wv.value)));
    return dx;
}

Matrix backward_ffn2(Layer& layer, const Matrix& x, const Matrix& d_out) {
    Param& s = layer.param("s");
    s.grad = Matrix(1, s.value.cols);
    Matrix dx(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const float* xr = x.row_ptr(i);
        const float* dy = d_out.row_ptr(i);
        float* dxr = dx.row_ptr(i);
        for (int j = 0; j < x.cols; ++j) {
            s.grad.data[j] += dy[j] * xr[j];
            dxr[j] = dy[j] * s.value.data[j];
        }
    }
    return dx;
}

Matrix backward_classifier(Layer& layer, const Matrix& x, const Matrix& d_out,
                           const ModelConfig& cfg) {
    Param& w = layer.param("w");
    w.grad = matmul(transpose(layer.pooled), d_out);
    layer.param("b").grad = column_sums(d_out);
    const Matrix d_pooled = matmul(d_out, transpose(w.value));
    const int s = cfg.seq_len;
    const float inv_s = 1.0f / static_cast<float>(s);
    Matrix dx(x.rows, x.cols);
    for (int bi = 0; bi < d_pooled.rows; ++bi) {
        const float* dp = d_pooled.row_ptr(bi);
        for (int i = 0; i < s; ++i) {
            float* row = dx.row_ptr(bi * s + i);
            for (int j = 0; j < x.cols; ++j) row[j] = dp[j] * inv_s;
        }
    }
    return dx;
}

}  // namespace

Matrix LayerStack::backward(const Matrix& d_out) {
    const size_t n = layers.size();
    if (forward_epoch_ == 0 || acts_.size() != n + 1)
        throw std::runtime_error("backward: no forward pass to backpropagate through");
    if (backward_epoch_ >= forward_epoch_)
        throw std::runtime_error("backward: cache epoch mismatch (forward already consumed)");
    if (d_out.rows != acts_[n].rows || d_out.cols != acts_[n].cols)
        throw std::invalid_argument("backward: d_out " + d_out.shape_str() +
                                    " does not match output " + acts_[n].shape_str());

    std::vector<Matrix> pending(n + 1);
    for (auto& [name, g] : pending_inject_) {
        const size_t slot = static_cast<size_t>(require_layer(name));
        if (pending[slot].size() == 0)
            pending[slot] = g;
        else
            add_inplace(pending[slot], g);
    }
    pending_inject_.clear();

    aux_grad_ = Matrix();

    Matrix cur = d_out;
    for (int i = static_cast<int>(n) - 1; i >= 0; --i) {
        if (pending[static_cast<size_t>(i) + 1].size() > 0)
            add_inplace(cur, pending[static_cast<size_t>(i) + 1]);
        Layer& layer = layers[static_cast<size_t>(i)];
        const Matrix& in = acts_[static_cast<size_t>(i)];
        switch (layer.kind) {
            case LayerKind::embedding:
                cur = backward_embedding(layer, in, cur, cfg);
                break;
            case LayerKind::attention:
                cur = backward_attention(layer, in, cur, cfg);
                break;
            case LayerKind::layer_norm:
                cur = backward_layer_norm(layer, cur);
                break;
            case LayerKind::linear_up:
            case LayerKind::linear_down:
            case LayerKind::ffn3:
                cur = backward_linear(layer, in, cur, true);
                break;
            case LayerKind::ffn1:
                cur = backward_linear(layer, in, cur, false);
                break;
            case LayerKind::gelu:
                cur = backward_gelu(in, cur);
                break;
            case LayerKind::ffn2:
                cur = backward_ffn2(layer, in, cur);
                break;
            case LayerKind::residual_add: {
                const int src = find_layer(layer.skip_source);
                if (src >= 0) {
                    if (pending[static_cast<size_t>(src)].size() == 0)
                        pending[static_cast<size_t>(src)] = cur;
                    else
                        add_inplace(pending[static_cast<size_t>(src)], cur);
                } else {
                    if (aux_input_.size() == 0)
                        throw std::runtime_error("residual_add " + layer.name +
                                                 ": external skip without aux input");
                    if (aux_grad_.size() == 0)
                        aux_grad_ = cur;  // mirrors the in-stack pending assignment
                    else
                        add_inplace(aux_grad_, cur);
                }
                break;  // main-path gradient passes through unchanged
            }
            case LayerKind::classifier:
                cur = backward_classifier(layer, in, cur, cfg);
                break;
        }
    }
    if (pending[0].size() > 0) add_inplace(cur, pending[0]);
    backward_epoch_ = forward_epoch_;
    return cur;
}

void LayerStack::consume_step_epoch() {
    if (backward_epoch_ == 0 || backward_epoch_ != forward_epoch_ ||
        backward_epoch_ <= stepped_epoch_)
        throw std::runtime_error("optimizer_step: gradients missing (no backward this epoch)");
    stepped_epoch_ = backward_epoch_;
}

// ---------------------------------------------------------------------------
// model construction
// ---------------------------------------------------------------------------

namespace {

Matrix xavier_uniform(int fan_in, int fan_out, Rng& rng) {
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
    return seeded_fill(fan_in, fan_out, Dist::uniform(-limit, limit), rng);
}

Layer make_linear(LayerKind kind, const std::string& name, int in, int out, Rng& rng) {
    Layer layer{.kind = kind, .name = name};
    layer.params.push_back({"w", xavier_uniform(in, out, rng), Matrix(in, out)});
    layer.params.push_back({"b", Matrix(1, out), Matrix(1, out)});
    return layer;
}

Layer make_layer_norm(const std::string& name, int d) {
    Layer layer{.kind = LayerKind::layer_norm, .name = name};
    layer.params.push_back({"gamma", Matrix(1, d, 1.0f), Matrix(1, d)});
    layer.params.push_back({"beta", Matrix(1, d), Matrix(1, d)});
    return layer;
}

}  // namespace

LayerStack build_model(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    LayerStack stack;
    stack.cfg = cfg;
    const int d = cfg.d_model;

    Layer emb{.kind = LayerKind::embedding, .name = "emb"};
    emb.params.push_back({"tok", seeded_fill(cfg.vocab_size, d, Dist::normal(0.0f, 0.05f), rng),
                          Matrix(cfg.vocab_size, d)});
    emb.params.push_back({"pos", seeded_fill(cfg.seq_len, d, Dist::normal(0.0f, 0.05f), rng),
                          Matrix(cfg.seq_len, d)});
    stack.layers.push_back(std::move(emb));

    for (int blk = 1; blk <= cfg.n_blocks; ++blk) {
        const std::string p = "blk" + std::to_string(blk);
        Layer attn{.kind = LayerKind::attention, .name = p + ".attn"};
        for (const char* wn : {"wq", "wk", "wv", "wo"})
            attn.params.push_back({wn, xavier_uniform(d, d, rng), Matrix(d, d)});
        for (const char* bn : {"bq", "bk", "bv", "bo"})
            attn.params.push_back({bn, Matrix(1, d), Matrix(1, d)});
        stack.layers.push_back(std::move(attn));

        stack.layers.push_back(
            Layer{.kind = LayerKind::residual_add, .name = p + ".res1", .skip_source = p + ".attn"});
        stack.layers.push_back(make_layer_norm(p + ".ln1", d));
        stack.layers.push_back(make_linear(LayerKind::linear_up, p + ".up", d, cfg.ffn_dim, rng));
        stack.layers.push_back(Layer{.kind = LayerKind::gelu, .name = p + ".gelu"});
        stack.layers.push_back(make_linear(LayerKind::linear_down, p + ".down", cfg.ffn_dim, d, rng));
        stack.layers.push_back(
            Layer{.kind = LayerKind::residual_add, .name = p + ".res2", .skip_source = p + ".up"});
        stack.layers.push_back(make_layer_norm(p + ".ln2", d));
    }

    stack.layers.push_back(make_linear(LayerKind::classifier, "head", d, cfg.n_classes, rng));
    return stack;
}

// ---------------------------------------------------------------------------
// loss and optimizers
// ---------------------------------------------------------------------------

CrossEntropyResult cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    const int b = logits.rows, c = logits.cols;
    if (static_cast<int>(labels.size()) != b)
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(b) + " rows");
    Matrix d_logits(b, c);
    const float inv_b = 1.0f / static_cast<float>(b);
    double loss_sum = 0.0;
    for (int i = 0; i < b; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= c)
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                        " out of range [0, " + std::to_string(c) + ")");
        const float* row = logits.row_ptr(i);
        float mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        float sum = 0.0f;
        float* drow = d_logits.row_ptr(i);
        for (int j = 0; j < c; ++j) {
            drow[j] = std::exp(row[j] - mx);
            sum += drow[j];
        }
        const float inv_sum = 1.0f / sum;
        for (int j = 0; j < c; ++j) {
            const float p = drow[j] * inv_sum;
            drow[j] = (p - (j == y ? 1.0f : 0.0f)) * inv_b;
        }
        loss_sum += static_cast<double>(std::log(sum) - (row[y] - mx));
    }
    return {static_cast<float>(loss_sum / b), std::move(d_logits)};
}

float batch_accuracy(const Matrix& logits, const std::vector<int>& labels) {
    int hits = 0;
    for (int i = 0; i < logits.rows; ++i) {
        const float* row = logits.row_ptr(i);
        int best = 0;
        for (int j = 1; j < logits.cols; ++j)
            if (row[j] > row[best]) best = j;
        if (best == labels[static_cast<size_t>(i)]) ++hits;
    }
    return logits.rows == 0 ? 0.0f : static_cast<float>(hits) / static_cast<float>(logits.rows);
}

void optimizer_step(LayerStack& stack, OptimState& opt) {
    stack.consume_step_epoch();
    const OptimConfig& cfg = opt.cfg_;
    const uint64_t t = opt.step_count_ + 1;

    for (auto& [name, p] : stack.named_params()) {
        if (cfg.algo == OptimConfig::Algo::sgd) {
            if (cfg.momentum != 0.0f) {
                Matrix& m =
                    opt.m_.try_emplace(name, Matrix(p->value.rows, p->value.cols)).first->second;
                for (size_t i = 0; i < p->value.data.size(); ++i) {
                    m.data[i] = cfg.momentum * m.data[i] + p->grad.data[i];
                    p->value.data[i] -= cfg.lr * m.data[i];
                }
            } else {
                for (size_t i = 0; i < p->value.data.size(); ++i)
                    p->value.data[i] -= cfg.lr * p->grad.data[i];
            }
        } else {
            Matrix& m = opt.m_.try_emplace(name, Matrix(p->value.rows, p->value.cols)).first->second;
            Matrix& v = opt.v_.try_emplace(name, Matrix(p->value.rows, p->value.cols)).first->second;
            const float bc1 = 1.0f - static_cast<float>(std::pow(static_cast<double>(cfg.beta1),
                                                                 static_cast<double>(t)));
            const float bc2 = 1.0f - static_cast<float>(std::pow(static_cast<double>(cfg.beta2),
                                                                 static_cast<double>(t)));
            for (size_t i = 0; i < p->value.data.size(); ++i) {
                const float g = p->grad.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0f - cfg.beta1) * g;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0f - cfg.beta2) * g * g;
                const float mhat = m.data[i] / bc1;
                const float vhat = v.data[i] / bc2;
                p->value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0f);
    }
    ++opt.step_count_;
}

}  // namespace sft
