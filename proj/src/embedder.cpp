#include "h2s/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "h2s/errors.hpp"
#include "h2s/io_util.hpp"

namespace h2s {

namespace {

constexpr char kCkptMagic[8] = {'H', '2', 'S', 'P', 'A', 'R', '1', '\0'};
constexpr double kCosEps = 1e-7;

struct Tensor3 {
    std::size_t c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor3() = default;
    Tensor3(std::size_t C, std::size_t H, std::size_t W) : c(C), h(H), w(W), v(C * H * W, 0.0) {}

    double* plane(std::size_t ci) { return v.data() + ci * h * w; }
    const double* plane(std::size_t ci) const { return v.data() + ci * h * w; }
};

// y[co,i,j] = b[co] + sum_{ci,di,dj} w[co,ci,di,dj] * x[ci, i+di-1, j+dj-1]
// (stride 1, zero padding 1). Loops are arranged so the inner j-loop walks
// contiguous memory in both x and y.
void conv3x3_forward(const Tensor3& x, const std::vector<double>& w, const std::vector<double>& b,
                     Tensor3& y) {
    const std::size_t cin = x.c, H = x.h, W = x.w, cout = y.c;
    for (std::size_t co = 0; co < cout; ++co) {
        std::fill(y.plane(co), y.plane(co) + H * W, b[co]);
    }
    for (std::size_t co = 0; co < cout; ++co) {
        double* yp = y.plane(co);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xp = x.plane(ci);
            const double* wk = w.data() + (co * cin + ci) * 9;
            for (std::size_t di = 0; di < 3; ++di) {
                const std::size_t i0 = di == 0 ? 1 : 0;
                const std::size_t i1 = di == 2 ? H - 1 : H;
                for (std::size_t dj = 0; dj < 3; ++dj) {
                    const double wv = wk[di * 3 + dj];
                    const std::size_t j0 = dj == 0 ? 1 : 0;
                    const std::size_t j1 = dj == 2 ? W - 1 : W;
                    for (std::size_t i = i0; i < i1; ++i) {
                        const double* xr = xp + (i + di - 1) * W + dj - 1;
                        double* yr = yp + i * W;
                        for (std::size_t j = j0; j < j1; ++j) yr[j] += wv * xr[j];
                    }
                }
            }
        }
    }
}

// dx += w^T (*) dy ; dw += x (*) dy ; db += sum dy
void conv3x3_backward(const Tensor3& x, const std::vector<double>& w, const Tensor3& dy,
                      Tensor3& dx, std::vector<double>& dw, std::vector<double>& db) {
    const std::size_t cin = x.c, H = x.h, W = x.w, cout = dy.c;
    for (std::size_t co = 0; co < cout; ++co) {
        const double* dyp = dy.plane(co);
        double acc = 0.0;
        for (std::size_t k = 0; k < H * W; ++k) acc += dyp[k];
        db[co] += acc;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* xp = x.plane(ci);
            double* dxp = dx.plane(ci);
            const double* wk = w.data() + (co * cin + ci) * 9;
            double* dwk = dw.data() + (co * cin + ci) * 9;
            for (std::size_t di = 0; di < 3; ++di) {
                const std::size_t i0 = di == 0 ? 1 : 0;
                const std::size_t i1 = di == 2 ? H - 1 : H;
                for (std::size_t dj = 0; dj < 3; ++dj) {
                    const double wv = wk[di * 3 + dj];
                    const std::size_t j0 = dj == 0 ? 1 : 0;
                    const std::size_t j1 = dj == 2 ? W - 1 : W;
                    double wacc = 0.0;
                    for (std::size_t i = i0; i < i1; ++i) {
                        const double* xr = xp + (i + di - 1) * W + dj - 1;
                        double* dxr = dxp + (i + di - 1) * W + dj - 1;
                        const double* dyr = dyp + i * W;
                        for (std::size_t j = j0; j < j1; ++j) {
                            wacc += xr[j] * dyr[j];
                            dxr[j] += wv * dyr[j];
                        }
                    }
                    dwk[di * 3 + dj] += wacc;
                }
            }
        }
    }
}

// sc[co,i,j] = sum_ci w[co,ci] * x[ci,i,j] (1x1 projection, no bias)
void conv1x1_forward(const Tensor3& x, const std::vector<double>& w, Tensor3& sc) {
    const std::size_t cin = x.c, n = x.h * x.w, cout = sc.c;
    for (std::size_t co = 0; co < cout; ++co) {
        double* sp = sc.plane(co);
        std::fill(sp, sp + n, 0.0);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double wv = w[co * cin + ci];
            const double* xp = x.plane(ci);
            for (std::size_t k = 0; k < n; ++k) sp[k] += wv * xp[k];
        }
    }
}

void conv1x1_backward(const Tensor3& x, const std::vector<double>& w, const Tensor3& dsc,
                      Tensor3& dx, std::vector<double>& dw) {
    const std::size_t cin = x.c, n = x.h * x.w, cout = dsc.c;
    for (std::size_t co = 0; co < cout; ++co) {
        const double* dp = dsc.plane(co);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double wv = w[co * cin + ci];
            const double* xp = x.plane(ci);
            double* dxp = dx.plane(ci);
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                acc += xp[k] * dp[k];
                dxp[k] += wv * dp[k];
            }
            dw[co * cin + ci] += acc;
        }
    }
}

// 2x2 average pool, stride 2, floor semantics: odd trailing rows/cols drop.
Tensor3 avgpool2_forward(const Tensor3& a) {
    Tensor3 out(a.c, a.h / 2, a.w / 2);
    for (std::size_t c = 0; c < a.c; ++c) {
        const double* ap = a.plane(c);
        double* op = out.plane(c);
        for (std::size_t i = 0; i < out.h; ++i) {
            const double* r0 = ap + (2 * i) * a.w;
            const double* r1 = r0 + a.w;
            for (std::size_t j = 0; j < out.w; ++j) {
                op[i * out.w + j] =
                    0.25 * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
            }
        }
    }
    return out;
}

void avgpool2_backward(const Tensor3& dout, Tensor3& da) {
    for (std::size_t c = 0; c < dout.c; ++c) {
        const double* dp = dout.plane(c);
        double* ap = da.plane(c);
        for (std::size_t i = 0; i < dout.h; ++i) {
            double* r0 = ap + (2 * i) * da.w;
            double* r1 = r0 + da.w;
            for (std::size_t j = 0; j < dout.w; ++j) {
                const double g = 0.25 * dp[i * dout.w + j];
                r0[2 * j] += g;
                r0[2 * j + 1] += g;
                r1[2 * j] += g;
                r1[2 * j + 1] += g;
            }
        }
    }
}

struct BlockCache {
    Tensor3 x;  // block input
    Tensor3 y;  // conv output, pre-ReLU
};

struct FwdCache {
    std::vector<BlockCache> blocks;
    Tensor3 out;  // pooled output of the final block
    std::vector<double> gap;
    std::vector<double> e;     // pre-normalization embedding
    std::vector<double> xhat;  // unit embedding
    double norm = 0.0;
};

std::vector<double> run_forward(const EmbedderParams& p, const EmbedderConfig& cfg,
                                const MatF& patch, FwdCache* cache) {
    if (patch.rows != cfg.input_frames || patch.cols != cfg.n_mels) {
        throw ShapeError("patch is " + std::to_string(patch.rows) + "x" +
                         std::to_string(patch.cols) + ", expected " +
                         std::to_string(cfg.input_frames) + "x" + std::to_string(cfg.n_mels));
    }
    if (p.blocks.size() != cfg.blocks.size()) throw ShapeError("block count mismatch");

    Tensor3 x(1, patch.rows, patch.cols);
    for (std::size_t k = 0; k < patch.size(); ++k) x.v[k] = patch.data[k];

    if (cache) cache->blocks.resize(cfg.blocks.size());

    for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
        const BlockSpec& spec = cfg.blocks[b];
        const BlockParams& bp = p.blocks[b];
        Tensor3 y(spec.channels, x.h, x.w);
        conv3x3_forward(x, bp.conv_w, bp.conv_b, y);

        Tensor3 a(spec.channels, x.h, x.w);
        for (std::size_t k = 0; k < y.v.size(); ++k) a.v[k] = y.v[k] > 0.0 ? y.v[k] : 0.0;

        if (spec.use_residual) {
            if (bp.shortcut_w.empty()) {
                for (std::size_t k = 0; k < a.v.size(); ++k) a.v[k] += x.v[k];
            } else {
                Tensor3 sc(spec.channels, x.h, x.w);
                conv1x1_forward(x, bp.shortcut_w, sc);
                for (std::size_t k = 0; k < a.v.size(); ++k) a.v[k] += sc.v[k];
            }
        }

        Tensor3 pooled = avgpool2_forward(a);
        if (cache) {
            cache->blocks[b].x = std::move(x);
            cache->blocks[b].y = std::move(y);
        }
        x = std::move(pooled);
    }

    const std::size_t c_last = x.c, spatial = x.h * x.w;
    std::vector<double> gap(c_last);
    for (std::size_t c = 0; c < c_last; ++c) {
        const double* xp = x.plane(c);
        double acc = 0.0;
        for (std::size_t k = 0; k < spatial; ++k) acc += xp[k];
        gap[c] = acc / static_cast<double>(spatial);
    }

    const std::size_t D = cfg.embed_dim;
    std::vector<double> e(p.proj_b);
    for (std::size_t c = 0; c < c_last; ++c) {
        const double g = gap[c];
        const double* wr = p.proj_w.data() + c * D;
        for (std::size_t d = 0; d < D; ++d) e[d] += g * wr[d];
    }

    std::vector<double> xhat = l2_normalize(e);

    if (cache) {
        cache->out = std::move(x);
        cache->gap = std::move(gap);
        double nrm = 0.0;
        for (double v : e) nrm += v * v;
        cache->norm = std::sqrt(nrm);
        cache->e = std::move(e);
        cache->xhat = xhat;
    }
    return xhat;
}

void backward_sample(const EmbedderParams& p, const EmbedderConfig& cfg, const FwdCache& cache,
                     const double* dxhat, EmbedderParams& grads) {
    const std::size_t D = cfg.embed_dim;

    // Through L2 normalization: de = (dxhat - xhat * <xhat, dxhat>) / ||e||.
    double dot = 0.0;
    for (std::size_t d = 0; d < D; ++d) dot += dxhat[d] * cache.xhat[d];
    std::vector<double> de(D);
    for (std::size_t d = 0; d < D; ++d) de[d] = (dxhat[d] - cache.xhat[d] * dot) / cache.norm;

    // Projection.
    const std::size_t c_last = cache.out.c, spatial = cache.out.h * cache.out.w;
    std::vector<double> dgap(c_last, 0.0);
    for (std::size_t c = 0; c < c_last; ++c) {
        const double g = cache.gap[c];
        const double* wr = p.proj_w.data() + c * D;
        double* dwr = grads.proj_w.data() + c * D;
        double acc = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            dwr[d] += g * de[d];
            acc += wr[d] * de[d];
        }
        dgap[c] = acc;
    }
    for (std::size_t d = 0; d < D; ++d) grads.proj_b[d] += de[d];

    // Global average pool.
    Tensor3 dx(cache.out.c, cache.out.h, cache.out.w);
    for (std::size_t c = 0; c < c_last; ++c) {
        const double g = dgap[c] / static_cast<double>(spatial);
        double* dp = dx.plane(c);
        std::fill(dp, dp + spatial, g);
    }

    for (std::size_t bi = cfg.blocks.size(); bi-- > 0;) {
        const BlockSpec& spec = cfg.blocks[bi];
        const BlockParams& bp = p.blocks[bi];
        BlockParams& gb = grads.blocks[bi];
        const Tensor3& x = cache.blocks[bi].x;
        const Tensor3& y = cache.blocks[bi].y;

        Tensor3 da(y.c, y.h, y.w);
        avgpool2_backward(dx, da);

        // ReLU mask on the convolution branch.
        Tensor3 dy(y.c, y.h, y.w);
        for (std::size_t k = 0; k < y.v.size(); ++k) dy.v[k] = y.v[k] > 0.0 ? da.v[k] : 0.0;

        Tensor3 dxprev(x.c, x.h, x.w);
        if (spec.use_residual) {
            if (bp.shortcut_w.empty()) {
                for (std::size_t k = 0; k < da.v.size(); ++k) dxprev.v[k] += da.v[k];
            } else {
                conv1x1_backward(x, bp.shortcut_w, da, dxprev, gb.shortcut_w);
            }
        }
        conv3x3_backward(x, bp.conv_w, dy, dxprev, gb.conv_w, gb.conv_b);
        dx = std::move(dxprev);
    }
}

}  // namespace

void EmbedderConfig::validate() const {
    if (input_frames < 16) throw ConfigError("input_frames must be >= 16");
    if (embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (blocks.empty()) throw ConfigError("need at least one block");
    std::size_t h = input_frames, w = n_mels;
    for (const BlockSpec& b : blocks) {
        if (b.channels == 0) throw ConfigError("block channels must be > 0");
        h /= 2;
        w /= 2;
    }
    if (h < 1 || w < 1)
        throw ConfigError("input collapses to nothing after " + std::to_string(blocks.size()) +
                          " 2x2 pools");
}

void ArcFaceConfig::validate() const {
    if (!(scale > 0)) throw ConfigError("arcface scale must be > 0");
    if (!(margin >= 0) || margin >= 3.14159265358979323846)
        throw ConfigError("arcface margin must lie in [0, pi)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    if (!(lr_decay > 0) || lr_decay > 1) throw ConfigError("lr_decay must lie in (0, 1]");
    if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
}

MatF fix_length(const MatF& m, std::size_t T, FixMode mode, Rng* rng, float pad_value) {
    const std::size_t n = m.rows, cols = m.cols;
    if (n == T) {
        if (mode == FixMode::train && rng) rng->uniform_index(1);  // keep stream aligned
        return m;
    }
    MatF out(T, cols, pad_value);
    if (n >= T) {
        const std::size_t start =
            mode == FixMode::train ? rng->uniform_index(n - T + 1) : (n - T) / 2;
        std::copy(m.row(start), m.row(start) + T * cols, out.data.begin());
    } else {
        const std::size_t left = (T - n) / 2;  // extra padded frame goes on the right
        std::copy(m.data.begin(), m.data.end(), out.data.begin() + left * cols);
    }
    return out;
}

EmbedderParams init_params(const EmbedderConfig& cfg, std::uint32_t n_classes) {
    cfg.validate();
    if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
    Rng rng(derive_seed(cfg.rng_seed, 4));

    EmbedderParams p;
    std::size_t cin = 1;
    for (const BlockSpec& spec : cfg.blocks) {
        const std::size_t cout = spec.channels;
        BlockParams bp;
        bp.conv_w.resize(cout * cin * 9);
        const double conv_std = std::sqrt(2.0 / (static_cast<double>(cin) * 9.0));
        for (double& v : bp.conv_w) v = conv_std * rng.normal();
        bp.conv_b.assign(cout, 0.0);
        if (spec.use_residual && cin != cout) {
            bp.shortcut_w.resize(cout * cin);
            const double sc_std = std::sqrt(1.0 / static_cast<double>(cin));
            for (double& v : bp.shortcut_w) v = sc_std * rng.normal();
        }
        p.blocks.push_back(std::move(bp));
        cin = cout;
    }

    const std::size_t D = cfg.embed_dim;
    p.proj_w.resize(cin * D);
    const double proj_std = std::sqrt(1.0 / static_cast<double>(cin));
    for (double& v : p.proj_w) v = proj_std * rng.normal();
    p.proj_b.assign(D, 0.0);

    p.head_w = MatD(D, n_classes);
    const double head_std = std::sqrt(1.0 / static_cast<double>(D));
    for (double& v : p.head_w.data) v = head_std * rng.normal();
    return p;
}

std::vector<double> forward_embed(const EmbedderParams& params, const EmbedderConfig& cfg,
                                  const MatF& patch) {
    return run_forward(params, cfg, patch, nullptr);
}

std::vector<double> l2_normalize(const std::vector<double>& v) {
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) throw ZeroVector("cannot normalize the zero vector");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / nrm;
    return out;
}

ArcFaceResult arcface_loss(const MatD& embeddings, const std::vector<std::uint32_t>& labels,
                           const MatD& W, const ArcFaceConfig& cfg, bool with_grad) {
    cfg.validate();
    const std::size_t B = embeddings.rows, D = embeddings.cols, C = W.cols;
    if (W.rows != D) throw ShapeError("W rows must equal embedding dim");
    if (labels.size() != B) throw ShapeError("one label per embedding required");
    if (cfg.n_classes != 0 && cfg.n_classes != C)
        throw ShapeError("W has " + std::to_string(C) + " columns, config says " +
                         std::to_string(cfg.n_classes));
    if (B == 0) throw ShapeError("empty batch");
    for (std::uint32_t y : labels) {
        if (y >= C) throw BadLabel("label " + std::to_string(y) + " >= " + std::to_string(C));
    }

    std::vector<double> col_norm(C, 0.0);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t j = 0; j < C; ++j) col_norm[j] += W.at(d, j) * W.at(d, j);
    }
    MatD Wn(D, C);
    for (std::size_t j = 0; j < C; ++j) {
        if (col_norm[j] == 0.0)
            throw ZeroVector("class column " + std::to_string(j) + " is zero");
        col_norm[j] = std::sqrt(col_norm[j]);
    }
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t j = 0; j < C; ++j) Wn.at(d, j) = W.at(d, j) / col_norm[j];
    }

    const double cos_m = std::cos(cfg.margin), sin_m = std::sin(cfg.margin);
    const double lim = 1.0 - kCosEps;

    ArcFaceResult r;
    r.cos = MatD(B, C);
    r.logits = MatD(B, C);
    MatD clamped_mask(B, C);  // 1 where the clamp did not bind

    for (std::size_t i = 0; i < B; ++i) {
        const double* x = embeddings.row(i);
        for (std::size_t j = 0; j < C; ++j) {
            double c = 0.0;
            for (std::size_t d = 0; d < D; ++d) c += x[d] * Wn.at(d, j);
            const bool inside = c > -lim && c < lim;
            clamped_mask.at(i, j) = inside ? 1.0 : 0.0;
            c = std::clamp(c, -lim, lim);
            r.cos.at(i, j) = c;
            r.logits.at(i, j) = cfg.scale * c;
        }
        const double cy = r.cos.at(i, labels[i]);
        const double phi = cy * cos_m - std::sqrt(1.0 - cy * cy) * sin_m;  // cos(theta + m)
        r.logits.at(i, labels[i]) = cfg.scale * phi;
    }

    // Stable softmax cross-entropy, mean over the batch.
    MatD p(B, C);
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double* L = r.logits.row(i);
        double mx = L[0];
        for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, L[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) sum += std::exp(L[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < C; ++j) p.at(i, j) = std::exp(L[j] - lse);
        loss += lse - L[labels[i]];
    }
    r.loss = loss / static_cast<double>(B);

    if (!with_grad) return r;

    r.d_emb = MatD(B, D);
    r.d_head = MatD(D, C);
    for (std::size_t i = 0; i < B; ++i) {
        const double* x = embeddings.row(i);
        for (std::size_t j = 0; j < C; ++j) {
            double g = (p.at(i, j) - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(B);
            double dphi_dc = 1.0;
            if (j == labels[i]) {
                const double c = r.cos.at(i, j);
                dphi_dc = cos_m + c * sin_m / std::sqrt(1.0 - c * c);
            }
            const double dc = cfg.scale * g * dphi_dc * clamped_mask.at(i, j);
            if (dc == 0.0) continue;
            const double c = r.cos.at(i, j);
            const double inv_n = 1.0 / col_norm[j];
            for (std::size_t d = 0; d < D; ++d) {
                r.d_emb.at(i, d) += dc * Wn.at(d, j);
                r.d_head.at(d, j) += dc * (x[d] - c * Wn.at(d, j)) * inv_n;
            }
        }
    }
    return r;
}

EmbedderParams zero_like(const EmbedderParams& p) {
    EmbedderParams g;
    g.blocks.resize(p.blocks.size());
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        g.blocks[i].conv_w.assign(p.blocks[i].conv_w.size(), 0.0);
        g.blocks[i].conv_b.assign(p.blocks[i].conv_b.size(), 0.0);
        g.blocks[i].shortcut_w.assign(p.blocks[i].shortcut_w.size(), 0.0);
    }
    g.proj_w.assign(p.proj_w.size(), 0.0);
    g.proj_b.assign(p.proj_b.size(), 0.0);
    g.head_w = MatD(p.head_w.rows, p.head_w.cols);
    return g;
}

std::vector<TensorRef> tensor_refs(EmbedderParams& p) {
    std::vector<TensorRef> refs;
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        BlockParams& b = p.blocks[i];
        const std::size_t cout = b.conv_b.size();
        const std::size_t cin = cout ? b.conv_w.size() / (cout * 9) : 0;
        const std::string prefix = "block" + std::to_string(i) + ".";
        refs.push_back({prefix + "conv.weight", {cout, cin, 3, 3}, &b.conv_w, false});
        refs.push_back({prefix + "conv.bias", {cout}, &b.conv_b, true});
        if (!b.shortcut_w.empty()) {
            refs.push_back({prefix + "shortcut.weight", {cout, cin}, &b.shortcut_w, false});
        }
    }
    const std::size_t D = p.proj_b.size();
    refs.push_back({"proj.weight", {D ? p.proj_w.size() / D : 0, D}, &p.proj_w, false});
    refs.push_back({"proj.bias", {D}, &p.proj_b, true});
    refs.push_back({"head.weight", {p.head_w.rows, p.head_w.cols}, &p.head_w.data, false});
    return refs;
}

double backward_batch(const EmbedderParams& params, const EmbedderConfig& cfg,
                      const std::vector<MatF>& batch, const std::vector<std::uint32_t>& labels,
                      const ArcFaceConfig& acfg, EmbedderParams& grads, MatD* cos_out) {
    const std::size_t B = batch.size();
    if (B == 0 || labels.size() != B) throw ShapeError("batch and labels must be nonempty and match");

    // Pass 1: embeddings only (no activation caches), then the loss head.
    MatD emb(B, cfg.embed_dim);
    for (std::size_t i = 0; i < B; ++i) {
        const std::vector<double> x = run_forward(params, cfg, batch[i], nullptr);
        std::copy(x.begin(), x.end(), emb.row(i));
    }
    ArcFaceResult r = arcface_loss(emb, labels, params.head_w, acfg, true);
    for (std::size_t k = 0; k < r.d_head.data.size(); ++k)
        grads.head_w.data[k] += r.d_head.data[k];

    // Pass 2: re-run each sample with caches and push its gradient through.
    for (std::size_t i = 0; i < B; ++i) {
        FwdCache cache;
        run_forward(params, cfg, batch[i], &cache);
        backward_sample(params, cfg, cache, r.d_emb.row(i), grads);
    }
    if (cos_out) *cos_out = std::move(r.cos);
    return r.loss;
}

void sgd_step(EmbedderParams& params, const EmbedderParams& grads, const TrainConfig& t,
              std::uint32_t epoch) {
    const double lr_e = t.lr * std::pow(t.lr_decay, epoch / t.lr_decay_every);
    auto prefs = tensor_refs(params);
    auto grefs = tensor_refs(const_cast<EmbedderParams&>(grads));
    if (prefs.size() != grefs.size()) throw ShapeError("gradient structure mismatch");
    for (std::size_t k = 0; k < prefs.size(); ++k) {
        std::vector<double>& p = *prefs[k].data;
        const std::vector<double>& g = *grefs[k].data;
        if (p.size() != g.size()) throw ShapeError("gradient shape mismatch at " + prefs[k].name);
        const double wd = prefs[k].is_bias ? 0.0 : t.weight_decay;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_e * (g[i] + wd * p[i]);
    }
}

TrainResult train(const std::vector<MatF>& mels, const std::vector<std::uint32_t>& labels,
                  const EmbedderConfig& e, const ArcFaceConfig& a, const TrainConfig& t,
                  float pad_value) {
    e.validate();
    a.validate();
    t.validate();
    if (mels.size() != labels.size()) throw ShapeError("one label per mel required");
    const std::size_t C = a.n_classes;
    if (C < 2) throw InsufficientData("need at least 2 classes");
    for (std::uint32_t y : labels) {
        if (y >= C) throw BadLabel("label " + std::to_string(y) + " >= " + std::to_string(C));
    }
    std::vector<std::size_t> per_class(C, 0);
    for (std::uint32_t y : labels) ++per_class[y];
    for (std::size_t j = 0; j < C; ++j) {
        if (per_class[j] == 0)
            throw InsufficientData("class " + std::to_string(j) + " has no samples");
    }

    TrainResult result;
    result.params = init_params(e, a.n_classes);
    const std::size_t N = mels.size();

    for (std::uint32_t epoch = 0; epoch < t.epochs; ++epoch) {
        Rng er(derive_seed(t.rng_seed, 3, epoch));
        std::vector<std::size_t> order(N);
        std::iota(order.begin(), order.end(), 0);
        er.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < N; start += t.batch_size) {
            const std::size_t bsz = std::min<std::size_t>(t.batch_size, N - start);
            std::vector<MatF> batch;
            std::vector<std::uint32_t> blabels;
            batch.reserve(bsz);
            blabels.reserve(bsz);
            for (std::size_t k = 0; k < bsz; ++k) {
                const std::size_t idx = order[start + k];
                batch.push_back(fix_length(mels[idx], e.input_frames, FixMode::train, &er,
                                           pad_value));
                blabels.push_back(labels[idx]);
            }
            EmbedderParams grads = zero_like(result.params);
            MatD cos;
            const double loss =
                backward_batch(result.params, e, batch, blabels, a, grads, &cos);
            for (std::size_t i = 0; i < bsz; ++i) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < C; ++j) {
                    if (cos.at(i, j) > cos.at(i, best)) best = j;
                }
                if (best == blabels[i]) ++correct;
            }
            sgd_step(result.params, grads, t, epoch);
            epoch_loss += loss * static_cast<double>(bsz);
        }
        result.history.loss.push_back(epoch_loss / static_cast<double>(N));
        result.history.accuracy.push_back(static_cast<double>(correct) /
                                          static_cast<double>(N));
    }
    return result;
}

void save_checkpoint(const EmbedderParams& params, const std::filesystem::path& path) {
    auto refs = tensor_refs(const_cast<EmbedderParams&>(params));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    write_bytes(f, kCkptMagic, 8);
    write_u32(f, static_cast<std::uint32_t>(refs.size()));
    for (const TensorRef& r : refs) {
        write_u16(f, static_cast<std::uint16_t>(r.name.size()));
        write_bytes(f, r.name.data(), r.name.size());
        write_u32(f, static_cast<std::uint32_t>(r.dims.size()));
        for (std::size_t d : r.dims) write_u32(f, static_cast<std::uint32_t>(d));
        for (double v : *r.data) write_f64(f, v);
    }
    f.flush();
    if (!f) throw IoError("write failed for " + path.string());
}

EmbedderParams load_checkpoint(const std::filesystem::path& path, const EmbedderConfig& cfg) {
    cfg.validate();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    expect_magic(f, kCkptMagic, path.string());

    struct Stored {
        std::vector<std::size_t> dims;
        std::vector<double> data;
    };
    std::map<std::string, Stored> tensors;
    const std::uint32_t count = read_u32(f);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint16_t name_len = read_u16(f);
        std::string name(name_len, '\0');
        read_bytes(f, name.data(), name_len);
        const std::uint32_t rank = read_u32(f);
        if (rank > 8) throw ShapeMismatch("implausible tensor rank in " + path.string());
        Stored s;
        std::size_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t dim = read_u32(f);
            s.dims.push_back(dim);
            total *= dim;
        }
        s.data.resize(total);
        for (double& v : s.data) v = read_f64(f);
        if (!tensors.emplace(std::move(name), std::move(s)).second)
            throw ShapeMismatch("duplicate tensor in " + path.string());
    }

    // The head's class count lives only in the file.
    const auto head_it = tensors.find("head.weight");
    if (head_it == tensors.end()) throw ShapeError("missing tensor head.weight");
    if (head_it->second.dims.size() != 2 || head_it->second.dims[0] != cfg.embed_dim ||
        head_it->second.dims[1] < 1)
        throw ShapeError("head.weight shape does not match embed_dim");
    const std::uint32_t n_classes = static_cast<std::uint32_t>(head_it->second.dims[1]);

    EmbedderParams expect = init_params(cfg, n_classes);
    for (TensorRef& r : tensor_refs(expect)) {
        const auto it = tensors.find(r.name);
        if (it == tensors.end()) throw ShapeError("missing tensor " + r.name);
        if (it->second.dims != r.dims)
            throw ShapeError("tensor " + r.name + " has unexpected shape");
        *r.data = std::move(it->second.data);
        tensors.erase(it);
    }
    if (!tensors.empty())
        throw ShapeError("unexpected tensor " + tensors.begin()->first + " in checkpoint");
    return expect;
}

}  // namespace h2s
