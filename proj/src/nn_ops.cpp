#include "gazeforge/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gazeforge {

namespace {

void require_rank4(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw shape_error(std::string(what) + ": expected rank-4 tensor, got " +
                          shape_str(t.shape()));
    }
}

// Valid output range [lo, hi) along one spatial axis for a fixed kernel tap,
// so the inner loops run branch-free.
void tap_range(std::size_t in_len, std::size_t out_len, int stride, int pad, int k,
               std::size_t& lo, std::size_t& hi) {
    // in-index = out*stride - pad + k must lie in [0, in_len)
    int lo_i = 0;
    if (k < pad) lo_i = (pad - k + stride - 1) / stride;
    long long hi_i = (static_cast<long long>(in_len) - 1 + pad - k) / stride + 1;
    if (hi_i < lo_i) hi_i = lo_i;
    lo = static_cast<std::size_t>(lo_i);
    hi = std::min<std::size_t>(static_cast<std::size_t>(hi_i), out_len);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
    require_rank4(input, "conv2d input");
    require_rank4(weight, "conv2d weight");
    if (stride < 1) throw value_error("conv2d: stride must be positive");
    if (padding < 0) throw value_error("conv2d: padding must be nonnegative");
    const std::size_t B = input.batch(), inC = input.channels(), H = input.height(),
                      W = input.width();
    const std::size_t outC = weight.shape()[0], kC = weight.shape()[1], kH = weight.shape()[2],
                      kW = weight.shape()[3];
    if (kC != inC) {
        throw shape_error("conv2d: weight expects " + std::to_string(kC) +
                          " input channels, input has " + std::to_string(inC));
    }
    if (bias.rank() != 1 || bias.shape()[0] != outC) {
        throw shape_error("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                          std::to_string(outC) + " output channels");
    }
    const long long oh = (static_cast<long long>(H) + 2 * padding - static_cast<long long>(kH)) /
                             stride +
                         1;
    const long long ow = (static_cast<long long>(W) + 2 * padding - static_cast<long long>(kW)) /
                             stride +
                         1;
    if (oh < 1 || ow < 1 ||
        static_cast<long long>(H) + 2 * padding < static_cast<long long>(kH) ||
        static_cast<long long>(W) + 2 * padding < static_cast<long long>(kW)) {
        throw shape_error("conv2d: zero-sized output for input " + shape_str(input.shape()) +
                          ", kernel " + shape_str(weight.shape()));
    }
    const std::size_t OH = static_cast<std::size_t>(oh), OW = static_cast<std::size_t>(ow);

    const auto& in = input.values();
    const auto& wv = weight.values();
    const auto& bv = bias.values();
    std::vector<double> out(B * outC * OH * OW);

    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < outC; ++o) {
            double* oplane = out.data() + (b * outC + o) * OH * OW;
            std::fill(oplane, oplane + OH * OW, bv[o]);
            for (std::size_t c = 0; c < inC; ++c) {
                const double* iplane = in.data() + (b * inC + c) * H * W;
                for (std::size_t ky = 0; ky < kH; ++ky) {
                    std::size_t ylo, yhi;
                    tap_range(H, OH, stride, padding, static_cast<int>(ky), ylo, yhi);
                    for (std::size_t kx = 0; kx < kW; ++kx) {
                        std::size_t xlo, xhi;
                        tap_range(W, OW, stride, padding, static_cast<int>(kx), xlo, xhi);
                        const double wval = wv[((o * inC + c) * kH + ky) * kW + kx];
                        for (std::size_t oy = ylo; oy < yhi; ++oy) {
                            const std::size_t iy = oy * stride - padding + ky;
                            const double* irow = iplane + iy * W;
                            double* orow = oplane + oy * OW;
                            if (stride == 1) {
                                const double* ip = irow + (xlo - padding + kx);
                                for (std::size_t ox = xlo; ox < xhi; ++ox) {
                                    orow[ox] += wval * ip[ox - xlo];
                                }
                            } else {
                                for (std::size_t ox = xlo; ox < xhi; ++ox) {
                                    orow[ox] += wval * irow[ox * stride - padding + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Tensor r = Tensor::from_values({B, outC, OH, OW}, std::move(out));
    if (Tape* tape = op_tape({&input, &weight, &bias})) {
        tape->record(r);
        tape->push_rule([on = r.node(), inn = input.node(), wn = weight.node(),
                         bn = bias.node(), x = input.detach(), wt = weight.detach(), B, inC, H,
                         W, outC, kH, kW, OH, OW, stride, padding](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g) return;
            const auto& in = x.values();
            const auto& wv = wt.values();
            if (bn >= 0) {
                auto& gb = t.accum_buffer(bn, outC);
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t o = 0; o < outC; ++o) {
                        const double* gplane = g->data() + (b * outC + o) * OH * OW;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < OH * OW; ++i) acc += gplane[i];
                        gb[o] += acc;
                    }
                }
            }
            if (inn < 0 && wn < 0) return;
            std::vector<double>* gin = inn >= 0 ? &t.accum_buffer(inn, B * inC * H * W) : nullptr;
            std::vector<double>* gw =
                wn >= 0 ? &t.accum_buffer(wn, outC * inC * kH * kW) : nullptr;
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t o = 0; o < outC; ++o) {
                    const double* gplane = g->data() + (b * outC + o) * OH * OW;
                    for (std::size_t c = 0; c < inC; ++c) {
                        const double* iplane = in.data() + (b * inC + c) * H * W;
                        double* ginplane = gin ? gin->data() + (b * inC + c) * H * W : nullptr;
                        for (std::size_t ky = 0; ky < kH; ++ky) {
                            std::size_t ylo, yhi;
                            tap_range(H, OH, stride, padding, static_cast<int>(ky), ylo, yhi);
                            for (std::size_t kx = 0; kx < kW; ++kx) {
                                std::size_t xlo, xhi;
                                tap_range(W, OW, stride, padding, static_cast<int>(kx), xlo,
                                          xhi);
                                const std::size_t widx = ((o * inC + c) * kH + ky) * kW + kx;
                                const double wval = wv[widx];
                                double wacc = 0.0;
                                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                                    const std::size_t iy = oy * stride - padding + ky;
                                    const double* grow = gplane + oy * OW;
                                    const double* irow = iplane + iy * W;
                                    double* ginrow = ginplane ? ginplane + iy * W : nullptr;
                                    for (std::size_t ox = xlo; ox < xhi; ++ox) {
                                        const std::size_t ix = ox * stride - padding + kx;
                                        const double gval = grow[ox];
                                        if (gw) wacc += gval * irow[ix];
                                        if (ginrow) ginrow[ix] += gval * wval;
                                    }
                                }
                                if (gw) (*gw)[widx] += wacc;
                            }
                        }
                    }
                }
            }
        });
    }
    return r;
}

Tensor conv1x1(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank4(weight, "conv1x1 weight");
    if (weight.shape()[2] != 1 || weight.shape()[3] != 1) {
        throw shape_error("conv1x1: kernel must be 1x1, got " + shape_str(weight.shape()));
    }
    return conv2d(input, weight, bias, 1, 0);
}

Tensor relu(const Tensor& x) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    Tensor r = Tensor::from_values(x.shape(), std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), xd = x.detach(), n = x.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, n);
            const auto& xv = xd.values();
            for (std::size_t i = 0; i < n; ++i) {
                if (xv[i] > 0.0) gx[i] += (*g)[i];  // subgradient 0 at the kink
            }
        });
    }
    return r;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
    Tensor r = Tensor::from_values(x.shape(), std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), xd = x.detach(), slope,
                         n = x.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, n);
            const auto& xv = xd.values();
            for (std::size_t i = 0; i < n; ++i) {
                gx[i] += (xv[i] > 0.0 ? 1.0 : slope) * (*g)[i];
            }
        });
    }
    return r;
}

Tensor instance_norm(const Tensor& x, double eps) {
    require_rank4(x, "instance_norm");
    const std::size_t B = x.batch(), C = x.channels(), H = x.height(), W = x.width();
    const std::size_t M = H * W;
    if (M < 2) {
        throw value_error("instance_norm: degenerate plane with " + std::to_string(M) +
                          " position(s); need at least 2");
    }
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    std::vector<double> inv_std(B * C);
    for (std::size_t p = 0; p < B * C; ++p) {
        const double* plane = xv.data() + p * M;
        double mu = 0.0;
        for (std::size_t i = 0; i < M; ++i) mu += plane[i];
        mu /= static_cast<double>(M);
        double var = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
            const double d = plane[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(M);  // population variance
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[p] = inv;
        double* oplane = out.data() + p * M;
        for (std::size_t i = 0; i < M; ++i) oplane[i] = (plane[i] - mu) * inv;
    }
    Tensor r = Tensor::from_values(x.shape(), std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), y = r.detach(), inv_std, B, C,
                         M](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, B * C * M);
            const auto& yv = y.values();
            for (std::size_t p = 0; p < B * C; ++p) {
                const double* gp = g->data() + p * M;
                const double* yp = yv.data() + p * M;
                double* gxp = gx.data() + p * M;
                double gmean = 0.0, gymean = 0.0;
                for (std::size_t i = 0; i < M; ++i) {
                    gmean += gp[i];
                    gymean += gp[i] * yp[i];
                }
                gmean /= static_cast<double>(M);
                gymean /= static_cast<double>(M);
                const double inv = inv_std[p];
                for (std::size_t i = 0; i < M; ++i) {
                    gxp[i] += inv * (gp[i] - gmean - yp[i] * gymean);
                }
            }
        });
    }
    return r;
}

Tensor nn_upsample(const Tensor& x, int factor) {
    require_rank4(x, "nn_upsample");
    if (factor < 1) throw value_error("nn_upsample: factor must be >= 1");
    const std::size_t f = static_cast<std::size_t>(factor);
    const std::size_t B = x.batch(), C = x.channels(), H = x.height(), W = x.width();
    const std::size_t OH = H * f, OW = W * f;
    const auto& xv = x.values();
    std::vector<double> out(B * C * OH * OW);
    for (std::size_t p = 0; p < B * C; ++p) {
        const double* ip = xv.data() + p * H * W;
        double* op = out.data() + p * OH * OW;
        for (std::size_t oy = 0; oy < OH; ++oy) {
            const double* irow = ip + (oy / f) * W;
            double* orow = op + oy * OW;
            for (std::size_t ox = 0; ox < OW; ++ox) orow[ox] = irow[ox / f];
        }
    }
    Tensor r = Tensor::from_values({B, C, OH, OW}, std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), B, C, H, W, f](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, B * C * H * W);
            const std::size_t OH = H * f, OW = W * f;
            for (std::size_t p = 0; p < B * C; ++p) {
                const double* gp = g->data() + p * OH * OW;
                double* gxp = gx.data() + p * H * W;
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    const double* grow = gp + oy * OW;
                    double* gxrow = gxp + (oy / f) * W;
                    for (std::size_t ox = 0; ox < OW; ++ox) gxrow[ox / f] += grow[ox];
                }
            }
        });
    }
    return r;
}

Tensor downsample_avg(const Tensor& x, int factor) {
    require_rank4(x, "downsample_avg");
    if (factor < 1) throw value_error("downsample_avg: factor must be >= 1");
    const std::size_t f = static_cast<std::size_t>(factor);
    const std::size_t B = x.batch(), C = x.channels(), H = x.height(), W = x.width();
    if (H % f != 0 || W % f != 0) {
        throw shape_error("downsample_avg: extents " + shape_str(x.shape()) +
                          " not divisible by factor " + std::to_string(factor));
    }
    const std::size_t OH = H / f, OW = W / f;
    const double inv = 1.0 / static_cast<double>(f * f);
    const auto& xv = x.values();
    std::vector<double> out(B * C * OH * OW, 0.0);
    for (std::size_t p = 0; p < B * C; ++p) {
        const double* ip = xv.data() + p * H * W;
        double* op = out.data() + p * OH * OW;
        for (std::size_t y = 0; y < H; ++y) {
            const double* irow = ip + y * W;
            double* orow = op + (y / f) * OW;
            for (std::size_t xx = 0; xx < W; ++xx) orow[xx / f] += irow[xx];
        }
        for (std::size_t i = 0; i < OH * OW; ++i) op[i] *= inv;
    }
    Tensor r = Tensor::from_values({B, C, OH, OW}, std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), B, C, H, W, f, inv](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, B * C * H * W);
            const std::size_t OW = W / f;
            const std::size_t OHW = (H / f) * OW;
            for (std::size_t p = 0; p < B * C; ++p) {
                const double* gp = g->data() + p * OHW;
                double* gxp = gx.data() + p * H * W;
                for (std::size_t y = 0; y < H; ++y) {
                    const double* grow = gp + (y / f) * OW;
                    double* gxrow = gxp + y * W;
                    for (std::size_t xx = 0; xx < W; ++xx) gxrow[xx] += grow[xx / f] * inv;
                }
            }
        });
    }
    return r;
}

namespace {

// Symmetric reflection about half-sample borders; conserves kernel mass for
// symmetric kernels no matter how large the radius.
std::size_t fold_index(long long m, std::size_t len) {
    const long long n = static_cast<long long>(len);
    while (m < 0 || m >= n) {
        if (m < 0) m = -1 - m;
        if (m >= n) m = 2 * n - 1 - m;
    }
    return static_cast<std::size_t>(m);
}

std::vector<double> gaussian_kernel(double sigma, int& radius) {
    radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> w(2 * static_cast<std::size_t>(radius) + 1);
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double v = std::exp(-0.5 * (static_cast<double>(k) * k) / (sigma * sigma));
        w[static_cast<std::size_t>(k + radius)] = v;
        total += v;
    }
    for (double& v : w) v /= total;
    return w;
}

void blur_line(const double* in, double* out, std::size_t len, std::size_t stride,
               const std::vector<double>& w, int radius) {
    for (std::size_t j = 0; j < len; ++j) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            const std::size_t idx = fold_index(static_cast<long long>(j) + k, len);
            acc += w[static_cast<std::size_t>(k + radius)] * in[idx * stride];
        }
        out[j * stride] = acc;
    }
}

void blur_line_adjoint(const double* gout, double* gin, std::size_t len, std::size_t stride,
                       const std::vector<double>& w, int radius) {
    for (std::size_t j = 0; j < len; ++j) {
        const double gv = gout[j * stride];
        for (int k = -radius; k <= radius; ++k) {
            const std::size_t idx = fold_index(static_cast<long long>(j) + k, len);
            gin[idx * stride] += w[static_cast<std::size_t>(k + radius)] * gv;
        }
    }
}

void blur_planes(const std::vector<double>& in, std::vector<double>& out, std::size_t planes,
                 std::size_t H, std::size_t W, const std::vector<double>& w, int radius) {
    std::vector<double> tmp(H * W);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* ip = in.data() + p * H * W;
        double* op = out.data() + p * H * W;
        for (std::size_t y = 0; y < H; ++y) blur_line(ip + y * W, tmp.data() + y * W, W, 1, w, radius);
        for (std::size_t x = 0; x < W; ++x) blur_line(tmp.data() + x, op + x, H, W, w, radius);
    }
}

void blur_planes_adjoint(const std::vector<double>& gout, std::vector<double>& gin,
                         std::size_t planes, std::size_t H, std::size_t W,
                         const std::vector<double>& w, int radius) {
    std::vector<double> tmp(H * W);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* gp = gout.data() + p * H * W;
        double* gip = gin.data() + p * H * W;
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::size_t x = 0; x < W; ++x) blur_line_adjoint(gp + x, tmp.data() + x, H, W, w, radius);
        for (std::size_t y = 0; y < H; ++y) blur_line_adjoint(tmp.data() + y * W, gip + y * W, W, 1, w, radius);
    }
}

}  // namespace

Tensor gaussian_blur(const Tensor& x, double sigma) {
    require_rank4(x, "gaussian_blur");
    if (!(sigma > 0.0)) throw value_error("gaussian_blur: sigma must be positive");
    int radius = 0;
    const std::vector<double> w = gaussian_kernel(sigma, radius);
    const std::size_t planes = x.batch() * x.channels();
    const std::size_t H = x.height(), W = x.width();
    std::vector<double> out(x.numel());
    blur_planes(x.values(), out, planes, H, W, w, radius);
    Tensor r = Tensor::from_values(x.shape(), std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), w, radius, planes, H, W](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, planes * H * W);
            std::vector<double> gtmp(planes * H * W, 0.0);
            blur_planes_adjoint(*g, gtmp, planes, H, W, w, radius);
            for (std::size_t i = 0; i < gtmp.size(); ++i) gx[i] += gtmp[i];
        });
    }
    return r;
}

Tensor softmax_spatial(const Tensor& s) {
    require_rank4(s, "softmax_spatial");
    if (s.batch() != 1 || s.channels() != 1) {
        throw shape_error("softmax_spatial: expected [1,1,H,W], got " + shape_str(s.shape()));
    }
    const auto& sv = s.values();
    double mx = sv[0];
    for (double v : sv) mx = std::max(mx, v);
    std::vector<double> out(sv.size());
    double z = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
        out[i] = std::exp(sv[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    Tensor r = Tensor::from_values(s.shape(), std::move(out));
    if (Tape* tape = op_tape({&s})) {
        tape->record(r);
        tape->push_rule([on = r.node(), sn = s.node(), p = r.detach(), n = s.numel()](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || sn < 0) return;
            auto& gs = t.accum_buffer(sn, n);
            const auto& pv = p.values();
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += (*g)[i] * pv[i];
            for (std::size_t i = 0; i < n; ++i) gs[i] += pv[i] * ((*g)[i] - dot);
        });
    }
    return r;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank4(x, "bilinear_resize");
    if (out_h == 0 || out_w == 0) throw shape_error("bilinear_resize: zero output extent");
    const std::size_t B = x.batch(), C = x.channels(), H = x.height(), W = x.width();

    struct Taps {
        std::vector<std::size_t> i0, i1;
        std::vector<double> f;
    };
    auto make_taps = [](std::size_t in_len, std::size_t out_len) {
        Taps taps;
        taps.i0.resize(out_len);
        taps.i1.resize(out_len);
        taps.f.resize(out_len);
        const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
        for (std::size_t o = 0; o < out_len; ++o) {
            double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in_len - 1));
            const std::size_t i0 = static_cast<std::size_t>(std::floor(src));
            taps.i0[o] = i0;
            taps.i1[o] = std::min(i0 + 1, in_len - 1);
            taps.f[o] = src - static_cast<double>(i0);
        }
        return taps;
    };
    const Taps tx = make_taps(W, out_w), ty = make_taps(H, out_h);

    const auto& xv = x.values();
    std::vector<double> out(B * C * out_h * out_w);
    for (std::size_t p = 0; p < B * C; ++p) {
        const double* ip = xv.data() + p * H * W;
        double* op = out.data() + p * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const double* r0 = ip + ty.i0[oy] * W;
            const double* r1 = ip + ty.i1[oy] * W;
            const double fy = ty.f[oy];
            double* orow = op + oy * out_w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double fx = tx.f[ox];
                const double top = (1.0 - fx) * r0[tx.i0[ox]] + fx * r0[tx.i1[ox]];
                const double bot = (1.0 - fx) * r1[tx.i0[ox]] + fx * r1[tx.i1[ox]];
                orow[ox] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    Tensor r = Tensor::from_values({B, C, out_h, out_w}, std::move(out));
    if (Tape* tape = op_tape({&x})) {
        tape->record(r);
        tape->push_rule([on = r.node(), xn = x.node(), tx, ty, B, C, H, W, out_h,
                         out_w](Tape& t) {
            const auto* g = t.grad_buffer(on);
            if (!g || xn < 0) return;
            auto& gx = t.accum_buffer(xn, B * C * H * W);
            for (std::size_t p = 0; p < B * C; ++p) {
                const double* gp = g->data() + p * out_h * out_w;
                double* gxp = gx.data() + p * H * W;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const double fy = ty.f[oy];
                    double* r0 = gxp + ty.i0[oy] * W;
                    double* r1 = gxp + ty.i1[oy] * W;
                    const double* grow = gp + oy * out_w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const double fx = tx.f[ox];
                        const double gv = grow[ox];
                        r0[tx.i0[ox]] += (1.0 - fy) * (1.0 - fx) * gv;
                        r0[tx.i1[ox]] += (1.0 - fy) * fx * gv;
                        r1[tx.i0[ox]] += fy * (1.0 - fx) * gv;
                        r1[tx.i1[ox]] += fy * fx * gv;
                    }
                }
            }
        });
    }
    return r;
}

}  // namespace gazeforge
