#include "conv_kernels.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <vector>

namespace lvdiag::detail {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::OuterStride<>;

struct Geometry {
    std::ptrdiff_t ci, d, h, w;
    std::ptrdiff_t co, kd, kh, kw;
    std::ptrdiff_t od, oh, ow;
    std::ptrdiff_t sd, sh, sw;
    std::ptrdiff_t pd, ph, pw;

    std::ptrdiff_t col_rows() const { return ci * kd * kh * kw; }
    std::ptrdiff_t plane() const { return oh * ow; }
};

Geometry make_geometry(const Shape& x, const Shape& wshape, Dims3 stride, Dims3 pad) {
    auto s = [](std::size_t v) { return static_cast<std::ptrdiff_t>(v); };
    Geometry g{};
    g.ci = s(x[0]); g.d = s(x[1]); g.h = s(x[2]); g.w = s(x[3]);
    g.co = s(wshape[0]); g.kd = s(wshape[2]); g.kh = s(wshape[3]); g.kw = s(wshape[4]);
    g.sd = s(stride[0]); g.sh = s(stride[1]); g.sw = s(stride[2]);
    g.pd = s(pad[0]); g.ph = s(pad[1]); g.pw = s(pad[2]);
    g.od = s(conv_out_extent(x[1], wshape[2], stride[0], pad[0]));
    g.oh = s(conv_out_extent(x[2], wshape[3], stride[1], pad[1]));
    g.ow = s(conv_out_extent(x[3], wshape[4], stride[2], pad[2]));
    return g;
}

// Range [lo, hi) of output columns whose input column ow*stride + k - pad lies in [0, n).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t n, std::ptrdiff_t out, std::ptrdiff_t k,
                                                      std::ptrdiff_t stride, std::ptrdiff_t pad) {
    std::ptrdiff_t lo = 0;
    if (pad > k) lo = (pad - k + stride - 1) / stride;
    std::ptrdiff_t hi = 0;
    if (n + pad - k > 0) hi = (n + pad - k + stride - 1) / stride;
    return {std::min(lo, out), std::clamp(hi, std::min(lo, out), out)};
}

// Fills cols (col_rows x plane) for output depth slice `od`.
void im2col(const double* x, const Geometry& g, std::ptrdiff_t od, double* cols) {
    const std::ptrdiff_t plane = g.plane();
    std::ptrdiff_t row = 0;
    for (std::ptrdiff_t c = 0; c < g.ci; ++c) {
        for (std::ptrdiff_t kd = 0; kd < g.kd; ++kd) {
            const std::ptrdiff_t id = od * g.sd + kd - g.pd;
            const bool depth_ok = id >= 0 && id < g.d;
            const double* src = depth_ok ? x + (c * g.d + id) * g.h * g.w : nullptr;
            for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
                for (std::ptrdiff_t kw = 0; kw < g.kw; ++kw, ++row) {
                    double* dst = cols + row * plane;
                    if (!depth_ok) {
                        std::fill(dst, dst + plane, 0.0);
                        continue;
                    }
                    const auto [lo, hi] = valid_range(g.w, g.ow, kw, g.sw, g.pw);
                    for (std::ptrdiff_t oh = 0; oh < g.oh; ++oh) {
                        double* drow = dst + oh * g.ow;
                        const std::ptrdiff_t ih = oh * g.sh + kh - g.ph;
                        if (ih < 0 || ih >= g.h) {
                            std::fill(drow, drow + g.ow, 0.0);
                            continue;
                        }
                        const double* srow = src + ih * g.w + kw - g.pw;
                        std::fill(drow, drow + lo, 0.0);
                        if (g.sw == 1) {
                            for (std::ptrdiff_t o = lo; o < hi; ++o) drow[o] = srow[o];
                        } else {
                            for (std::ptrdiff_t o = lo; o < hi; ++o) drow[o] = srow[o * g.sw];
                        }
                        std::fill(drow + hi, drow + g.ow, 0.0);
                    }
                }
            }
        }
    }
}

// Scatter-adds cols back into x; adjoint of im2col.
void col2im_add(const double* cols, const Geometry& g, std::ptrdiff_t od, double* x) {
    const std::ptrdiff_t plane = g.plane();
    std::ptrdiff_t row = 0;
    for (std::ptrdiff_t c = 0; c < g.ci; ++c) {
        for (std::ptrdiff_t kd = 0; kd < g.kd; ++kd) {
            const std::ptrdiff_t id = od * g.sd + kd - g.pd;
            if (id < 0 || id >= g.d) {
                row += g.kh * g.kw;
                continue;
            }
            double* dst = x + (c * g.d + id) * g.h * g.w;
            for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
                for (std::ptrdiff_t kw = 0; kw < g.kw; ++kw, ++row) {
                    const double* src = cols + row * plane;
                    const auto [lo, hi] = valid_range(g.w, g.ow, kw, g.sw, g.pw);
                    for (std::ptrdiff_t oh = 0; oh < g.oh; ++oh) {
                        const std::ptrdiff_t ih = oh * g.sh + kh - g.ph;
                        if (ih < 0 || ih >= g.h) continue;
                        const double* srow = src + oh * g.ow;
                        double* drow = dst + ih * g.w + kw - g.pw;
                        if (g.sw == 1) {
                            for (std::ptrdiff_t o = lo; o < hi; ++o) drow[o] += srow[o];
                        } else {
                            for (std::ptrdiff_t o = lo; o < hi; ++o) drow[o * g.sw] += srow[o];
                        }
                    }
                }
            }
        }
    }
}

// Direct kernels for stride 1 and kernel width 3 on wide rows, where the
// skinny im2col GEMM is bandwidth-bound. Rows of the accumulator stay in L1.
bool use_direct(const Geometry& g) {
    return g.sd == 1 && g.sh == 1 && g.sw == 1 && g.kw == 3 && g.ow >= 48;
}

struct Padded {
    AlignedVector data;
    std::ptrdiff_t dp, hp, wp;

    const double* row(std::ptrdiff_t c, std::ptrdiff_t d, std::ptrdiff_t h) const {
        return data.data() + ((c * dp + d) * hp + h) * wp;
    }
    double* row(std::ptrdiff_t c, std::ptrdiff_t d, std::ptrdiff_t h) {
        return data.data() + ((c * dp + d) * hp + h) * wp;
    }
};

Padded make_padded(const Geometry& g) {
    Padded p;
    p.dp = g.d + 2 * g.pd;
    p.hp = g.h + 2 * g.ph;
    p.wp = g.w + 2 * g.pw;
    p.data.assign(std::size_t(g.ci * p.dp * p.hp * p.wp), 0.0);
    return p;
}

Padded pad_input(const double* x, const Geometry& g) {
    Padded p = make_padded(g);
    for (std::ptrdiff_t c = 0; c < g.ci; ++c)
        for (std::ptrdiff_t d = 0; d < g.d; ++d)
            for (std::ptrdiff_t h = 0; h < g.h; ++h)
                std::copy_n(x + ((c * g.d + d) * g.h + h) * g.w, g.w, p.row(c, d + g.pd, h + g.ph) + g.pw);
    return p;
}

const double* kernel_row(const double* w, const Geometry& g, std::ptrdiff_t co, std::ptrdiff_t ci,
                         std::ptrdiff_t kd, std::ptrdiff_t kh) {
    return w + (((co * g.ci + ci) * g.kd + kd) * g.kh + kh) * 3;
}

void direct_forward(const double* x, const double* w, const Geometry& g, double* out) {
    const Padded xp = pad_input(x, g);
    AlignedVector acc(std::size_t(g.co * g.ow));
    for (std::ptrdiff_t od = 0; od < g.od; ++od)
        for (std::ptrdiff_t oh = 0; oh < g.oh; ++oh) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::ptrdiff_t ci = 0; ci < g.ci; ++ci)
                for (std::ptrdiff_t kd = 0; kd < g.kd; ++kd)
                    for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
                        const double* __restrict r = xp.row(ci, od + kd, oh + kh);
                        for (std::ptrdiff_t co = 0; co < g.co; ++co) {
                            const double* k = kernel_row(w, g, co, ci, kd, kh);
                            const double w0 = k[0], w1 = k[1], w2 = k[2];
                            double* __restrict a = acc.data() + co * g.ow;
                            for (std::ptrdiff_t o = 0; o < g.ow; ++o) a[o] += w0 * r[o] + w1 * r[o + 1] + w2 * r[o + 2];
                        }
                    }
            for (std::ptrdiff_t co = 0; co < g.co; ++co)
                std::copy_n(acc.data() + co * g.ow, g.ow, out + ((co * g.od + od) * g.oh + oh) * g.ow);
        }
}

void direct_backward_data(const double* gout, const double* w, const Geometry& g, double* gin) {
    Padded gp = make_padded(g);
    // Output rows framed by two zeros on each side so every padded input column
    // reads three taps without bounds checks.
    const std::ptrdiff_t span = g.ow + 4;
    AlignedVector rows(std::size_t(g.co * span), 0.0);
    for (std::ptrdiff_t od = 0; od < g.od; ++od)
        for (std::ptrdiff_t oh = 0; oh < g.oh; ++oh) {
            for (std::ptrdiff_t co = 0; co < g.co; ++co)
                std::copy_n(gout + ((co * g.od + od) * g.oh + oh) * g.ow, g.ow, rows.data() + co * span + 2);
            for (std::ptrdiff_t ci = 0; ci < g.ci; ++ci)
                for (std::ptrdiff_t kd = 0; kd < g.kd; ++kd)
                    for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
                        double* __restrict dst = gp.row(ci, od + kd, oh + kh);
                        for (std::ptrdiff_t co = 0; co < g.co; ++co) {
                            const double* k = kernel_row(w, g, co, ci, kd, kh);
                            const double w0 = k[0], w1 = k[1], w2 = k[2];
                            const double* __restrict q = rows.data() + co * span;
                            for (std::ptrdiff_t x = 0; x < gp.wp; ++x)
                                dst[x] += w0 * q[x + 2] + w1 * q[x + 1] + w2 * q[x];
                        }
                    }
        }
    for (std::ptrdiff_t c = 0; c < g.ci; ++c)
        for (std::ptrdiff_t d = 0; d < g.d; ++d)
            for (std::ptrdiff_t h = 0; h < g.h; ++h)
                std::copy_n(gp.row(c, d + g.pd, h + g.ph) + g.pw, g.w, gin + ((c * g.d + d) * g.h + h) * g.w);
}

void direct_backward_weight(const double* x, const double* gout, const Geometry& g, double* gw) {
    const Padded xp = pad_input(x, g);
    for (std::ptrdiff_t od = 0; od < g.od; ++od)
        for (std::ptrdiff_t oh = 0; oh < g.oh; ++oh)
            for (std::ptrdiff_t ci = 0; ci < g.ci; ++ci)
                for (std::ptrdiff_t kd = 0; kd < g.kd; ++kd)
                    for (std::ptrdiff_t kh = 0; kh < g.kh; ++kh) {
                        const double* __restrict r = xp.row(ci, od + kd, oh + kh);
                        for (std::ptrdiff_t co = 0; co < g.co; ++co) {
                            const double* q = gout + ((co * g.od + od) * g.oh + oh) * g.ow;
                            double s0 = 0.0, s1 = 0.0, s2 = 0.0;
#pragma omp simd reduction(+ : s0, s1, s2)
                            for (std::ptrdiff_t o = 0; o < g.ow; ++o) {
                                s0 += q[o] * r[o];
                                s1 += q[o] * r[o + 1];
                                s2 += q[o] * r[o + 2];
                            }
                            double* k = gw + (((co * g.ci + ci) * g.kd + kd) * g.kh + kh) * 3;
                            k[0] += s0;
                            k[1] += s1;
                            k[2] += s2;
                        }
                    }
}

} // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0 || in + 2 * pad < kernel) return 0;
    return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv3d_forward(const Tensor& x, const Tensor& w, Dims3 stride, Dims3 pad) {
    const Geometry g = make_geometry(x.shape(), w.shape(), stride, pad);
    Tensor out({std::size_t(g.co), std::size_t(g.od), std::size_t(g.oh), std::size_t(g.ow)});
    if (use_direct(g)) {
        direct_forward(x.data().data(), w.data().data(), g, out.data().data());
        return out;
    }
    MatRM cols(g.col_rows(), g.plane());
    Eigen::Map<const MatRM> wm(w.data().data(), g.co, g.col_rows());
    for (std::ptrdiff_t od = 0; od < g.od; ++od) {
        im2col(x.data().data(), g, od, cols.data());
        Eigen::Map<MatRM, 0, Strided> slice(out.data().data() + od * g.plane(), g.co, g.plane(),
                                            Strided(g.od * g.plane()));
        slice.noalias() = wm * cols;
    }
    return out;
}

Tensor conv3d_backward_data(const Tensor& gout, const Tensor& w, const Shape& in_shape, Dims3 stride, Dims3 pad) {
    const Geometry g = make_geometry(in_shape, w.shape(), stride, pad);
    Tensor gin(in_shape);
    if (use_direct(g)) {
        direct_backward_data(gout.data().data(), w.data().data(), g, gin.data().data());
        return gin;
    }
    MatRM cols(g.col_rows(), g.plane());
    Eigen::Map<const MatRM> wm(w.data().data(), g.co, g.col_rows());
    for (std::ptrdiff_t od = 0; od < g.od; ++od) {
        Eigen::Map<const MatRM, 0, Strided> slice(gout.data().data() + od * g.plane(), g.co, g.plane(),
                                                  Strided(g.od * g.plane()));
        cols.noalias() = wm.transpose() * slice;
        col2im_add(cols.data(), g, od, gin.data().data());
    }
    return gin;
}

Tensor conv3d_backward_weight(const Tensor& x, const Tensor& gout, const Shape& w_shape, Dims3 stride, Dims3 pad) {
    const Geometry g = make_geometry(x.shape(), w_shape, stride, pad);
    Tensor gw(w_shape);
    if (use_direct(g)) {
        direct_backward_weight(x.data().data(), gout.data().data(), g, gw.data().data());
        return gw;
    }
    MatRM cols(g.col_rows(), g.plane());
    Eigen::Map<MatRM> gwm(gw.data().data(), g.co, g.col_rows());
    for (std::ptrdiff_t od = 0; od < g.od; ++od) {
        im2col(x.data().data(), g, od, cols.data());
        Eigen::Map<const MatRM, 0, Strided> slice(gout.data().data() + od * g.plane(), g.co, g.plane(),
                                                  Strided(g.od * g.plane()));
        gwm.noalias() += slice * cols.transpose();
    }
    return gw;
}

} // namespace lvdiag::detail
