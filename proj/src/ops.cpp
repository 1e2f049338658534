#include "canet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace canet {

Tensor mask_to_tensor(const BinaryMask& m) {
    std::vector<double> d(m.v.size());
    for (std::size_t i = 0; i < m.v.size(); ++i) d[i] = m.v[i] ? 1.0 : 0.0;
    return Tensor::from_data({m.h, m.w}, std::move(d));
}

BinaryMask argmax_foreground(const Tensor& probs) {
    if (probs.ndim() != 3 || probs.dim(0) != 2) throw ShapeError("argmax_foreground expects [2,H,W], got " + shape_str(probs.shape()));
    const int h = probs.dim(1), w = probs.dim(2);
    BinaryMask m(h, w);
    const double* bg = probs.data().data();
    const double* fg = bg + static_cast<std::size_t>(h) * w;
    for (int i = 0; i < h * w; ++i) m.v[static_cast<std::size_t>(i)] = fg[i] > bg[i] ? 1 : 0;
    return m;
}

namespace ops {
namespace {

void check_chw(const Tensor& t, const char* who) {
    if (t.ndim() != 3) throw ShapeError(std::string(who) + " expects a [C,H,W] tensor, got " + shape_str(t.shape()));
}

// Output-column range [lo,hi] for which iw = ow*stride + iw0 stays in [0, in_w).
inline void valid_range(int iw0, int stride, int in_w, int out_w, int& lo, int& hi) {
    lo = 0;
    if (iw0 < 0) lo = (-iw0 + stride - 1) / stride;
    const int top = in_w - 1 - iw0;
    hi = top < 0 ? -1 : std::min(out_w - 1, top / stride);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Conv2dParams& p) {
    check_chw(input, "conv2d");
    if (p.weight.ndim() != 4) throw ShapeError("conv2d weight must be [out,in,kh,kw], got " + shape_str(p.weight.shape()));
    const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const int out_c = p.weight.dim(0), w_in_c = p.weight.dim(1), kh = p.weight.dim(2), kw = p.weight.dim(3);
    if (w_in_c != in_c)
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(in_c) + ", weight expects " + std::to_string(w_in_c));
    if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d kernel dims must be odd");
    if (p.bias.defined() && (p.bias.ndim() != 1 || p.bias.dim(0) != out_c)) throw ShapeError("conv2d bias shape mismatch");
    if (p.stride < 1 || p.dilation_h < 1 || p.dilation_w < 1 || p.pad_h < 0 || p.pad_w < 0)
        throw ShapeError("conv2d invalid stride/dilation/padding");

    const int ext_h = (kh - 1) * p.dilation_h + 1;
    const int ext_w = (kw - 1) * p.dilation_w + 1;
    const int out_h = (in_h + 2 * p.pad_h - ext_h) / p.stride + 1;
    const int out_w = (in_w + 2 * p.pad_w - ext_w) / p.stride + 1;
    if (in_h + 2 * p.pad_h < ext_h || in_w + 2 * p.pad_w < ext_w || out_h <= 0 || out_w <= 0)
        throw ShapeError("conv2d output dims non-positive for input " + shape_str(input.shape()));

    const int s = p.stride;
    std::vector<double> out(static_cast<std::size_t>(out_c) * out_h * out_w, 0.0);
    const double* in = input.data().data();
    const double* wt = p.weight.data().data();
    for (int oc = 0; oc < out_c; ++oc) {
        const double b = p.bias.defined() ? p.bias.data()[static_cast<std::size_t>(oc)] : 0.0;
        double* oplane = out.data() + static_cast<std::size_t>(oc) * out_h * out_w;
        std::fill(oplane, oplane + static_cast<std::size_t>(out_h) * out_w, b);
        for (int ic = 0; ic < in_c; ++ic) {
            const double* iplane = in + static_cast<std::size_t>(ic) * in_h * in_w;
            const double* wbase = wt + (static_cast<std::size_t>(oc) * in_c + ic) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                const int ih0 = ky * p.dilation_h - p.pad_h;
                int oh_lo, oh_hi;
                valid_range(ih0, s, in_h, out_h, oh_lo, oh_hi);
                for (int kx = 0; kx < kw; ++kx) {
                    const double wv = wbase[ky * kw + kx];
                    const int iw0 = kx * p.dilation_w - p.pad_w;
                    int lo, hi;
                    valid_range(iw0, s, in_w, out_w, lo, hi);
                    if (hi < lo) continue;
                    for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                        const double* irow = iplane + static_cast<std::size_t>(oh * s + ih0) * in_w;
                        double* orow = oplane + static_cast<std::size_t>(oh) * out_w;
                        if (s == 1) {
                            const double* ip = irow + iw0;
                            for (int ow = lo; ow <= hi; ++ow) orow[ow] += wv * ip[ow];
                        } else {
                            for (int ow = lo; ow <= hi; ++ow) orow[ow] += wv * irow[ow * s + iw0];
                        }
                    }
                }
            }
        }
    }

    Tensor weight = p.weight, bias = p.bias, inp = input;
    const Conv2dParams cfg = p;
    return make_op_result(
        {out_c, out_h, out_w}, std::move(out), {input, p.weight, p.bias},
        [inp, weight, bias, cfg, in_c, in_h, in_w, out_c, out_h, out_w, kh, kw](TensorNode& self) {
            const double* gout = self.grad.data();
            const bool need_gin = inp.requires_grad();
            const bool need_gw = weight.requires_grad();
            const bool need_gb = bias.defined() && bias.requires_grad();
            if (need_gb) {
                double* gb = bias.ensure_grad().data();
                for (int oc = 0; oc < out_c; ++oc) {
                    const double* gplane = gout + static_cast<std::size_t>(oc) * out_h * out_w;
                    double acc = 0.0;
                    for (int i = 0; i < out_h * out_w; ++i) acc += gplane[i];
                    gb[oc] += acc;
                }
            }
            if (!need_gin && !need_gw) return;
            double* gin = need_gin ? inp.ensure_grad().data() : nullptr;
            double* gw = need_gw ? weight.ensure_grad().data() : nullptr;
            const double* in = inp.data().data();
            const double* wt = weight.data().data();
            const int s = cfg.stride;
            for (int oc = 0; oc < out_c; ++oc) {
                const double* gplane = gout + static_cast<std::size_t>(oc) * out_h * out_w;
                for (int ic = 0; ic < in_c; ++ic) {
                    const double* iplane = in + static_cast<std::size_t>(ic) * in_h * in_w;
                    double* giplane = need_gin ? gin + static_cast<std::size_t>(ic) * in_h * in_w : nullptr;
                    const std::size_t wbase = (static_cast<std::size_t>(oc) * in_c + ic) * kh * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int ih0 = ky * cfg.dilation_h - cfg.pad_h;
                        int oh_lo, oh_hi;
                        valid_range(ih0, s, in_h, out_h, oh_lo, oh_hi);
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv = wt[wbase + ky * kw + kx];
                            const int iw0 = kx * cfg.dilation_w - cfg.pad_w;
                            int lo, hi;
                            valid_range(iw0, s, in_w, out_w, lo, hi);
                            if (hi < lo) continue;
                            double gw_acc = 0.0;
                            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
                                const double* grow = gplane + static_cast<std::size_t>(oh) * out_w;
                                const double* irow = iplane + static_cast<std::size_t>(oh * s + ih0) * in_w;
                                double* girow = need_gin ? giplane + static_cast<std::size_t>(oh * s + ih0) * in_w : nullptr;
                                if (s == 1) {
                                    const double* ip = irow + iw0;
                                    if (need_gin && need_gw) {
                                        double* gp = girow + iw0;
                                        for (int ow = lo; ow <= hi; ++ow) {
                                            const double g = grow[ow];
                                            gw_acc += g * ip[ow];
                                            gp[ow] += wv * g;
                                        }
                                    } else if (need_gw) {
                                        for (int ow = lo; ow <= hi; ++ow) gw_acc += grow[ow] * ip[ow];
                                    } else {
                                        double* gp = girow + iw0;
                                        for (int ow = lo; ow <= hi; ++ow) gp[ow] += wv * grow[ow];
                                    }
                                } else {
                                    for (int ow = lo; ow <= hi; ++ow) {
                                        const double g = grow[ow];
                                        const int iw = ow * s + iw0;
                                        if (need_gw) gw_acc += g * irow[iw];
                                        if (need_gin) girow[iw] += wv * g;
                                    }
                                }
                            }
                            if (need_gw) gw[wbase + ky * kw + kx] += gw_acc;
                        }
                    }
                }
            }
        });
}

Tensor max_pool2d(const Tensor& input, int window, int stride) {
    check_chw(input, "max_pool2d");
    const int c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    if (window < 1 || stride < 1) throw ShapeError("max_pool2d invalid window/stride");
    if (window > in_h || window > in_w)
        throw ShapeError("max_pool2d window " + std::to_string(window) + " exceeds spatial dims of " + shape_str(input.shape()));
    const int out_h = (in_h - window) / stride + 1;
    const int out_w = (in_w - window) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(c) * out_h * out_w);
    auto argmax = std::make_shared<std::vector<int>>(out.size());
    const double* in = input.data().data();
    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + static_cast<std::size_t>(ch) * in_h * in_w;
        for (int oh = 0; oh < out_h; ++oh) {
            for (int ow = 0; ow < out_w; ++ow, ++o) {
                const int y0 = oh * stride, x0 = ow * stride;
                double best = plane[static_cast<std::size_t>(y0) * in_w + x0];
                int best_idx = y0 * in_w + x0;
                for (int dy = 0; dy < window; ++dy) {
                    const double* row = plane + static_cast<std::size_t>(y0 + dy) * in_w + x0;
                    for (int dx = 0; dx < window; ++dx) {
                        if (row[dx] > best) {  // strict: first occurrence wins on ties
                            best = row[dx];
                            best_idx = (y0 + dy) * in_w + x0 + dx;
                        }
                    }
                }
                out[o] = best;
                (*argmax)[o] = ch * in_h * in_w + best_idx;
            }
        }
    }

    Tensor inp = input;
    return make_op_result({c, out_h, out_w}, std::move(out), {input},
                          [inp, argmax](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              for (std::size_t i = 0; i < argmax->size(); ++i) gin[(*argmax)[i]] += g[i];
                          });
}

namespace {

struct AxisMap {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

AxisMap make_axis_map(int in, int out) {
    AxisMap m;
    m.lo.resize(static_cast<std::size_t>(out));
    m.hi.resize(static_cast<std::size_t>(out));
    m.frac.resize(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
        double src = 0.0;
        if (in > 1 && out > 1) src = static_cast<double>(o) * (in - 1) / (out - 1);
        int a = static_cast<int>(std::floor(src));
        if (a > in - 2) a = std::max(0, in - 2);
        m.lo[static_cast<std::size_t>(o)] = a;
        m.hi[static_cast<std::size_t>(o)] = std::min(a + 1, in - 1);
        m.frac[static_cast<std::size_t>(o)] = src - a;
    }
    return m;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
    check_chw(input, "bilinear_resize");
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize target dims must be >= 1");
    const int c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const AxisMap ym = make_axis_map(in_h, out_h);
    const AxisMap xm = make_axis_map(in_w, out_w);

    std::vector<double> out(static_cast<std::size_t>(c) * out_h * out_w);
    const double* in = input.data().data();
    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + static_cast<std::size_t>(ch) * in_h * in_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = ym.lo[static_cast<std::size_t>(oy)], y1 = ym.hi[static_cast<std::size_t>(oy)];
            const double fy = ym.frac[static_cast<std::size_t>(oy)];
            const double* r0 = plane + static_cast<std::size_t>(y0) * in_w;
            const double* r1 = plane + static_cast<std::size_t>(y1) * in_w;
            for (int ox = 0; ox < out_w; ++ox, ++o) {
                const int x0 = xm.lo[static_cast<std::size_t>(ox)], x1 = xm.hi[static_cast<std::size_t>(ox)];
                const double fx = xm.frac[static_cast<std::size_t>(ox)];
                const double top = (1.0 - fx) * r0[x0] + fx * r0[x1];
                const double bot = (1.0 - fx) * r1[x0] + fx * r1[x1];
                out[o] = (1.0 - fy) * top + fy * bot;
            }
        }
    }

    Tensor inp = input;
    return make_op_result({c, out_h, out_w}, std::move(out), {input},
                          [inp, ym, xm, c, in_h, in_w, out_h, out_w](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              std::size_t o = 0;
                              for (int ch = 0; ch < c; ++ch) {
                                  double* gplane = gin + static_cast<std::size_t>(ch) * in_h * in_w;
                                  for (int oy = 0; oy < out_h; ++oy) {
                                      const int y0 = ym.lo[static_cast<std::size_t>(oy)], y1 = ym.hi[static_cast<std::size_t>(oy)];
                                      const double fy = ym.frac[static_cast<std::size_t>(oy)];
                                      for (int ox = 0; ox < out_w; ++ox, ++o) {
                                          const int x0 = xm.lo[static_cast<std::size_t>(ox)], x1 = xm.hi[static_cast<std::size_t>(ox)];
                                          const double fx = xm.frac[static_cast<std::size_t>(ox)];
                                          const double gv = g[o];
                                          gplane[static_cast<std::size_t>(y0) * in_w + x0] += (1.0 - fy) * (1.0 - fx) * gv;
                                          gplane[static_cast<std::size_t>(y0) * in_w + x1] += (1.0 - fy) * fx * gv;
                                          gplane[static_cast<std::size_t>(y1) * in_w + x0] += fy * (1.0 - fx) * gv;
                                          gplane[static_cast<std::size_t>(y1) * in_w + x1] += fy * fx * gv;
                                      }
                                  }
                              }
                          });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().size());
    const double* in = x.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    Tensor inp = x;
    return make_op_result(x.shape(), std::move(out), {x},
                          [inp](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              const double* in = inp.data().data();
                              for (std::size_t i = 0; i < self.data.size(); ++i)
                                  if (in[i] > 0.0) gin[i] += g[i];
                          });
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(who) + " shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.data().size());
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
    Tensor ta = a, tb = b;
    return make_op_result(a.shape(), std::move(out), {a, b},
                          [ta, tb](TensorNode& self) {
                              const double* g = self.grad.data();
                              if (ta.requires_grad()) {
                                  double* ga = ta.ensure_grad().data();
                                  for (std::size_t i = 0; i < self.data.size(); ++i) ga[i] += g[i];
                              }
                              if (tb.requires_grad()) {
                                  double* gb = tb.ensure_grad().data();
                                  for (std::size_t i = 0; i < self.data.size(); ++i) gb[i] += g[i];
                              }
                          });
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "elementwise_mul");
    std::vector<double> out(a.data().size());
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
    Tensor ta = a, tb = b;
    return make_op_result(a.shape(), std::move(out), {a, b},
                          [ta, tb](TensorNode& self) {
                              const double* g = self.grad.data();
                              const double* pa = ta.data().data();
                              const double* pb = tb.data().data();
                              if (ta.requires_grad()) {
                                  double* ga = ta.ensure_grad().data();
                                  for (std::size_t i = 0; i < self.data.size(); ++i) ga[i] += g[i] * pb[i];
                              }
                              if (tb.requires_grad()) {
                                  double* gb = tb.ensure_grad().data();
                                  for (std::size_t i = 0; i < self.data.size(); ++i) gb[i] += g[i] * pa[i];
                              }
                          });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) { return concat_channels(std::vector<Tensor>{a, b}); }

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels needs at least one input");
    check_chw(parts[0], "concat_channels");
    const int h = parts[0].dim(1), w = parts[0].dim(2);
    int total_c = 0;
    for (const auto& p : parts) {
        check_chw(p, "concat_channels");
        if (p.dim(1) != h || p.dim(2) != w)
            throw ShapeError("concat_channels spatial mismatch: " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
        total_c += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total_c) * h * w);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

    std::vector<Tensor> held = parts;
    return make_op_result({total_c, h, w}, std::move(out), parts,
                          [held](TensorNode& self) {
                              const double* g = self.grad.data();
                              std::size_t off = 0;
                              for (const auto& p : held) {
                                  const std::size_t n = p.data().size();
                                  if (p.requires_grad()) {
                                      Tensor t = p;
                                      double* gp = t.ensure_grad().data();
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                                  }
                                  off += n;
                              }
                          });
}

Tensor softmax_channels(const Tensor& x) {
    check_chw(x, "softmax_channels");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int hw = h * w;
    std::vector<double> out(x.data().size());
    const double* in = x.data().data();
    for (int p = 0; p < hw; ++p) {
        double m = in[p];
        for (int ch = 1; ch < c; ++ch) m = std::max(m, in[ch * hw + p]);
        double sum = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const double e = std::exp(in[ch * hw + p] - m);
            out[static_cast<std::size_t>(ch) * hw + p] = e;
            sum += e;
        }
        for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(ch) * hw + p] /= sum;
    }
    Tensor inp = x;
    return make_op_result(x.shape(), std::move(out), {x},
                          [inp, c, hw](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              const double* y = self.data.data();
                              for (int p = 0; p < hw; ++p) {
                                  double dot = 0.0;
                                  for (int ch = 0; ch < c; ++ch) dot += g[ch * hw + p] * y[ch * hw + p];
                                  for (int ch = 0; ch < c; ++ch) {
                                      const std::size_t i = static_cast<std::size_t>(ch) * hw + p;
                                      gin[i] += y[i] * (g[i] - dot);
                                  }
                              }
                          });
}

Tensor global_avg_pool(const Tensor& x) {
    check_chw(x, "global_avg_pool");
    const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
    std::vector<double> out(static_cast<std::size_t>(c));
    const double* in = x.data().data();
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        const double* plane = in + static_cast<std::size_t>(ch) * hw;
        for (int i = 0; i < hw; ++i) acc += plane[i];
        out[static_cast<std::size_t>(ch)] = acc / hw;
    }
    Tensor inp = x;
    return make_op_result({c}, std::move(out), {x},
                          [inp, c, hw](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              for (int ch = 0; ch < c; ++ch) {
                                  const double gv = g[ch] / hw;
                                  double* gp = gin + static_cast<std::size_t>(ch) * hw;
                                  for (int i = 0; i < hw; ++i) gp[i] += gv;
                              }
                          });
}

Tensor cross_entropy_spatial(const Tensor& probs, const BinaryMask& target) {
    if (probs.ndim() != 3 || probs.dim(0) != 2)
        throw ShapeError("cross_entropy_spatial expects [2,H,W] probabilities, got " + shape_str(probs.shape()));
    const int h = probs.dim(1), w = probs.dim(2);
    if (target.h != h || target.w != w)
        throw ShapeError("cross_entropy_spatial target " + std::to_string(target.h) + "x" + std::to_string(target.w) +
                         " vs prediction " + std::to_string(h) + "x" + std::to_string(w));
    const int n = h * w;
    const double* p = probs.data().data();
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double pv = p[target.v[static_cast<std::size_t>(i)] ? n + i : i];
        loss += -std::log(std::clamp(pv, kCrossEntropyClamp, 1.0));
    }
    loss /= n;

    Tensor pt = probs;
    BinaryMask tgt = target;
    return make_op_result({1}, {loss}, {probs},
                          [pt, tgt, n](TensorNode& self) {
                              if (!pt.requires_grad()) return;
                              double* gin = pt.ensure_grad().data();
                              const double* p = pt.data().data();
                              const double g = self.grad[0];
                              for (int i = 0; i < n; ++i) {
                                  const int idx = tgt.v[static_cast<std::size_t>(i)] ? n + i : i;
                                  const double pv = p[idx];
                                  if (pv >= kCrossEntropyClamp && pv <= 1.0) gin[idx] += -g / (n * pv);
                              }
                          });
}

Tensor cross_entropy_indices(const Tensor& probs, const std::vector<int>& target) {
    if (probs.ndim() != 3)
        throw ShapeError("cross_entropy_indices expects [C,H,W] probabilities, got " + shape_str(probs.shape()));
    const int channels = probs.dim(0);
    const int n = probs.dim(1) * probs.dim(2);
    if (static_cast<int>(target.size()) != n)
        throw ShapeError("cross_entropy_indices target has " + std::to_string(target.size()) + " entries for " +
                         std::to_string(n) + " locations");
    const double* p = probs.data().data();
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const int cls = target[static_cast<std::size_t>(i)];
        if (cls < 0 || cls >= channels) throw ShapeError("cross_entropy_indices target class out of range");
        loss += -std::log(std::clamp(p[cls * n + i], kCrossEntropyClamp, 1.0));
    }
    loss /= n;

    Tensor pt = probs;
    std::vector<int> tgt = target;
    return make_op_result({1}, {loss}, {probs},
                          [pt, tgt = std::move(tgt), n](TensorNode& self) {
                              if (!pt.requires_grad()) return;
                              double* gin = pt.ensure_grad().data();
                              const double* p = pt.data().data();
                              const double g = self.grad[0];
                              for (int i = 0; i < n; ++i) {
                                  const int idx = tgt[static_cast<std::size_t>(i)] * n + i;
                                  const double pv = p[idx];
                                  if (pv >= kCrossEntropyClamp && pv <= 1.0) gin[idx] += -g / (n * pv);
                              }
                          });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    Tensor inp = x;
    return make_op_result(std::move(shape), x.data(), {x},
                          [inp](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              inp.node()->accumulate_grad(self.grad);
                          });
}

Tensor mul_spatial(const Tensor& features, const Tensor& mask_hw) {
    check_chw(features, "mul_spatial");
    if (mask_hw.ndim() != 2 || mask_hw.dim(0) != features.dim(1) || mask_hw.dim(1) != features.dim(2))
        throw ShapeError("mul_spatial mask " + shape_str(mask_hw.shape()) + " vs features " + shape_str(features.shape()));
    const int c = features.dim(0), hw = features.dim(1) * features.dim(2);
    std::vector<double> out(features.data().size());
    const double* f = features.data().data();
    const double* m = mask_hw.data().data();
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) out[static_cast<std::size_t>(ch) * hw + i] = f[ch * hw + i] * m[i];
    Tensor tf = features, tm = mask_hw;
    return make_op_result(features.shape(), std::move(out), {features, mask_hw},
                          [tf, tm, c, hw](TensorNode& self) {
                              const double* g = self.grad.data();
                              if (tf.requires_grad()) {
                                  double* gf = tf.ensure_grad().data();
                                  const double* m = tm.data().data();
                                  for (int ch = 0; ch < c; ++ch)
                                      for (int i = 0; i < hw; ++i) gf[ch * hw + i] += g[ch * hw + i] * m[i];
                              }
                              if (tm.requires_grad()) {
                                  double* gm = tm.ensure_grad().data();
                                  const double* f = tf.data().data();
                                  for (int ch = 0; ch < c; ++ch)
                                      for (int i = 0; i < hw; ++i) gm[i] += g[ch * hw + i] * f[ch * hw + i];
                              }
                          });
}

Tensor sum_spatial(const Tensor& x) {
    check_chw(x, "sum_spatial");
    const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
    std::vector<double> out(static_cast<std::size_t>(c));
    const double* in = x.data().data();
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < hw; ++i) acc += in[ch * hw + i];
        out[static_cast<std::size_t>(ch)] = acc;
    }
    Tensor inp = x;
    return make_op_result({c}, std::move(out), {x},
                          [inp, c, hw](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              for (int ch = 0; ch < c; ++ch)
                                  for (int i = 0; i < hw; ++i) gin[ch * hw + i] += g[ch];
                          });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor inp = x;
    return make_op_result({1}, {acc}, {x},
                          [inp](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double g = self.grad[0];
                              const std::size_t n = inp.data().size();
                              for (std::size_t i = 0; i < n; ++i) gin[i] += g;
                          });
}

Tensor div_by_scalar(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1) throw ShapeError("div_by_scalar divisor must be a scalar tensor");
    const double sv = s.data()[0];
    std::vector<double> out(x.data().size());
    const double* in = x.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] / sv;
    Tensor tx = x, ts = s;
    return make_op_result(x.shape(), std::move(out), {x, s},
                          [tx, ts](TensorNode& self) {
                              const double* g = self.grad.data();
                              const double sv = ts.data()[0];
                              if (tx.requires_grad()) {
                                  double* gx = tx.ensure_grad().data();
                                  for (std::size_t i = 0; i < self.data.size(); ++i) gx[i] += g[i] / sv;
                              }
                              if (ts.requires_grad()) {
                                  const double* in = tx.data().data();
                                  double acc = 0.0;
                                  for (std::size_t i = 0; i < self.data.size(); ++i) acc += g[i] * in[i];
                                  ts.ensure_grad()[0] += -acc / (sv * sv);
                              }
                          });
}

Tensor tile_channels(const Tensor& vec, int h, int w) {
    if (vec.ndim() != 1) throw ShapeError("tile_channels expects a [D] vector, got " + shape_str(vec.shape()));
    const int d = vec.dim(0), hw = h * w;
    std::vector<double> out(static_cast<std::size_t>(d) * hw);
    const double* v = vec.data().data();
    for (int ch = 0; ch < d; ++ch) std::fill_n(out.begin() + static_cast<std::size_t>(ch) * hw, hw, v[ch]);
    Tensor tv = vec;
    return make_op_result({d, h, w}, std::move(out), {vec},
                          [tv, d, hw](TensorNode& self) {
                              if (!tv.requires_grad()) return;
                              double* gv = tv.ensure_grad().data();
                              const double* g = self.grad.data();
                              for (int ch = 0; ch < d; ++ch) {
                                  double acc = 0.0;
                                  for (int i = 0; i < hw; ++i) acc += g[ch * hw + i];
                                  gv[ch] += acc;
                              }
                          });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().size());
    const double* in = x.data().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * in[i];
    Tensor inp = x;
    return make_op_result(x.shape(), std::move(out), {x},
                          [inp, factor](TensorNode& self) {
                              if (!inp.requires_grad()) return;
                              double* gin = inp.ensure_grad().data();
                              const double* g = self.grad.data();
                              for (std::size_t i = 0; i < self.data.size(); ++i) gin[i] += factor * g[i];
                          });
}

Tensor softmax_stack(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) throw EmptySupportError("softmax_stack over an empty set");
    const int k = static_cast<int>(scalars.size());
    std::vector<double> vals(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        if (scalars[static_cast<std::size_t>(i)].numel() != 1) throw ShapeError("softmax_stack inputs must be scalars");
        vals[static_cast<std::size_t>(i)] = scalars[static_cast<std::size_t>(i)].data()[0];
    }
    const double m = *std::max_element(vals.begin(), vals.end());
    double sum = 0.0;
    std::vector<double> out(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(vals[static_cast<std::size_t>(i)] - m);
        sum += out[static_cast<std::size_t>(i)];
    }
    for (auto& v : out) v /= sum;

    std::vector<Tensor> held = scalars;
    return make_op_result({k}, std::move(out), scalars,
                          [held, k](TensorNode& self) {
                              const double* g = self.grad.data();
                              const double* y = self.data.data();
                              double dot = 0.0;
                              for (int i = 0; i < k; ++i) dot += g[i] * y[i];
                              for (int i = 0; i < k; ++i) {
                                  Tensor t = held[static_cast<std::size_t>(i)];
                                  if (t.requires_grad()) t.ensure_grad()[0] += y[i] * (g[i] - dot);
                              }
                          });
}

Tensor weighted_sum(const std::vector<Tensor>& features, const Tensor& weights) {
    if (features.empty()) throw EmptySupportError("weighted_sum over an empty set");
    if (weights.ndim() != 1 || weights.dim(0) != static_cast<int>(features.size()))
        throw ShapeError("weighted_sum weight count mismatch");
    const std::size_t n = features[0].data().size();
    for (const auto& f : features) check_same_shape(features[0], f, "weighted_sum");

    const double* wv = weights.data().data();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double* f = features[i].data().data();
        const double w = wv[i];
        for (std::size_t j = 0; j < n; ++j) out[j] += w * f[j];
    }

    std::vector<Tensor> parents = features;
    parents.push_back(weights);
    std::vector<Tensor> held = features;
    Tensor tw = weights;
    return make_op_result(features[0].shape(), std::move(out), parents,
                          [held, tw, n](TensorNode& self) {
                              const double* g = self.grad.data();
                              const double* wv = tw.data().data();
                              for (std::size_t i = 0; i < held.size(); ++i) {
                                  Tensor f = held[i];
                                  if (f.requires_grad()) {
                                      double* gf = f.ensure_grad().data();
                                      const double w = wv[i];
                                      for (std::size_t j = 0; j < n; ++j) gf[j] += w * g[j];
                                  }
                              }
                              if (tw.requires_grad()) {
                                  double* gw = tw.ensure_grad().data();
                                  for (std::size_t i = 0; i < held.size(); ++i) {
                                      const double* f = held[i].data().data();
                                      double acc = 0.0;
                                      for (std::size_t j = 0; j < n; ++j) acc += g[j] * f[j];
                                      gw[i] += acc;
                                  }
                              }
                          });
}

}  // namespace ops
}  // namespace canet
