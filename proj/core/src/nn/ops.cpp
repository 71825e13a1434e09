#include "tsdet/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

namespace tsdet::nn {

namespace {

using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

// ---- elementwise / structural -------------------------------------------------

Var add(const Var& a, const Var& b) {
  check(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value;
  out.add_(b->value);
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb](const Tensor& g, GradStore& gs) {
    if (pa->requires_grad) gs.add(pa, g);
    if (pb->requires_grad) gs.add(pb, g);
  });
}

Var add_n(const std::vector<Var>& vs) {
  check(!vs.empty(), "add_n: empty");
  Tensor out = vs[0]->value;
  for (std::size_t i = 1; i < vs.size(); ++i) {
    check(out.same_shape(vs[i]->value), "add_n: shape mismatch");
    out.add_(vs[i]->value);
  }
  std::vector<Node*> raw;
  for (const auto& v : vs) raw.push_back(v.get());
  return make_node(std::move(out), vs, [raw](const Tensor& g, GradStore& gs) {
    for (Node* p : raw) {
      if (p->requires_grad) gs.add(p, g);
    }
  });
}

Var scale(const Var& a, Scalar s) {
  Tensor out = a->value;
  out.scale_(s);
  Node* pa = a.get();
  return make_node(std::move(out), {a}, [pa, s](const Tensor& g, GradStore& gs) {
    gs.add_scaled(pa, g, s);
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = std::max(v, 0.0);
  Node* pa = a.get();
  Tensor saved = out;  // positive where input positive
  return make_node(std::move(out), {a}, [pa, saved](const Tensor& g, GradStore& gs) {
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
      if (saved.data[i] <= 0.0) dx.data[i] = 0.0;
    }
    gs.add(pa, dx);
  });
}

Var reshape(const Var& a, std::vector<std::int64_t> shape) {
  check(numel_of(shape) == a->value.numel(), "reshape: numel mismatch");
  Tensor out(shape, a->value.data);
  Node* pa = a.get();
  std::vector<std::int64_t> in_shape = a->value.shape;
  return make_node(std::move(out), {a}, [pa, in_shape](const Tensor& g, GradStore& gs) {
    gs.add(pa, Tensor(in_shape, g.data));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  check(a->value.ndim() == 2 && b->value.ndim() == 2, "concat_cols: need 2-d");
  check(a->value.dim(0) == b->value.dim(0), "concat_cols: row mismatch");
  std::int64_t n = a->value.dim(0), da = a->value.dim(1), db = b->value.dim(1);
  Tensor out({n, da + db});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(a->value.data.data() + i * da, da, out.data.data() + i * (da + db));
    std::copy_n(b->value.data.data() + i * db, db, out.data.data() + i * (da + db) + da);
  }
  Node* pa = a.get();
  Node* pb = b.get();
  return make_node(std::move(out), {a, b}, [pa, pb, n, da, db](const Tensor& g, GradStore& gs) {
    if (pa->requires_grad) {
      Tensor ga({n, da});
      for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(g.data.data() + i * (da + db), da, ga.data.data() + i * da);
      }
      gs.add(pa, ga);
    }
    if (pb->requires_grad) {
      Tensor gb({n, db});
      for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(g.data.data() + i * (da + db) + da, db, gb.data.data() + i * db);
      }
      gs.add(pb, gb);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_rows: empty");
  std::int64_t k = parts[0]->value.ndim() == 2 ? parts[0]->value.dim(1) : 1;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    std::int64_t pk = p->value.ndim() == 2 ? p->value.dim(1) : 1;
    check(pk == k, "concat_rows: column mismatch");
    total += p->value.dim(0);
  }
  Tensor out = k == 1 && parts[0]->value.ndim() == 1 ? Tensor({total}) : Tensor({total, k});
  std::vector<std::int64_t> offsets;
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy_n(p->value.data.data(), p->value.numel(), out.data.data() + off * k);
    off += p->value.dim(0);
  }
  std::vector<Node*> raw;
  std::vector<std::vector<std::int64_t>> shapes;
  for (const auto& p : parts) {
    raw.push_back(p.get());
    shapes.push_back(p->value.shape);
  }
  return make_node(std::move(out), parts, [raw, shapes, offsets, k](const Tensor& g, GradStore& gs) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!raw[i]->requires_grad) continue;
      Tensor gp(shapes[i]);
      std::copy_n(g.data.data() + offsets[i] * k, gp.numel(), gp.data.data());
      gs.add(raw[i], gp);
    }
  });
}

Var stop_gradient(const Var& a) {
  return constant(a->value);
}

Var gather_rows(const Var& x, std::vector<std::int64_t> idx) {
  check(x->value.ndim() == 2, "gather_rows: need 2-d");
  std::int64_t n = x->value.dim(0), d = x->value.dim(1);
  std::int64_t m = static_cast<std::int64_t>(idx.size());
  Tensor out({m, d});
  for (std::int64_t i = 0; i < m; ++i) {
    check(idx[i] >= 0 && idx[i] < n, "gather_rows: index out of range");
    std::copy_n(x->value.data.data() + idx[i] * d, d, out.data.data() + i * d);
  }
  Node* px = x.get();
  return make_node(std::move(out), {x}, [px, idx, n, d](const Tensor& g, GradStore& gs) {
    Tensor gx({n, d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Scalar* dst = gx.data.data() + idx[i] * d;
      const Scalar* src = g.data.data() + static_cast<std::int64_t>(i) * d;
      for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    gs.add(px, gx);
  });
}

Var gather_cols4(const Var& x, std::vector<std::int64_t> class_of_row) {
  check(x->value.ndim() == 2, "gather_cols4: need 2-d");
  std::int64_t n = x->value.dim(0), cols = x->value.dim(1);
  check(static_cast<std::int64_t>(class_of_row.size()) == n, "gather_cols4: row count mismatch");
  Tensor out({n, 4});
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t c0 = class_of_row[i] * 4;
    check(c0 >= 0 && c0 + 4 <= cols, "gather_cols4: class out of range");
    std::copy_n(x->value.data.data() + i * cols + c0, 4, out.data.data() + i * 4);
  }
  Node* px = x.get();
  return make_node(std::move(out), {x}, [px, class_of_row, n, cols](const Tensor& g, GradStore& gs) {
    Tensor gx({n, cols});
    for (std::int64_t i = 0; i < n; ++i) {
      std::int64_t c0 = class_of_row[i] * 4;
      std::copy_n(g.data.data() + i * 4, 4, gx.data.data() + i * cols + c0);
    }
    gs.add(px, gx);
  });
}

// ---- conv ----------------------------------------------------------------------

namespace {

struct ConvDims {
  std::int64_t C, H, W, K, kh, kw, OH, OW;
  int stride, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  ConvDims d;
  d.C = x.dim(0); d.H = x.dim(1); d.W = x.dim(2);
  d.K = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
  d.stride = stride; d.pad = pad;
  d.OH = (d.H + 2 * pad - d.kh) / stride + 1;
  d.OW = (d.W + 2 * pad - d.kw) / stride + 1;
  return d;
}

// col is [C*kh*kw, OH*OW]
Tensor im2col(const Tensor& x, const ConvDims& d) {
  Tensor col({d.C * d.kh * d.kw, d.OH * d.OW});
  const Scalar* xp = x.data.data();
  Scalar* cp = col.data.data();
  for (std::int64_t c = 0; c < d.C; ++c) {
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      for (std::int64_t kx = 0; kx < d.kw; ++kx) {
        std::int64_t row = (c * d.kh + ky) * d.kw + kx;
        Scalar* dst = cp + row * d.OH * d.OW;
        for (std::int64_t oy = 0; oy < d.OH; ++oy) {
          std::int64_t iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.H) {
            std::fill_n(dst + oy * d.OW, d.OW, 0.0);
            continue;
          }
          const Scalar* src = xp + (c * d.H + iy) * d.W;
          for (std::int64_t ox = 0; ox < d.OW; ++ox) {
            std::int64_t ix = ox * d.stride + kx - d.pad;
            dst[oy * d.OW + ox] = (ix >= 0 && ix < d.W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
  return col;
}

Tensor col2im(const Tensor& col, const ConvDims& d) {
  Tensor x({d.C, d.H, d.W});
  Scalar* xp = x.data.data();
  const Scalar* cp = col.data.data();
  for (std::int64_t c = 0; c < d.C; ++c) {
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      for (std::int64_t kx = 0; kx < d.kw; ++kx) {
        std::int64_t row = (c * d.kh + ky) * d.kw + kx;
        const Scalar* src = cp + row * d.OH * d.OW;
        for (std::int64_t oy = 0; oy < d.OH; ++oy) {
          std::int64_t iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.H) continue;
          Scalar* dst = xp + (c * d.H + iy) * d.W;
          for (std::int64_t ox = 0; ox < d.OW; ++ox) {
            std::int64_t ix = ox * d.stride + kx - d.pad;
            if (ix >= 0 && ix < d.W) dst[ix] += src[oy * d.OW + ox];
          }
        }
      }
    }
  }
  return x;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check(x->value.ndim() == 3, "conv2d: input must be [C,H,W]");
  check(w->value.ndim() == 4, "conv2d: weight must be [K,C,kh,kw]");
  check(x->value.dim(0) == w->value.dim(1), "conv2d: channel mismatch");
  ConvDims d = conv_dims(x->value, w->value, stride, pad);
  check(d.OH > 0 && d.OW > 0, "conv2d: output would be empty");

  Tensor col = im2col(x->value, d);
  Tensor out({d.K, d.OH, d.OW});
  {
    MapC wm(w->value.data.data(), d.K, d.C * d.kh * d.kw);
    MapC cm(col.data.data(), d.C * d.kh * d.kw, d.OH * d.OW);
    MapM om(out.data.data(), d.K, d.OH * d.OW);
    om.noalias() = wm * cm;
  }
  for (std::int64_t k = 0; k < d.K; ++k) {
    Scalar bias = b->value[k];
    Scalar* row = out.data.data() + k * d.OH * d.OW;
    for (std::int64_t i = 0; i < d.OH * d.OW; ++i) row[i] += bias;
  }

  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b.get();
  auto saved_col = std::make_shared<Tensor>(std::move(col));
  Tensor wval = w->value;  // needed for dX
  return make_node(std::move(out), {x, w, b},
                   [px, pw, pb, d, saved_col, wval](const Tensor& g, GradStore& gs) {
    MapC gm(g.data.data(), d.K, d.OH * d.OW);
    if (pw->requires_grad) {
      Tensor dw({d.K, d.C, d.kh, d.kw});
      MapC cm(saved_col->data.data(), d.C * d.kh * d.kw, d.OH * d.OW);
      MapM dwm(dw.data.data(), d.K, d.C * d.kh * d.kw);
      dwm.noalias() = gm * cm.transpose();
      gs.add(pw, dw);
    }
    if (pb->requires_grad) {
      Tensor db({d.K});
      for (std::int64_t k = 0; k < d.K; ++k) {
        const Scalar* row = g.data.data() + k * d.OH * d.OW;
        Scalar s = 0.0;
        for (std::int64_t i = 0; i < d.OH * d.OW; ++i) s += row[i];
        db[k] = s;
      }
      gs.add(pb, db);
    }
    if (px->requires_grad) {
      Tensor dcol({d.C * d.kh * d.kw, d.OH * d.OW});
      MapC wm(wval.data.data(), d.K, d.C * d.kh * d.kw);
      MapM dcm(dcol.data.data(), d.C * d.kh * d.kw, d.OH * d.OW);
      dcm.noalias() = wm.transpose() * gm;
      gs.add(px, col2im(dcol, d));
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  check(x->value.ndim() == 2 && w->value.ndim() == 2, "linear: need 2-d");
  std::int64_t n = x->value.dim(0), in = x->value.dim(1), out_dim = w->value.dim(1);
  check(w->value.dim(0) == in, "linear: dim mismatch");
  check(b->value.numel() == out_dim, "linear: bias mismatch");

  Tensor out({n, out_dim});
  {
    MapC xm(x->value.data.data(), n, in);
    MapC wm(w->value.data.data(), in, out_dim);
    MapM om(out.data.data(), n, out_dim);
    om.noalias() = xm * wm;
  }
  for (std::int64_t i = 0; i < n; ++i) {
    Scalar* row = out.data.data() + i * out_dim;
    for (std::int64_t j = 0; j < out_dim; ++j) row[j] += b->value[j];
  }

  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b.get();
  Tensor xval = x->value;
  Tensor wval = w->value;
  return make_node(std::move(out), {x, w, b},
                   [px, pw, pb, xval, wval, n, in, out_dim](const Tensor& g, GradStore& gs) {
    MapC gm(g.data.data(), n, out_dim);
    if (pw->requires_grad) {
      Tensor dw({in, out_dim});
      MapC xm(xval.data.data(), n, in);
      MapM dwm(dw.data.data(), in, out_dim);
      dwm.noalias() = xm.transpose() * gm;
      gs.add(pw, dw);
    }
    if (pb->requires_grad) {
      Tensor db({out_dim});
      for (std::int64_t i = 0; i < n; ++i) {
        const Scalar* row = g.data.data() + i * out_dim;
        for (std::int64_t j = 0; j < out_dim; ++j) db[j] += row[j];
      }
      gs.add(pb, db);
    }
    if (px->requires_grad) {
      Tensor dx({n, in});
      MapC wm(wval.data.data(), in, out_dim);
      MapM dxm(dx.data.data(), n, in);
      dxm.noalias() = gm * wm.transpose();
      gs.add(px, dx);
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  check(x->value.ndim() == 3, "group_norm: input must be [C,H,W]");
  std::int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
  check(C % groups == 0, "group_norm: channels not divisible by groups");
  check(gamma->value.numel() == C && beta->value.numel() == C, "group_norm: affine size mismatch");
  std::int64_t cg = C / groups;
  std::int64_t gsize = cg * H * W;

  Tensor xhat({C, H, W});
  std::vector<Scalar> invstd(groups);
  for (int g = 0; g < groups; ++g) {
    const Scalar* xs = x->value.data.data() + g * gsize;
    Scalar mean = 0.0;
    for (std::int64_t i = 0; i < gsize; ++i) mean += xs[i];
    mean /= gsize;
    Scalar var = 0.0;
    for (std::int64_t i = 0; i < gsize; ++i) {
      Scalar dv = xs[i] - mean;
      var += dv * dv;
    }
    var /= gsize;
    Scalar is = 1.0 / std::sqrt(var + eps);
    invstd[g] = is;
    Scalar* xh = xhat.data.data() + g * gsize;
    for (std::int64_t i = 0; i < gsize; ++i) xh[i] = (xs[i] - mean) * is;
  }

  Tensor out({C, H, W});
  for (std::int64_t c = 0; c < C; ++c) {
    Scalar gm = gamma->value[c], bt = beta->value[c];
    const Scalar* xh = xhat.data.data() + c * H * W;
    Scalar* op = out.data.data() + c * H * W;
    for (std::int64_t i = 0; i < H * W; ++i) op[i] = gm * xh[i] + bt;
  }

  Node* px = x.get();
  Node* pg = gamma.get();
  Node* pb = beta.get();
  auto saved_xhat = std::make_shared<Tensor>(std::move(xhat));
  Tensor gval = gamma->value;
  int ngroups = groups;
  return make_node(std::move(out), {x, gamma, beta},
                   [px, pg, pb, saved_xhat, gval, invstd, ngroups, C, H, W, cg, gsize](
                       const Tensor& g, GradStore& gs) {
    const Tensor& xh = *saved_xhat;
    if (pg->requires_grad) {
      Tensor dg({C});
      for (std::int64_t c = 0; c < C; ++c) {
        const Scalar* gp = g.data.data() + c * H * W;
        const Scalar* xp = xh.data.data() + c * H * W;
        Scalar s = 0.0;
        for (std::int64_t i = 0; i < H * W; ++i) s += gp[i] * xp[i];
        dg[c] = s;
      }
      gs.add(pg, dg);
    }
    if (pb->requires_grad) {
      Tensor db({C});
      for (std::int64_t c = 0; c < C; ++c) {
        const Scalar* gp = g.data.data() + c * H * W;
        Scalar s = 0.0;
        for (std::int64_t i = 0; i < H * W; ++i) s += gp[i];
        db[c] = s;
      }
      gs.add(pb, db);
    }
    if (px->requires_grad) {
      Tensor dx({C, H, W});
      for (int grp = 0; grp < ngroups; ++grp) {
        // dxhat = g * gamma (per channel); then the usual normalization pullback.
        Scalar sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::int64_t cc = 0; cc < cg; ++cc) {
          std::int64_t c = grp * cg + cc;
          const Scalar* gp = g.data.data() + c * H * W;
          const Scalar* xp = xh.data.data() + c * H * W;
          Scalar gm = gval[c];
          for (std::int64_t i = 0; i < H * W; ++i) {
            Scalar dxh = gp[i] * gm;
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xp[i];
          }
        }
        Scalar inv_n = 1.0 / static_cast<Scalar>(gsize);
        for (std::int64_t cc = 0; cc < cg; ++cc) {
          std::int64_t c = grp * cg + cc;
          const Scalar* gp = g.data.data() + c * H * W;
          const Scalar* xp = xh.data.data() + c * H * W;
          Scalar* dp = dx.data.data() + c * H * W;
          Scalar gm = gval[c];
          for (std::int64_t i = 0; i < H * W; ++i) {
            Scalar dxh = gp[i] * gm;
            dp[i] = invstd[grp] * (dxh - inv_n * sum_dxhat - xp[i] * inv_n * sum_dxhat_xhat);
          }
        }
      }
      gs.add(px, dx);
    }
  });
}

Var upsample_nearest2(const Var& x) {
  check(x->value.ndim() == 3, "upsample_nearest2: input must be [C,H,W]");
  std::int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
  Tensor out({C, 2 * H, 2 * W});
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t y = 0; y < 2 * H; ++y) {
      const Scalar* src = x->value.data.data() + (c * H + y / 2) * W;
      Scalar* dst = out.data.data() + (c * 2 * H + y) * 2 * W;
      for (std::int64_t xx = 0; xx < 2 * W; ++xx) dst[xx] = src[xx / 2];
    }
  }
  Node* px = x.get();
  return make_node(std::move(out), {x}, [px, C, H, W](const Tensor& g, GradStore& gs) {
    Tensor dx({C, H, W});
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t y = 0; y < 2 * H; ++y) {
        Scalar* dst = dx.data.data() + (c * H + y / 2) * W;
        const Scalar* src = g.data.data() + (c * 2 * H + y) * 2 * W;
        for (std::int64_t xx = 0; xx < 2 * W; ++xx) dst[xx / 2] += src[xx];
      }
    }
    gs.add(px, dx);
  });
}

Var crop2d(const Var& x, std::int64_t out_h, std::int64_t out_w) {
  check(x->value.ndim() == 3, "crop2d: input must be [C,H,W]");
  std::int64_t C = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
  check(out_h <= H && out_w <= W, "crop2d: output larger than input");
  if (out_h == H && out_w == W) return x;
  Tensor out({C, out_h, out_w});
  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t y = 0; y < out_h; ++y) {
      std::copy_n(x->value.data.data() + (c * H + y) * W, out_w,
                  out.data.data() + (c * out_h + y) * out_w);
    }
  }
  Node* px = x.get();
  return make_node(std::move(out), {x}, [px, C, H, W, out_h, out_w](const Tensor& g, GradStore& gs) {
    Tensor dx({C, H, W});
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t y = 0; y < out_h; ++y) {
        std::copy_n(g.data.data() + (c * out_h + y) * out_w, out_w,
                    dx.data.data() + (c * H + y) * W);
      }
    }
    gs.add(px, dx);
  });
}

// ---- roi align ------------------------------------------------------------------

namespace {

struct BilinearPoint {
  std::int64_t x_low, x_high, y_low, y_high;
  Scalar w1, w2, w3, w4;  // (yl,xl), (yl,xh), (yh,xl), (yh,xh)
};

BilinearPoint bilinear_at(Scalar px, Scalar py, std::int64_t H, std::int64_t W) {
  px = std::clamp(px, 0.0, static_cast<Scalar>(W - 1));
  py = std::clamp(py, 0.0, static_cast<Scalar>(H - 1));
  BilinearPoint p;
  p.x_low = static_cast<std::int64_t>(px);
  p.y_low = static_cast<std::int64_t>(py);
  p.x_high = std::min(p.x_low + 1, W - 1);
  p.y_high = std::min(p.y_low + 1, H - 1);
  Scalar lx = px - p.x_low, ly = py - p.y_low;
  p.w1 = (1 - ly) * (1 - lx);
  p.w2 = (1 - ly) * lx;
  p.w3 = ly * (1 - lx);
  p.w4 = ly * lx;
  return p;
}

}  // namespace

Var roi_align(const Var& feat, const std::vector<Box>& rois, double spatial_scale,
              int resolution, int sampling) {
  check(feat->value.ndim() == 3, "roi_align: feature must be [C,H,W]");
  std::int64_t C = feat->value.dim(0), H = feat->value.dim(1), W = feat->value.dim(2);
  std::int64_t N = static_cast<std::int64_t>(rois.size());
  std::int64_t R = resolution;
  Tensor out({N, C * R * R});
  Scalar inv_count = 1.0 / static_cast<Scalar>(sampling * sampling);

  for (std::int64_t r = 0; r < N; ++r) {
    const Box& roi = rois[r];
    Scalar rx = roi.x1 * spatial_scale;
    Scalar ry = roi.y1 * spatial_scale;
    Scalar rw = std::max(roi.width() * spatial_scale, 1e-6);
    Scalar rh = std::max(roi.height() * spatial_scale, 1e-6);
    Scalar bin_w = rw / R, bin_h = rh / R;
    for (std::int64_t by = 0; by < R; ++by) {
      for (std::int64_t bx = 0; bx < R; ++bx) {
        for (int sy = 0; sy < sampling; ++sy) {
          for (int sx = 0; sx < sampling; ++sx) {
            Scalar px = rx + (bx + (sx + 0.5) / sampling) * bin_w;
            Scalar py = ry + (by + (sy + 0.5) / sampling) * bin_h;
            BilinearPoint p = bilinear_at(px, py, H, W);
            for (std::int64_t c = 0; c < C; ++c) {
              const Scalar* fp = feat->value.data.data() + c * H * W;
              Scalar v = p.w1 * fp[p.y_low * W + p.x_low] + p.w2 * fp[p.y_low * W + p.x_high] +
                         p.w3 * fp[p.y_high * W + p.x_low] + p.w4 * fp[p.y_high * W + p.x_high];
              out.data[r * C * R * R + (c * R + by) * R + bx] += v * inv_count;
            }
          }
        }
      }
    }
  }

  Node* pf = feat.get();
  std::vector<Box> saved_rois = rois;
  int samp = sampling;
  return make_node(std::move(out), {feat},
                   [pf, saved_rois, spatial_scale, R, samp, C, H, W, inv_count](
                       const Tensor& g, GradStore& gs) {
    Tensor dfeat({C, H, W});
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(saved_rois.size()); ++r) {
      const Box& roi = saved_rois[r];
      Scalar rx = roi.x1 * spatial_scale;
      Scalar ry = roi.y1 * spatial_scale;
      Scalar rw = std::max(roi.width() * spatial_scale, 1e-6);
      Scalar rh = std::max(roi.height() * spatial_scale, 1e-6);
      Scalar bin_w = rw / R, bin_h = rh / R;
      for (std::int64_t by = 0; by < R; ++by) {
        for (std::int64_t bx = 0; bx < R; ++bx) {
          for (int sy = 0; sy < samp; ++sy) {
            for (int sx = 0; sx < samp; ++sx) {
              Scalar px = rx + (bx + (sx + 0.5) / samp) * bin_w;
              Scalar py = ry + (by + (sy + 0.5) / samp) * bin_h;
              BilinearPoint p = bilinear_at(px, py, H, W);
              for (std::int64_t c = 0; c < C; ++c) {
                Scalar go = g.data[r * C * R * R + (c * R + by) * R + bx] * inv_count;
                Scalar* dp = dfeat.data.data() + c * H * W;
                dp[p.y_low * W + p.x_low] += go * p.w1;
                dp[p.y_low * W + p.x_high] += go * p.w2;
                dp[p.y_high * W + p.x_low] += go * p.w3;
                dp[p.y_high * W + p.x_high] += go * p.w4;
              }
            }
          }
        }
      }
    }
    gs.add(pf, dfeat);
  });
}

Var rpn_permute(const Var& x, int num_anchors, int k) {
  check(x->value.ndim() == 3, "rpn_permute: input must be [A*k,H,W]");
  std::int64_t A = num_anchors, K = k;
  std::int64_t H = x->value.dim(1), W = x->value.dim(2);
  check(x->value.dim(0) == A * K, "rpn_permute: channel count != A*k");
  Tensor out({H * W * A, K});
  for (std::int64_t a = 0; a < A; ++a) {
    for (std::int64_t j = 0; j < K; ++j) {
      const Scalar* src = x->value.data.data() + (a * K + j) * H * W;
      for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t xx = 0; xx < W; ++xx) {
          out.data[((y * W + xx) * A + a) * K + j] = src[y * W + xx];
        }
      }
    }
  }
  Node* px = x.get();
  return make_node(std::move(out), {x}, [px, A, K, H, W](const Tensor& g, GradStore& gs) {
    Tensor dx({A * K, H, W});
    for (std::int64_t a = 0; a < A; ++a) {
      for (std::int64_t j = 0; j < K; ++j) {
        Scalar* dst = dx.data.data() + (a * K + j) * H * W;
        for (std::int64_t y = 0; y < H; ++y) {
          for (std::int64_t xx = 0; xx < W; ++xx) {
            dst[y * W + xx] = g.data[((y * W + xx) * A + a) * K + j];
          }
        }
      }
    }
    gs.add(px, dx);
  });
}

// ---- losses --------------------------------------------------------------------

Var weighted_sum(const Var& x, const Tensor& weights) {
  check(x->value.same_shape(weights), "weighted_sum: shape mismatch");
  Scalar s = 0.0;
  for (std::int64_t i = 0; i < x->value.numel(); ++i) s += x->value[i] * weights[i];
  Node* px = x.get();
  Tensor w = weights;
  return make_node(Tensor::scalar(s), {x}, [px, w](const Tensor& g, GradStore& gs) {
    gs.add_scaled(px, w, g.item());
  });
}

Var softmax_ce_mean(const Var& logits, const std::vector<int>& labels) {
  check(logits->value.ndim() == 2, "softmax_ce_mean: logits must be [M,K]");
  std::int64_t m = logits->value.dim(0), k = logits->value.dim(1);
  check(static_cast<std::int64_t>(labels.size()) == m, "softmax_ce_mean: label count mismatch");
  check(m >= 1, "softmax_ce_mean: empty batch");
  for (int y : labels) check(y >= 0 && y < k, "softmax_ce_mean: label out of range");

  Tensor probs = softmax_rows(logits->value);
  Scalar loss = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    // -log p_y computed from the log-sum-exp for numerical honesty.
    const Scalar* row = logits->value.data.data() + i * k;
    Scalar mx = row[0];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    Scalar lse = 0.0;
    for (std::int64_t j = 0; j < k; ++j) lse += std::exp(row[j] - mx);
    loss += mx + std::log(lse) - row[labels[i]];
  }
  loss /= static_cast<Scalar>(m);

  Node* pl = logits.get();
  auto saved = std::make_shared<Tensor>(std::move(probs));
  return make_node(Tensor::scalar(loss), {logits},
                   [pl, saved, labels, m, k](const Tensor& g, GradStore& gs) {
    Scalar go = g.item() / static_cast<Scalar>(m);
    Tensor dx({m, k});
    for (std::int64_t i = 0; i < m; ++i) {
      const Scalar* pr = saved->data.data() + i * k;
      Scalar* dp = dx.data.data() + i * k;
      for (std::int64_t j = 0; j < k; ++j) dp[j] = pr[j] * go;
      dp[labels[i]] -= go;
    }
    gs.add(pl, dx);
  });
}

Var sigmoid_bce_mean(const Var& logits, const std::vector<Scalar>& targets) {
  std::int64_t m = logits->value.numel();
  check(static_cast<std::int64_t>(targets.size()) == m, "sigmoid_bce_mean: target count mismatch");
  check(m >= 1, "sigmoid_bce_mean: empty batch");

  Scalar loss = 0.0;
  std::vector<Scalar> sig(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < m; ++i) {
    Scalar z = logits->value[i], t = targets[i];
    loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    sig[i] = 1.0 / (1.0 + std::exp(-z));
  }
  loss /= static_cast<Scalar>(m);

  Node* pl = logits.get();
  std::vector<std::int64_t> in_shape = logits->value.shape;
  return make_node(Tensor::scalar(loss), {logits},
                   [pl, sig, targets, m, in_shape](const Tensor& g, GradStore& gs) {
    Scalar go = g.item() / static_cast<Scalar>(m);
    Tensor dx(in_shape);
    for (std::int64_t i = 0; i < m; ++i) dx[i] = (sig[i] - targets[i]) * go;
    gs.add(pl, dx);
  });
}

Var smooth_l1(const Var& pred, const Tensor& target, double beta, double normalizer) {
  check(pred->value.same_shape(target), "smooth_l1: shape mismatch");
  check(beta > 0.0 && normalizer > 0.0, "smooth_l1: beta/normalizer must be positive");
  std::int64_t n = pred->value.numel();
  Scalar loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    Scalar d = pred->value[i] - target[i];
    Scalar ad = std::abs(d);
    loss += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
  }
  loss /= normalizer;

  Node* pp = pred.get();
  Tensor tval = target;
  Tensor pval = pred->value;
  return make_node(Tensor::scalar(loss), {pred},
                   [pp, tval, pval, beta, normalizer, n](const Tensor& g, GradStore& gs) {
    Scalar go = g.item() / normalizer;
    Tensor dx(pval.shape);
    for (std::int64_t i = 0; i < n; ++i) {
      Scalar d = pval[i] - tval[i];
      dx[i] = go * std::clamp(d / beta, -1.0, 1.0);
    }
    gs.add(pp, dx);
  });
}

}  // namespace tsdet::nn
