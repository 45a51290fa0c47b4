"""Pure-numpy kernel implementations (fallback backend).

Rasterizers paint in place into three aligned planes: ``rgb`` (H,W,3)
float32 in [0,1], ``mask`` (H,W) int32 instance ids (0 = background) and
``depth`` (H,W) float32 normalized inverse depth. Painter's order: later
calls overwrite earlier ones.

Texture codes shared with the numba backend: 0 solid, 1 diagonal stripes,
2 dots, 3 checker. Textured pixels blend the base color toward a darkened
copy of itself.
"""

import numpy as np

NAME = "numpy"

_TEX_DARK = 0.55  # brightness factor of the dark texture phase


def _pattern(xx, yy, tex, tex_scale):
    # boolean pattern over integer pixel grids
    if tex == 1:
        return ((xx + yy) // tex_scale) % 2 == 0
    if tex == 2:
        return ((xx % tex_scale) < tex_scale // 2) & (
            (yy % tex_scale) < tex_scale // 2
        )
    if tex == 3:
        return ((xx // tex_scale) + (yy // tex_scale)) % 2 == 0
    return np.zeros_like(xx, dtype=bool)


def _paint(rgb, mask, depth, ys, xs, inside, color, inst_id, depth_val, tex, tex_scale):
    if not inside.any():
        return
    yy, xx = np.nonzero(inside)
    yy = yy + ys
    xx = xx + xs
    col = np.broadcast_to(np.asarray(color, dtype=rgb.dtype), (yy.size, 3)).copy()
    if tex != 0:
        dark = _pattern(xx, yy, tex, tex_scale)
        col[dark] *= _TEX_DARK
    rgb[yy, xx] = col
    mask[yy, xx] = inst_id
    depth[yy, xx] = depth_val


def _clip_box(h, w, x_lo, y_lo, x_hi, y_hi):
    xs = max(int(np.floor(x_lo)), 0)
    ys = max(int(np.floor(y_lo)), 0)
    xe = min(int(np.ceil(x_hi)) + 1, w)
    ye = min(int(np.ceil(y_hi)) + 1, h)
    return xs, ys, xe, ye


def fill_ellipse(rgb, mask, depth, cx, cy, rx, ry, angle, color, inst_id,
                 depth_val, tex=0, tex_scale=4):
    """Paint a filled, rotated ellipse. A pixel (x,y) is inside when its
    center maps inside the unit disc after inverse rotation/scaling."""
    h, w = mask.shape
    rmax = max(rx, ry)
    xs, ys, xe, ye = _clip_box(h, w, cx - rmax, cy - rmax, cx + rmax, cy + rmax)
    if xs >= xe or ys >= ye:
        return
    yy, xx = np.mgrid[ys:ye, xs:xe]
    dx = xx - cx
    dy = yy - cy
    ca, sa = np.cos(angle), np.sin(angle)
    u = (dx * ca + dy * sa) / rx
    v = (-dx * sa + dy * ca) / ry
    inside = u * u + v * v <= 1.0
    _paint(rgb, mask, depth, ys, xs, inside, color, inst_id, depth_val, tex, tex_scale)


def fill_ring(rgb, mask, depth, cx, cy, r_out, r_in, color, inst_id,
              depth_val, tex=0, tex_scale=4):
    """Paint an annulus (circular ring) with outer/inner radii."""
    h, w = mask.shape
    xs, ys, xe, ye = _clip_box(h, w, cx - r_out, cy - r_out, cx + r_out, cy + r_out)
    if xs >= xe or ys >= ye:
        return
    yy, xx = np.mgrid[ys:ye, xs:xe]
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2
    inside = (d2 <= r_out * r_out) & (d2 >= r_in * r_in)
    _paint(rgb, mask, depth, ys, xs, inside, color, inst_id, depth_val, tex, tex_scale)


def fill_capsule(rgb, mask, depth, x0, y0, x1, y1, radius, color, inst_id,
                 depth_val):
    """Paint a thick segment: all pixels within `radius` of the segment."""
    h, w = mask.shape
    xs, ys, xe, ye = _clip_box(
        h, w, min(x0, x1) - radius, min(y0, y1) - radius,
        max(x0, x1) + radius, max(y0, y1) + radius)
    if xs >= xe or ys >= ye:
        return
    yy, xx = np.mgrid[ys:ye, xs:xe]
    ex = x1 - x0
    ey = y1 - y0
    seg2 = ex * ex + ey * ey
    if seg2 <= 1e-12:
        t = np.zeros_like(xx, dtype=np.float64)
    else:
        t = ((xx - x0) * ex + (yy - y0) * ey) / seg2
        t = np.clip(t, 0.0, 1.0)
    px = x0 + t * ex
    py = y0 + t * ey
    inside = (xx - px) ** 2 + (yy - py) ** 2 <= radius * radius
    _paint(rgb, mask, depth, ys, xs, inside, color, inst_id, depth_val, 0, 4)


def fill_convex_polygon(rgb, mask, depth, xs_poly, ys_poly, color, inst_id,
                        depth_val, tex=0, tex_scale=4):
    """Paint a filled convex polygon given CCW or CW vertex arrays."""
    h, w = mask.shape
    xs, ys, xe, ye = _clip_box(h, w, xs_poly.min(), ys_poly.min(),
                               xs_poly.max(), ys_poly.max())
    if xs >= xe or ys >= ye:
        return
    yy, xx = np.mgrid[ys:ye, xs:xe]
    n = len(xs_poly)
    pos = np.zeros(xx.shape, dtype=bool)
    neg = np.zeros(xx.shape, dtype=bool)
    for k in range(n):
        x0, y0 = xs_poly[k], ys_poly[k]
        x1, y1 = xs_poly[(k + 1) % n], ys_poly[(k + 1) % n]
        cross = (x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0)
        pos |= cross > 0
        neg |= cross < 0
    inside = ~(pos & neg)
    _paint(rgb, mask, depth, ys, xs, inside, color, inst_id, depth_val, tex, tex_scale)


def sep_gaussian_valid(img, kernel):
    """Separable 2D filtering with a 1D kernel, valid mode.

    img: (H, W) float64; kernel: (K,) float64, K odd.
    Returns (H-K+1, W-K+1).
    """
    k = kernel.shape[0]
    # horizontal pass
    win = np.lib.stride_tricks.sliding_window_view(img, k, axis=1)
    tmp = win @ kernel
    # vertical pass
    win = np.lib.stride_tricks.sliding_window_view(tmp, k, axis=0)
    return win @ kernel


def window_all_clean(bad, k):
    """True where a k x k window contains no flagged pixel.

    bad: (H, W) bool; returns (H-k+1, W-k+1) bool.
    """
    win = np.lib.stride_tricks.sliding_window_view(bad, (k, k))
    return ~win.any(axis=(2, 3))


def _conv_out_shape(h, w, kh, kw, stride, pad):
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    return oh, ow


def conv2d_fwd(x, w, stride, pad):
    """conv2d via im2col + one GEMM. x: (N,Ci,H,W), w: (Co,Ci,kh,kw)."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh, ow = _conv_out_shape(h, wd, kh, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (N,Ci,OH,OW,kh,kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, ci * kh * kw)
    y = cols @ w.reshape(co, -1).T
    return np.ascontiguousarray(
        y.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))


def conv2d_bwd_x(gy, w, stride, pad, h, wd):
    """Input gradient of conv2d, accumulated per kernel tap."""
    n, co, oh, ow = gy.shape
    _, ci, kh, kw = w.shape
    gxp = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(gy, w[:, :, i, j], axes=([1], [0]))
            gxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += (
                contrib.transpose(0, 3, 1, 2))
    if pad:
        return np.ascontiguousarray(gxp[:, :, pad:pad + h, pad:pad + wd])
    return gxp


def conv2d_bwd_w(x, gy, kh, kw, stride, pad):
    """Weight gradient of conv2d, accumulated per kernel tap."""
    n, ci, h, wd = x.shape
    _, co, oh, ow = gy.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    gw = np.empty((co, ci, kh, kw), dtype=gy.dtype)
    for i in range(kh):
        for j in range(kw):
            xs = x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
            gw[:, :, i, j] = np.tensordot(gy, xs, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def roi_align_fwd(feat, rois, out_size):
    """Bilinear RoI pooling, one sample at each bin center.

    feat: (N,C,H,W); rois: (R,5) float32 rows [batch, x0, y0, x1, y1] in
    feature-map coordinates. Returns (R,C,S,S).
    """
    n, c, h, w = feat.shape
    r = rois.shape[0]
    s = out_size
    out = np.zeros((r, c, s, s), dtype=feat.dtype)
    grid = (np.arange(s, dtype=np.float64) + 0.5) / s
    for ri in range(r):
        b = int(rois[ri, 0])
        x0, y0, x1, y1 = (float(v) for v in rois[ri, 1:])
        sx = x0 + grid * (x1 - x0)
        sy = y0 + grid * (y1 - y0)
        ix = np.clip(sx, 0.0, w - 1.0)
        iy = np.clip(sy, 0.0, h - 1.0)
        x_lo = np.minimum(ix.astype(np.int64), w - 2).clip(0)
        y_lo = np.minimum(iy.astype(np.int64), h - 2).clip(0)
        fx = (ix - x_lo).astype(feat.dtype)
        fy = (iy - y_lo).astype(feat.dtype)
        f = feat[b]
        p00 = f[:, y_lo][:, :, x_lo]
        p01 = f[:, y_lo][:, :, x_lo + 1]
        p10 = f[:, y_lo + 1][:, :, x_lo]
        p11 = f[:, y_lo + 1][:, :, x_lo + 1]
        wy = fy[None, :, None]
        wx = fx[None, None, :]
        out[ri] = (p00 * (1 - wy) * (1 - wx) + p01 * (1 - wy) * wx
                   + p10 * wy * (1 - wx) + p11 * wy * wx)
    return out


def roi_align_bwd(gy, rois, n, h, w):
    """Scatter the RoI-align gradient back onto the feature map."""
    r, c, s, _ = gy.shape
    gfeat = np.zeros((n, c, h, w), dtype=gy.dtype)
    grid = (np.arange(s, dtype=np.float64) + 0.5) / s
    for ri in range(r):
        b = int(rois[ri, 0])
        x0, y0, x1, y1 = (float(v) for v in rois[ri, 1:])
        ix = np.clip(x0 + grid * (x1 - x0), 0.0, w - 1.0)
        iy = np.clip(y0 + grid * (y1 - y0), 0.0, h - 1.0)
        x_lo = np.minimum(ix.astype(np.int64), w - 2).clip(0)
        y_lo = np.minimum(iy.astype(np.int64), h - 2).clip(0)
        fx = (ix - x_lo).astype(gy.dtype)
        fy = (iy - y_lo).astype(gy.dtype)
        g = gy[ri]
        w00 = np.outer(1 - fy, 1 - fx)[None]
        w01 = np.outer(1 - fy, fx)[None]
        w10 = np.outer(fy, 1 - fx)[None]
        w11 = np.outer(fy, fx)[None]
        tgt = gfeat[b]
        np.add.at(tgt, (slice(None), y_lo[:, None], x_lo[None, :]), g * w00)
        np.add.at(tgt, (slice(None), y_lo[:, None], x_lo[None, :] + 1), g * w01)
        np.add.at(tgt, (slice(None), y_lo[:, None] + 1, x_lo[None, :]), g * w10)
        np.add.at(tgt, (slice(None), y_lo[:, None] + 1, x_lo[None, :] + 1), g * w11)
    return gfeat
